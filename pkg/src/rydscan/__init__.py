"""Virtual Rydberg-atom near-field scanning: EIT/AT spectra, synthetic
microwave scenes, raster scans, peak fitting and map metrics."""

__version__ = "0.1.0"

from .errors import (DomainError, FitError, NumericError, ParseError, QuadratureError,  # noqa: F401
                     RydscanError, ScanError)
from .physics import (AntennaAperture, FieldRegion, WaveGeometry, at_splitting_to_field,  # noqa: F401
                      classify_region, field_to_at_splitting, rdnf_outer_bound)
from .spectroscopy import Branch, LadderConfig, Spectrum, synthesize_spectrum  # noqa: F401
from .analysis import extract_at_splitting, fit_baseline_and_peaks, find_peaks  # noqa: F401
from .sources import (HornAperture, OccludingTag, PerturbingProbe, PointRadiator, Scene,  # noqa: F401
                      horn_scene, wire_pair_scene)
from .scan import FieldMap, ScanPlan, extract_profile, load_map, make_plan, run_virtual_scan, save_map  # noqa: F401
from .metrics import SsimParams, normalize_map, sbr, snr_box, ssim_index  # noqa: F401
