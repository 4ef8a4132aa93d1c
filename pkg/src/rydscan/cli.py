"""``rydscan`` command line.

Lengths are millimetres and frequencies MHz (detunings) or GHz (microwave
carrier) on the command line; everything is converted to SI here.

Exit codes: 0 success, 2 usage or invalid input (nothing written),
3 numeric failure inside a module.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import fit_baseline_and_peaks, peak_separation
from .errors import DomainError, ParseError, RydscanError
from .metrics import (SsimParams, background_subtract, dump_report, metric_report, normalize_map,
                      profile_sbr, snr_box, ssim_index)
from .physics import E_A0, AntennaAperture, classify_region, rdnf_outer_bound
from .plotting import write_gnuplot_curve, write_ppm
from .scan import difference, extract_profile, load_map, make_plan, run_virtual_scan, save_map
from .sources import load_scene
from .spectroscopy import LadderConfig, load_ladder, save_spectrum, synthesize_spectrum

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
MM, MHZ, GHZ = 1e-3, 1e6, 1e9


class UsageError(Exception):
    """Invalid input detected before any work is done."""


def _atomic_write(path, writer):
    """Run ``writer(tmp_path)`` then move the result into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=".rydscan-", dir=path.parent if str(path.parent) else ".")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _write_json(path, data):
    _atomic_write(path, lambda tmp: dump_report(data, tmp))


def _validated(fn, *args, **kwargs):
    """Call a constructor/loader; domain and parse errors become usage errors."""
    try:
        return fn(*args, **kwargs)
    except FileNotFoundError as exc:
        raise UsageError(f"file not found: {exc.filename}") from exc
    except (DomainError, ParseError) as exc:
        raise UsageError(str(exc)) from exc


def _ladder(args) -> LadderConfig:
    config = _validated(load_ladder, args.config) if args.config else LadderConfig()
    overrides = {}
    if getattr(args, "delta_p0_mhz", None) is not None:
        overrides["delta_p0"] = args.delta_p0_mhz * MHZ
    if getattr(args, "omega_rf_mhz", None) is not None:
        overrides["omega_rf"] = args.omega_rf_mhz * MHZ
    if overrides:
        d = config.to_dict()
        d.update({f"{k}_hz": v for k, v in overrides.items()})
        config = _validated(LadderConfig.from_dict, d)
    return config


# --------------------------------------------------------------------------
# Subcommands


def cmd_spectrum(args) -> int:
    config = _ladder(args)
    start, stop, step = (v * MHZ for v in args.grid_mhz)
    if not (step > 0 and stop > start):
        raise UsageError("--grid-mhz needs START < STOP and STEP > 0 (MHz)")
    grid = start + step * np.arange(int(np.floor((stop - start) / step + 1e-9)) + 1)
    spectrum = synthesize_spectrum(config, grid)
    _atomic_write(args.output, lambda tmp: _save_spectrum_pair(spectrum, tmp, args.output))
    if args.plot:
        write_gnuplot_curve(grid / MHZ, {"signal": spectrum.values}, args.plot,
                            xlabel="coupling detuning (MHz)", ylabel="EIT signal (arb.)")
    print(f"wrote {args.output} ({len(grid)} points)")
    return EXIT_OK


def _save_spectrum_pair(spectrum, tmp, final):
    # The sidecar is named after the final path so the pair stays together.
    save_spectrum(spectrum, tmp)
    os.replace(str(tmp) + ".json", str(final) + ".json")


def cmd_scan(args) -> int:
    scene = _validated(load_scene, args.scene)
    ladder = _ladder(args) if args.mode == "spectroscopic" else None
    dx = args.dx_mm if args.dx_mm is not None else args.step_mm
    dy = args.dy_mm if args.dy_mm is not None else args.step_mm
    plan = _validated(make_plan, args.z_mm * MM, (args.x0_mm * MM, args.y0_mm * MM),
                      (args.lx_mm * MM, args.ly_mm * MM), (dx * MM, dy * MM), args.ordering)
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    if args.noise_vpm < 0:
        raise UsageError("--noise-vpm must be non-negative (V/m)")
    if not args.dipole_ea0 > 0:
        raise UsageError("--dipole-ea0 must be positive (units of e a0)")
    fmap = run_virtual_scan(plan, scene, ladder, args.mode, jobs=args.jobs, noise=args.noise_vpm,
                            seed=args.seed, dipole=args.dipole_ea0 * E_A0)
    _atomic_write(args.output, lambda tmp: save_map(fmap, tmp))
    if args.ppm:
        write_ppm(fmap.values, args.ppm, scale=args.ppm_scale)
    ny, nx = plan.shape
    print(f"wrote {args.output} ({nx}x{ny}, {len(fmap.unresolved)} unresolved)")
    return EXIT_OK


def cmd_compare(args) -> int:
    a = _validated(load_map, args.map_a)
    b = _validated(load_map, args.map_b)
    params = _validated(SsimParams, window=args.window, stride=args.stride)
    if a.plan.shape != b.plan.shape:
        raise UsageError(f"maps have different shapes {a.plan.shape} and {b.plan.shape}")
    result = ssim_index(normalize_map(a.values), normalize_map(b.values), params)
    diff = normalize_map(a.values) - normalize_map(b.values)
    report = metric_report(result, mean_abs_difference=float(np.mean(np.abs(diff))))
    if args.output:
        _write_json(args.output, report)
    if args.diff_ppm:
        write_ppm(diff, args.diff_ppm, vmin=-1.0, vmax=1.0, scale=args.ppm_scale)
    print(f"SSIM {result.mean:.6f}")
    return EXIT_OK


def cmd_resolve(args) -> int:
    fmap = _validated(load_map, args.map)
    profile = _validated(extract_profile, fmap, args.axis, args.coord_mm * MM)
    if args.n_peaks not in (1, 2):
        raise UsageError("--n-peaks must be 1 or 2")
    if not 0 <= args.baseline_degree <= 2:
        raise UsageError("--baseline-degree must be 0, 1 or 2")
    exclusion = None
    if args.exclusion_mm is not None:
        exclusion = tuple(args.exclusion_mm)
        if not exclusion[1] > exclusion[0]:
            raise UsageError("--exclusion-mm needs LO < HI (mm)")
    # The fit runs on the millimetre axis so the report is in mm.
    fit = fit_baseline_and_peaks(profile.positions / MM, profile.values, n_peaks=args.n_peaks,
                                 exclusion=exclusion, baseline_degree=args.baseline_degree)
    report = fit.to_dict()
    report["axis_units"] = "mm"
    report["profile"] = {"axis": profile.axis, "coordinate_mm": profile.coordinate / MM}
    if args.n_peaks == 2:
        report["separation_mm"] = peak_separation(fit)
    if args.output:
        _write_json(args.output, report)
    for p in fit.peaks:
        print(f"peak at {p.center:.4f} mm, FWHM {p.fwhm:.4f} mm")
    if args.n_peaks == 2:
        print(f"separation {report['separation_mm']:.4f} mm")
    return EXIT_OK


def _box_pixels(args, plan):
    if args.box is not None:
        return tuple(args.box)
    x0, x1, y0, y1 = (v * MM for v in args.box_mm)
    xs, ys = plan.xs, plan.ys
    tol = 1e-9
    c0, c1 = int(np.searchsorted(xs, x0 - tol)), int(np.searchsorted(xs, x1 + tol, side="right"))
    r0, r1 = int(np.searchsorted(ys, y0 - tol)), int(np.searchsorted(ys, y1 + tol, side="right"))
    return r0, r1, c0, c1


def cmd_diff(args) -> int:
    with_t = _validated(load_map, args.map_with)
    without = _validated(load_map, args.map_without)
    if with_t.plan.shape != without.plan.shape:
        raise UsageError(f"maps have different shapes {with_t.plan.shape} and {without.plan.shape}")
    if (args.box is None) == (args.box_mm is None):
        raise UsageError("give exactly one of --box (pixels) or --box-mm (mm)")
    box = _box_pixels(args, with_t.plan)
    diff_map = difference(with_t, without)
    diff_values = background_subtract(with_t.values, without.values)
    report = metric_report(None, box_pixels=list(box),
                           sbr_raw=_validated(profile_sbr, with_t.values, box),
                           sbr_differential=_validated(profile_sbr, diff_values, box),
                           snr_box=_validated(snr_box, diff_values, box))
    _atomic_write(args.output, lambda tmp: save_map(diff_map, tmp))
    if args.report:
        _write_json(args.report, report)
    if args.ppm:
        write_ppm(diff_values, args.ppm, scale=args.ppm_scale)
    print(f"SBR raw {report['sbr_raw']:.4f}, differential {report['sbr_differential']:.4f}, "
          f"box S/N {report['snr_box']:.6g}")
    return EXIT_OK


def cmd_region(args) -> int:
    aperture = _validated(AntennaAperture, args.width_mm * MM, args.height_mm * MM, args.freq_ghz * GHZ)
    region = _validated(classify_region, args.z_mm * MM, aperture)
    bound = rdnf_outer_bound(aperture)
    print(json.dumps({"z_mm": args.z_mm, "region": region.short, "wavelength_mm": aperture.wavelength / MM,
                      "rdnf_outer_mm": bound / MM}, sort_keys=True))
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser


def _add_ladder_flags(p, omega=True):
    p.add_argument("--config", help="ladder configuration JSON (schema rydscan-ladder-v1); defaults if omitted")
    p.add_argument("--delta-p0-mhz", type=float, help="probe detuning override, MHz")
    if omega:
        p.add_argument("--omega-rf-mhz", type=float, help="microwave Rabi frequency override, MHz")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rydscan", description="Virtual Rydberg-atom near-field scanning.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="synthesize a two-branch EIT/AT spectrum")
    _add_ladder_flags(p)
    p.add_argument("--grid-mhz", type=float, nargs=3, metavar=("START", "STOP", "STEP"),
                   default=(-200.0, 200.0, 0.5), help="coupling-detuning grid, MHz (default -200 200 0.5)")
    p.add_argument("-o", "--output", required=True, help="spectrum CSV (a .json sidecar is written next to it)")
    p.add_argument("--plot", help="base path for a gnuplot .dat/.gp pair")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("scan", help="run a virtual raster scan over a scene")
    p.add_argument("scene", help="scene JSON (schema rydscan-scene-v1, mm / GHz)")
    p.add_argument("--z-mm", type=float, required=True, help="scan-plane distance z, mm")
    p.add_argument("--x0-mm", type=float, default=0.0, help="first grid x, mm (default 0)")
    p.add_argument("--y0-mm", type=float, default=0.0, help="first grid y, mm (default 0)")
    p.add_argument("--lx-mm", type=float, required=True, help="extent along x, mm")
    p.add_argument("--ly-mm", type=float, required=True, help="extent along y, mm")
    p.add_argument("--step-mm", type=float, default=1.0, help="grid step for both axes, mm (default 1)")
    p.add_argument("--dx-mm", type=float, help="x step, mm (overrides --step-mm)")
    p.add_argument("--dy-mm", type=float, help="y step, mm (overrides --step-mm)")
    p.add_argument("--ordering", choices=("raster", "serpentine"), default="raster")
    p.add_argument("--mode", choices=("direct", "spectroscopic"), default="direct")
    _add_ladder_flags(p, omega=False)
    p.add_argument("--dipole-ea0", type=float, default=1000.0,
                   help="transition dipole moment, units of e a0 (default 1000)")
    p.add_argument("--noise-vpm", type=float, default=0.0, help="additive measurement noise sigma, V/m (default 0)")
    p.add_argument("--seed", type=int, default=0, help="noise seed (integer)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (integer, default 1)")
    p.add_argument("-o", "--output", required=True, help="map file")
    p.add_argument("--ppm", help="also write a PPM heatmap")
    p.add_argument("--ppm-scale", type=int, default=4, help="heatmap pixels per grid point (integer)")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("compare", help="SSIM and difference between two maps")
    p.add_argument("map_a")
    p.add_argument("map_b")
    p.add_argument("--window", type=int, default=8, help="SSIM window side, pixels (default 8)")
    p.add_argument("--stride", type=int, default=1, help="SSIM window stride, pixels (default 1)")
    p.add_argument("-o", "--output", help="metric report JSON")
    p.add_argument("--diff-ppm", help="PPM of the normalized difference map")
    p.add_argument("--ppm-scale", type=int, default=4, help="heatmap pixels per grid point (integer)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("resolve", help="baseline + Gaussian peak fit of a map profile")
    p.add_argument("map")
    p.add_argument("--axis", choices=("x", "y"), default="x", help="profile along x (fixed y) or y (fixed x)")
    p.add_argument("--coord-mm", type=float, required=True, help="fixed coordinate of the profile, mm")
    p.add_argument("--n-peaks", type=int, default=2, help="number of Gaussian peaks, 1 or 2")
    p.add_argument("--exclusion-mm", type=float, nargs=2, metavar=("LO", "HI"),
                   help="peak region excluded from the initial baseline, mm (default central 60%%)")
    p.add_argument("--baseline-degree", type=int, default=2, help="baseline polynomial degree, 0-2")
    p.add_argument("-o", "--output", help="PeakFit report JSON")
    p.set_defaults(func=cmd_resolve)

    p = sub.add_parser("diff", help="differential image with SBR and box S/N")
    p.add_argument("map_with", help="map with the target")
    p.add_argument("map_without", help="background map")
    p.add_argument("--box", type=int, nargs=4, metavar=("ROW0", "ROW1", "COL0", "COL1"),
                   help="target box, pixel indices (half-open)")
    p.add_argument("--box-mm", type=float, nargs=4, metavar=("X0", "X1", "Y0", "Y1"),
                   help="target box, mm (inclusive)")
    p.add_argument("-o", "--output", required=True, help="differential map file")
    p.add_argument("--report", help="metric report JSON")
    p.add_argument("--ppm", help="PPM heatmap of the differential map")
    p.add_argument("--ppm-scale", type=int, default=4, help="heatmap pixels per grid point (integer)")
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("region", help="classify a distance into RNF / RDNF / FF")
    p.add_argument("--z-mm", type=float, required=True, help="axial distance from the aperture, mm")
    p.add_argument("--width-mm", type=float, default=138.0, help="aperture width, mm (default 138)")
    p.add_argument("--height-mm", type=float, default=107.0, help="aperture height, mm (default 107)")
    p.add_argument("--freq-ghz", type=float, default=8.556, help="microwave frequency, GHz (default 8.556)")
    p.set_defaults(func=cmd_region)
    return parser


def _origin(exc) -> str:
    """Name of the package module that raised ``exc``."""
    tb, name = exc.__traceback__, "rydscan"
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", "")
        if mod.startswith("rydscan.") and mod != __name__:
            name = mod
        tb = tb.tb_next
    return name


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"rydscan {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RydscanError as exc:
        print(f"rydscan {args.command}: {_origin(exc)}.{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"rydscan {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
