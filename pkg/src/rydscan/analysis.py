"""Peak finding, baseline + multi-Gaussian fitting, and AT-splitting extraction."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import signal
from scipy.optimize import least_squares

from .errors import DomainError, FitError
from .physics import DEFAULT_DIPOLE, PLANCK_H
from .spectroscopy import Branch, LadderConfig, Spectrum, branch_positions, branch_window_grid, synthesize_spectrum

PEAKFIT_SCHEMA = "rydscan-peakfit-v1"
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
UNRESOLVED_FWHM_FRACTION = 0.8

FIT_FTOL = 1e-10
FIT_MAX_ITER = 200
_INIT_PROMINENCE = 0.02
_EPS = float(np.finfo(float).eps)


class Peak(NamedTuple):
    index: int
    position: float
    height: float


def _xy(trace, values=None):
    if values is None:
        if isinstance(trace, Spectrum):
            return trace.delta_c0_grid, trace.values
        if np.ndim(trace) == 1:
            # Bare samples: positions are sample indices.
            y = np.asarray(trace, dtype=float)
            return np.arange(y.size, dtype=float), y
        x, y = trace
    else:
        x, y = trace, values
    return np.asarray(x, dtype=float), np.asarray(y, dtype=float)


def find_peaks(trace, values=None, min_prominence: float = 0.1) -> list[Peak]:
    """Interior local maxima with prominence >= ``min_prominence * max(values)``.

    ``trace`` is a Spectrum, an ``(x, y)`` pair, or ``x`` with ``values``
    given separately.  Plateaus report their leftmost index.
    """
    x, y = _xy(trace, values)
    if y.ndim != 1 or y.size < 3 or x.shape != y.shape:
        raise DomainError("peak search needs a 1-D trace with at least 3 samples")
    if not 0 < min_prominence <= 1:
        raise DomainError("min_prominence must lie in (0, 1]")
    top = float(np.max(y))
    scale = top if top > 0 else float(np.max(y) - np.min(y))
    idx, props = signal.find_peaks(y, prominence=(min_prominence * scale, None), plateau_size=(1, None))
    left = props["left_edges"]
    return [Peak(int(i), float(x[i]), float(y[i])) for i in sorted(left.tolist())]


@dataclass(frozen=True)
class GaussianPeak:
    center: float
    amplitude: float
    sigma: float

    @property
    def fwhm(self) -> float:
        return FWHM_PER_SIGMA * self.sigma

    def __call__(self, x):
        return self.amplitude * np.exp(-0.5 * ((np.asarray(x) - self.center) / self.sigma) ** 2)


@dataclass(frozen=True)
class PeakFit:
    """Baseline polynomial (about ``baseline_origin``) plus Gaussian peaks."""

    baseline: tuple[float, ...]
    peaks: tuple[GaussianPeak, ...]
    rms_residual: float
    baseline_origin: float = 0.0
    degraded_init: bool = False
    iterations: int = 0
    flags: tuple[str, ...] = field(default=())

    def baseline_at(self, x):
        t = np.asarray(x, dtype=float) - self.baseline_origin
        return np.polynomial.polynomial.polyval(t, self.baseline)

    def __call__(self, x):
        out = self.baseline_at(x)
        for p in self.peaks:
            out = out + p(x)
        return out

    def corrected(self, x, y):
        """Trace with the fitted baseline subtracted."""
        return np.asarray(y, dtype=float) - self.baseline_at(x)

    def to_dict(self) -> dict:
        return {
            "schema": PEAKFIT_SCHEMA,
            "baseline": {"origin": self.baseline_origin, "coefficients": list(self.baseline)},
            "peaks": [
                {"center": p.center, "amplitude": p.amplitude, "sigma": p.sigma, "fwhm": p.fwhm}
                for p in self.peaks
            ],
            "separation": peak_separation(self) if len(self.peaks) == 2 else None,
            "rms_residual": self.rms_residual,
            "iterations": self.iterations,
            "flags": sorted(set(self.flags) | ({"degraded_init"} if self.degraded_init else set())),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def fwhm(peak) -> float:
    """FWHM of a GaussianPeak, or of the only peak of a one-peak PeakFit."""
    if isinstance(peak, PeakFit):
        if len(peak.peaks) != 1:
            raise DomainError(f"fwhm needs a single-peak fit, got {len(peak.peaks)} peaks")
        peak = peak.peaks[0]
    return FWHM_PER_SIGMA * peak.sigma


def peak_separation(fit: PeakFit) -> float:
    if len(fit.peaks) != 2:
        raise DomainError(f"peak separation needs exactly 2 peaks, got {len(fit.peaks)}")
    return abs(fit.peaks[1].center - fit.peaks[0].center)


def _model_and_jac(params, t, n_peaks, degree):
    nb = degree + 1
    powers = np.vander(t, nb, increasing=True)
    model = powers @ params[:nb]
    jac = np.empty((t.size, params.size))
    jac[:, :nb] = powers
    for i in range(n_peaks):
        a, c, s = params[nb + 3 * i: nb + 3 * i + 3]
        u = (t - c) / s
        g = np.exp(-0.5 * u * u)
        model += a * g
        jac[:, nb + 3 * i] = g
        jac[:, nb + 3 * i + 1] = a * g * u / s
        jac[:, nb + 3 * i + 2] = a * g * u * u / s
    return model, jac


def fit_baseline_and_peaks(trace, values=None, n_peaks: int = 1, exclusion=None,
                           baseline_degree: int = 2) -> PeakFit:
    """Simultaneous least-squares fit of a polynomial baseline and Gaussians.

    Samples outside ``exclusion = (lo, hi)`` seed the baseline; maxima
    inside it seed the peak centres.  The whole trace enters the fit.
    The solver stops on a relative cost change below 1e-10 or after 200
    evaluations (flagged ``iteration_limit``); FitError means it failed.
    """
    x, y = _xy(trace, values)
    if n_peaks not in (1, 2):
        raise DomainError("n_peaks must be 1 or 2")
    if not 0 <= baseline_degree <= 2:
        raise DomainError("baseline degree must be 0, 1 or 2")
    if x.ndim != 1 or x.shape != y.shape or x.size < 3:
        raise DomainError("trace must be 1-D with at least 3 samples")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DomainError("trace contains non-finite samples")
    order = np.argsort(x, kind="stable")
    x, y = x[order], y[order]
    if exclusion is None:
        span = x[-1] - x[0]
        exclusion = (x[0] + 0.2 * span, x[-1] - 0.2 * span)
    lo, hi = sorted(float(v) for v in exclusion)
    outside = (x < lo) | (x > hi)
    if not (np.any(x < lo) and np.any(x > hi)):
        raise DomainError("trace must extend beyond the exclusion interval on both sides")
    inside = ~outside
    if inside.sum() < 3:
        raise DomainError("exclusion interval holds fewer than 3 samples")

    x_ref = 0.5 * (x[0] + x[-1])
    x_scale = 0.5 * (x[-1] - x[0])
    y_scale = float(np.max(y) - np.min(y)) or 1.0
    t = (x - x_ref) / x_scale
    yn = y / y_scale
    t_lo, t_hi = (lo - x_ref) / x_scale, (hi - x_ref) / x_scale

    degree = min(baseline_degree, int(outside.sum()) - 1)
    base0 = np.polynomial.polynomial.polyfit(t[outside], yn[outside], degree)
    resid = yn - np.polynomial.polynomial.polyval(t, base0)

    t_in, r_in = t[inside], resid[inside]
    degraded = False
    try:
        found = find_peaks(t_in, r_in, min_prominence=_INIT_PROMINENCE) if r_in.max() > 0 else []
    except DomainError:
        found = []
    if len(found) >= n_peaks:
        strongest = sorted(found, key=lambda p: -p.height)[:n_peaks]
        seeds = sorted((p.position, max(p.height, 1e-6)) for p in strongest)
    else:
        degraded = True
        amp = max(float(r_in.max()), 1e-6)
        seeds = [(t_lo + (i + 1) * (t_hi - t_lo) / (n_peaks + 1), amp) for i in range(n_peaks)]
    sigma0 = (t_hi - t_lo) / (4 * n_peaks)

    p0 = list(base0) + [0.0] * (baseline_degree - degree)
    lower = [-np.inf] * (baseline_degree + 1)
    upper = [np.inf] * (baseline_degree + 1)
    tiny = 1e-9 * (t[-1] - t[0])
    for c, a in seeds:
        p0 += [a, c, sigma0]
        lower += [0.0, t[0], tiny]
        upper += [np.inf, t[-1], np.inf]
    p0 = np.array(p0)
    lower, upper = np.array(lower), np.array(upper)
    p0 = np.clip(p0, lower, upper)

    def fun(p):
        return _model_and_jac(p, t, n_peaks, baseline_degree)[0] - yn

    def jac(p):
        return _model_and_jac(p, t, n_peaks, baseline_degree)[1]

    res = least_squares(fun, p0, jac=jac, bounds=(lower, upper), method="trf",
                        ftol=FIT_FTOL, xtol=_EPS, gtol=_EPS, max_nfev=FIT_MAX_ITER)
    rms = float(np.sqrt(np.mean(res.fun ** 2))) * y_scale
    # Reaching the iteration cap is a normal stop; a solver failure or a
    # non-finite result is not.
    if res.status < 0 or not (np.all(np.isfinite(res.x)) and np.isfinite(rms)):
        raise FitError(f"peak fit failed: {res.message} (rms residual {rms:.6g})", rms_residual=rms)

    nb = baseline_degree + 1
    beta = res.x[:nb]
    baseline = tuple(float(beta[k] * y_scale / x_scale ** k) for k in range(nb))
    peaks = []
    flags = ["iteration_limit"] if res.status == 0 else []
    for i in range(n_peaks):
        a, c, s = res.x[nb + 3 * i: nb + 3 * i + 3]
        if a <= 0:
            flags.append("collapsed_peak")
        peaks.append(GaussianPeak(float(x_ref + c * x_scale), float(a * y_scale), float(s * x_scale)))
    peaks.sort(key=lambda p: p.center)
    return PeakFit(baseline, tuple(peaks), rms, baseline_origin=float(x_ref),
                   degraded_init=degraded, iterations=int(res.nfev), flags=tuple(flags))


@dataclass(frozen=True)
class AtExtraction:
    branch_center: float
    delta_f: float
    peak_pair: tuple[GaussianPeak, GaussianPeak]
    unresolved: bool
    fit: PeakFit


def extract_at_splitting(spectrum: Spectrum, branch_hint: float, window: float,
                         exclusion_fraction: float = 0.8) -> AtExtraction:
    """AT doublet separation of the branch near ``branch_hint`` (Hz).

    The doublet counts as unresolved when its separation is below 0.8 of
    the mean fitted FWHM; ``delta_f`` is still reported.
    """
    if not window > 0:
        raise DomainError("window must be positive")
    sub = (spectrum.delta_c0_grid >= branch_hint - window) & (spectrum.delta_c0_grid <= branch_hint + window)
    if sub.sum() < 5:
        raise DomainError(f"extraction window holds {int(sub.sum())} samples; need at least 5")
    x, y = spectrum.delta_c0_grid[sub], spectrum.values[sub]
    half = exclusion_fraction * window
    fit = fit_baseline_and_peaks(x, y, n_peaks=2, exclusion=(branch_hint - half, branch_hint + half))
    p1, p2 = fit.peaks
    delta_f = abs(p2.center - p1.center)
    unresolved = ("collapsed_peak" in fit.flags
                  or delta_f < UNRESOLVED_FWHM_FRACTION * 0.5 * (p1.fwhm + p2.fwhm))
    return AtExtraction(0.5 * (p1.center + p2.center), delta_f, (p1, p2), unresolved, fit)


def branch_fwhm(config: LadderConfig, branch: Branch = Branch.CTR,
                half_span: float = 50e6, step: float = 0.25e6) -> float:
    """Gaussian-fit FWHM (Hz) of the unsplit branch for this ladder."""
    cfg = config.with_omega_rf(0.0)
    grid = branch_window_grid(cfg, branch, half_span, step)
    centre = branch_positions(cfg.delta_p0, cfg.geometry)[0 if branch is Branch.CO else 1]
    spec = synthesize_spectrum(cfg, grid)
    fit = fit_baseline_and_peaks(spec, n_peaks=1,
                                 exclusion=(centre - 0.8 * half_span, centre + 0.8 * half_span))
    return fit.peaks[0].fwhm


def resolution_floor(config: LadderConfig, dipole: float = DEFAULT_DIPOLE) -> float:
    """Smallest field (V/m) whose AT doublet counts as resolved: h * 0.8 FWHM_ctr / dipole."""
    return PLANCK_H * UNRESOLVED_FWHM_FRACTION * branch_fwhm(config) / dipole


def half_max_width(x, y, index: int) -> float:
    """Full width at half of ``y[index]``, by linear interpolation of the crossings."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    half = 0.5 * y[index]
    left = index
    while left > 0 and y[left] > half:
        left -= 1
    right = index
    while right < y.size - 1 and y[right] > half:
        right += 1
    if y[left] > half or y[right] > half:
        raise DomainError("peak does not fall to half maximum inside the trace")

    def cross(i, j):
        return x[i] + (half - y[i]) * (x[j] - x[i]) / (y[j] - y[i])

    return cross(right - 1, right) - cross(left, left + 1)
