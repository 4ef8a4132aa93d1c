"""Field-map fidelity and detection metrics.

SSIM follows the windowed luminance/contrast/structure decomposition with
sample (N - 1) statistics.  Windows are ``window x window`` pixels, slid
with ``stride`` and never padded; the scalar index is the window mean.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DomainError

METRICS_SCHEMA = "rydscan-metrics-v1"


@dataclass(frozen=True)
class SsimParams:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    K1: float = 0.01
    K2: float = 0.03
    L: float = 1.0
    window: int = 8
    stride: int = 1

    def __post_init__(self):
        if not (self.K1 > 0 and self.K2 > 0 and self.L > 0):
            raise DomainError("K1, K2 and L must be positive")
        if self.window < 2 or self.stride < 1:
            raise DomainError("window must be >= 2 pixels and stride >= 1")

    @property
    def C1(self) -> float:
        return (self.K1 * self.L) ** 2

    @property
    def C2(self) -> float:
        return (self.K2 * self.L) ** 2

    @property
    def C3(self) -> float:
        return self.C2 / 2.0

    @property
    def is_default_exponents(self) -> bool:
        return self.alpha == self.beta == self.gamma == 1.0


class WindowStats(NamedTuple):
    mu_i: float
    mu_j: float
    sigma_i: float
    sigma_j: float
    sigma_ij: float
    N: int


def _pair(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DomainError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def normalize_map(values) -> np.ndarray:
    """Divide by the global maximum; an all-zero map is returned unchanged."""
    v = np.asarray(values, dtype=float)
    peak = v.max() if v.size else 0.0
    if peak > 0:
        return v / peak
    return v.copy()


def window_stats(win_i, win_j) -> WindowStats:
    a, b = _pair(win_i, win_j)
    n = a.size
    if n < 2:
        raise DomainError("a window needs at least 2 pixels")
    mu_i, mu_j = a.mean(), b.mean()
    da, db = a - mu_i, b - mu_j
    var_i = float(np.sum(da * da) / (n - 1))
    var_j = float(np.sum(db * db) / (n - 1))
    cov = float(np.sum(da * db) / (n - 1))
    return WindowStats(float(mu_i), float(mu_j), var_i ** 0.5, var_j ** 0.5, cov, n)


def ssim_components(stats: WindowStats, params: SsimParams = SsimParams()):
    """Luminance, contrast and structure terms (l, c, s); works on arrays of windows."""
    mu_i, mu_j, s_i, s_j, s_ij = (np.asarray(x, dtype=float) for x in stats[:5])
    c1, c2, c3 = params.C1, params.C2, params.C3
    lum = (2 * (mu_i * mu_j) + c1) / ((mu_i ** 2 + mu_j ** 2) + c1)
    con = (2 * (s_i * s_j) + c2) / ((s_i ** 2 + s_j ** 2) + c2)
    struct = (s_ij + c3) / ((s_i * s_j) + c3)
    return lum, con, struct


def _combine(lum, con, struct, params):
    if params.is_default_exponents:
        return lum * con * struct
    # Fractional powers of a negative structure term are kept real by sign.
    return lum ** params.alpha * con ** params.beta * np.sign(struct) * np.abs(struct) ** params.gamma


def _windowed_stats(a, b, params: SsimParams) -> WindowStats:
    w, st = params.window, params.stride
    if a.ndim != 2:
        raise DomainError("SSIM needs 2-D maps")
    if a.shape[0] < w or a.shape[1] < w:
        raise DomainError(f"map {a.shape} is smaller than the {w}x{w} SSIM window")
    wa = sliding_window_view(a, (w, w))[::st, ::st]
    wb = sliding_window_view(b, (w, w))[::st, ::st]
    n = w * w
    mu_a = wa.mean(axis=(-1, -2))
    mu_b = wb.mean(axis=(-1, -2))
    da = wa - mu_a[..., None, None]
    db = wb - mu_b[..., None, None]
    var_a = np.sum(da * da, axis=(-1, -2)) / (n - 1)
    var_b = np.sum(db * db, axis=(-1, -2)) / (n - 1)
    cov = np.sum(da * db, axis=(-1, -2)) / (n - 1)
    return WindowStats(mu_a, mu_b, np.sqrt(var_a), np.sqrt(var_b), cov, n)


@dataclass(frozen=True, eq=False)
class SsimResult:
    mean: float
    grid: np.ndarray
    l_mean: float
    c_mean: float
    s_mean: float
    params: SsimParams

    def __float__(self):
        return self.mean


def ssim_index(map_i, map_j, params: SsimParams = SsimParams()) -> SsimResult:
    """Windowed SSIM of two maps already normalized to [0, 1].

    Every term is a commutative expression in the two maps, so swapping
    them gives a bit-identical result.
    """
    a, b = _pair(map_i, map_j)
    lum, con, struct = ssim_components(_windowed_stats(a, b, params), params)
    grid = _combine(lum, con, struct, params)
    return SsimResult(float(grid.mean()), grid, float(lum.mean()), float(con.mean()),
                      float(struct.mean()), params)


def ssim_compact(map_i, map_j, params: SsimParams = SsimParams()) -> np.ndarray:
    """Per-window single-fraction form, valid when C3 = C2 / 2 and unit exponents.

    (2 mu_i mu_j + C1)(2 sigma_ij + C2) / ((mu_i^2 + mu_j^2 + C1)(sigma_i^2 + sigma_j^2 + C2))
    """
    a, b = _pair(map_i, map_j)
    st = _windowed_stats(a, b, params)
    c1, c2 = params.C1, params.C2
    return ((2 * st.mu_i * st.mu_j + c1) * (2 * st.sigma_ij + c2)
            / ((st.mu_i ** 2 + st.mu_j ** 2 + c1) * (st.sigma_i ** 2 + st.sigma_j ** 2 + c2)))


def difference_map(map_i, map_j) -> np.ndarray:
    """Signed pointwise difference of the normalized maps."""
    a, b = _pair(map_i, map_j)
    return normalize_map(a) - normalize_map(b)


def background_subtract(with_target, background) -> np.ndarray:
    a, b = _pair(with_target, background)
    return a - b


def sbr(signal_trace, background_trace) -> float:
    """(S_max - S_min) / (B_max - B_min)."""
    s = np.asarray(signal_trace, dtype=float).ravel()
    b = np.asarray(background_trace, dtype=float).ravel()
    if s.size == 0 or b.size == 0:
        raise DomainError("signal and background traces must be non-empty")
    b_range = b.max() - b.min()
    if not b_range > 0:
        raise DomainError("background trace is flat; SBR is undefined")
    return float((s.max() - s.min()) / b_range)


def _box_mask(shape, box):
    r0, r1, c0, c1 = (int(v) for v in box)
    ny, nx = shape
    if not (0 <= r0 < r1 <= ny and 0 <= c0 < c1 <= nx):
        raise DomainError(f"box {box!r} must lie inside the {ny}x{nx} map (rows r0:r1, cols c0:c1)")
    if (r1 - r0) * (c1 - c0) == ny * nx:
        raise DomainError("box covers the whole map; no outside region")
    mask = np.zeros(shape, dtype=bool)
    mask[r0:r1, c0:c1] = True
    return mask


def snr_box(values, box) -> float:
    """Integrated squared field inside ``box`` over that outside it.

    ``box = (row0, row1, col0, col1)`` with half-open pixel ranges.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 2:
        raise DomainError("snr_box needs a 2-D map")
    mask = _box_mask(v.shape, box)
    inside = float(np.sum(v[mask] ** 2))
    outside = float(np.sum(v[~mask] ** 2))
    if not outside > 0:
        raise DomainError("no energy outside the box; S/N is undefined")
    return inside / outside


def box_profiles(values, box):
    """Centre row of ``box`` split into (on-target part, off-target part)."""
    v = np.asarray(values, dtype=float)
    _box_mask(v.shape, box)
    r0, r1, c0, c1 = (int(x) for x in box)
    row = v[(r0 + r1 - 1) // 2]
    outside = np.concatenate([row[:c0], row[c1:]])
    if outside.size == 0:
        raise DomainError("box spans the full row; no background samples")
    return row[c0:c1], outside


def profile_sbr(values, box) -> float:
    """SBR along the box's centre row: on-target samples versus off-target samples."""
    signal, background = box_profiles(values, box)
    return sbr(signal, background)


def metric_report(ssim: SsimResult | None = None, **scalars) -> dict:
    """JSON-ready report; SSIM params are echoed for provenance."""
    report: dict = {"schema": METRICS_SCHEMA}
    if ssim is not None:
        report["ssim"] = ssim.mean
        report["ssim_l_mean"] = ssim.l_mean
        report["ssim_c_mean"] = ssim.c_mean
        report["ssim_s_mean"] = ssim.s_mean
        report["ssim_params"] = asdict(ssim.params)
        report["ssim_windows"] = list(ssim.grid.shape)
    for key, value in scalars.items():
        if value is not None:
            report[key] = value
    return report


def dump_report(report: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
