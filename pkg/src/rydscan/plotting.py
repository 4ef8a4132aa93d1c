"""Dependency-free figure output: binary PPM heatmaps and gnuplot data/script pairs."""

from __future__ import annotations

from pathlib import Path

import numpy as np

# Piecewise-linear dark-blue -> cyan -> yellow -> red ramp (positions, RGB).
_STOPS = np.array([0.0, 0.33, 0.66, 1.0])
_COLOURS = np.array([[0, 0, 96], [0, 200, 220], [250, 230, 40], [200, 0, 0]], dtype=float)


def colormap(t) -> np.ndarray:
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return np.stack([np.interp(t, _STOPS, _COLOURS[:, k]) for k in range(3)], axis=-1)


def write_ppm(values, path, vmin=None, vmax=None, scale: int = 1) -> None:
    """P6 heatmap; row 0 of ``values`` (lowest y) is drawn at the bottom."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 2:
        raise ValueError("heatmap needs a 2-D array")
    lo = float(v.min()) if vmin is None else float(vmin)
    hi = float(v.max()) if vmax is None else float(vmax)
    t = (v - lo) / (hi - lo) if hi > lo else np.zeros_like(v)
    rgb = np.rint(colormap(t[::-1])).astype(np.uint8)
    if scale > 1:
        rgb = rgb.repeat(scale, axis=0).repeat(scale, axis=1)
    h, w = rgb.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def write_gnuplot_curve(x, ys: dict, path, xlabel="x", ylabel="y") -> tuple[Path, Path]:
    """``path``.dat with columns x, *ys and a matching ``path``.gp script."""
    base = Path(path)
    dat, gp = base.with_suffix(".dat"), base.with_suffix(".gp")
    names = list(ys)
    cols = [np.asarray(x, dtype=float)] + [np.asarray(ys[n], dtype=float) for n in names]
    with open(dat, "w", encoding="utf-8") as fh:
        fh.write("# " + " ".join(["x"] + names) + "\n")
        for row in zip(*cols):
            fh.write(" ".join(repr(float(c)) for c in row) + "\n")
    plots = ", ".join(f"'{dat.name}' using 1:{i + 2} with lines title '{n}'" for i, n in enumerate(names))
    with open(gp, "w", encoding="utf-8") as fh:
        fh.write(f"set xlabel '{xlabel}'\nset ylabel '{ylabel}'\nplot {plots}\n")
    return dat, gp


def write_gnuplot_map(xs, ys, values, path, label="|E| (V/m)") -> tuple[Path, Path]:
    """Matrix-style data (x y value blocks) plus a pm3d map script."""
    base = Path(path)
    dat, gp = base.with_suffix(".dat"), base.with_suffix(".gp")
    v = np.asarray(values, dtype=float)
    with open(dat, "w", encoding="utf-8") as fh:
        for iy, y in enumerate(ys):
            for ix, x in enumerate(xs):
                fh.write(f"{float(x)!r} {float(y)!r} {float(v[iy, ix])!r}\n")
            fh.write("\n")
    with open(gp, "w", encoding="utf-8") as fh:
        fh.write("set view map\nset size ratio -1\n"
                 f"set cblabel '{label}'\nsplot '{dat.name}' using 1:2:3 with pm3d notitle\n")
    return dat, gp
