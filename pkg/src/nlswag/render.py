"""8-bit grayscale snapshots of rasters as binary PGM."""

from __future__ import annotations

import numpy as np


def stretch(values, lo=None, hi=None) -> np.ndarray:
    """Linear map of ``[lo, hi]`` onto ``0..255``; a constant raster maps to 128."""
    if np.iscomplexobj(values):
        raise ValueError("render a real raster, e.g. the phase or the magnitude")
    v = np.asarray(values, dtype=float)
    lo = float(np.min(v)) if lo is None else float(lo)
    hi = float(np.max(v)) if hi is None else float(hi)
    if not hi > lo:
        return np.full(v.shape, 128, dtype=np.uint8)
    scaled = np.round((np.clip(v, lo, hi) - lo) * (255.0 / (hi - lo)))
    return scaled.astype(np.uint8)


def render_raster(raster, path, stretch_mode: str | None = None) -> None:
    """Write ``raster`` as binary PGM (P5, maxval 255).

    ``stretch_mode`` is ``"minmax"`` or ``"phase"``; the latter pins the
    stretch to ``[-pi, pi]``. By default a :class:`~nlswag.raster.Raster`
    with semantic ``"phase"`` gets the phase stretch and anything else minmax.
    """
    values = getattr(raster, "values", raster)
    if stretch_mode is None:
        stretch_mode = "phase" if getattr(raster, "semantic", None) == "phase" else "minmax"
    if stretch_mode == "phase":
        img = stretch(values, -np.pi, np.pi)
    elif stretch_mode == "minmax":
        img = stretch(values)
    else:
        raise ValueError(f"unknown stretch {stretch_mode!r}")
    rows, cols = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())
