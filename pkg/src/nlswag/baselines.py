"""Boxcar multilooking, the operational reference filter."""

from __future__ import annotations

import numpy as np

from . import _kernels
from .raster import EstimateBundle, SlcPair, form_interferogram, wrap


def boxcar(pair: SlcPair, k: int = 5) -> EstimateBundle:
    """Uniform ``k x k`` means of ``z``, ``|u1|^2`` and ``|u2|^2``, clipped at borders.

    The ENL is the number of window pixels inside the raster.
    """
    if isinstance(k, bool) or int(k) != k or k < 1 or k % 2 == 0:
        raise ValueError(f"boxcar size must be a positive odd integer, got {k!r}")
    half = int(k) // 2
    z = form_interferogram(pair)
    sums = {}
    for name, img in (("re", z.real), ("im", z.imag), ("p1", np.abs(pair.master) ** 2),
                      ("p2", np.abs(pair.slave) ** 2), ("n", np.ones(z.shape))):
        out = np.empty(z.shape)
        _kernels.box_sum(np.ascontiguousarray(img, dtype=float), half, out)
        sums[name] = out
    n = sums["n"]
    zm = (sums["re"] + 1j * sums["im"]) / n
    p1 = sums["p1"] / n
    p2 = sums["p2"] / n
    den = np.sqrt(p1 * p2)
    with np.errstate(divide="ignore", invalid="ignore"):
        coh = np.where(den > 0, np.abs(zm) / np.where(den > 0, den, 1.0), 0.0)
    return EstimateBundle(wrap(np.angle(zm)), 0.5 * (p1 + p2), np.clip(coh, 0.0, 1.0), n)
