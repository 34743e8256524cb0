"""Pixel and patch similarity statistics and the dissimilarity-to-weight kernel.

Two criteria are used:

* stage 1 compares raw SLC pixels through the likelihood that both pixels
  share intensity, coherence and phase; the patch dissimilarity is the
  negative log-likelihood summed over a square patch;
* stage 2 compares prefiltered (intensity, coherence, phase) estimates with
  the symmetric Kullback-Leibler divergence of two complex circular Gaussian
  models, averaged over a Gaussian window.

Patches are clipped at raster borders. A clipped stage-1 sum is rescaled to
the full patch size so border centres stay comparable with interior ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .raster import SlcPair

GAMMA_MAX = 1.0 - 1e-9


@dataclass(frozen=True)
class PatchGeometry:
    half_width: int

    def __post_init__(self):
        if self.half_width < 0:
            raise ValueError("half_width must be >= 0")

    @property
    def size(self) -> int:
        return 2 * self.half_width + 1

    @property
    def offsets(self) -> np.ndarray:
        """(n, 2) array of (row, col) offsets, row-major."""
        k = np.arange(-self.half_width, self.half_width + 1)
        rr, cc = np.meshgrid(k, k, indexing="ij")
        return np.column_stack([rr.ravel(), cc.ravel()])


@dataclass(frozen=True)
class GaussianWindow:
    """Gaussian weights ``exp(-|o|^2 / (2 sigma^2))`` over a square patch."""

    sigma: float
    geometry: PatchGeometry = field(default_factory=lambda: PatchGeometry(5))

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @property
    def weights(self) -> np.ndarray:
        o = self.geometry.offsets
        return np.exp(-(o**2).sum(axis=1) / (2.0 * self.sigma**2))


def delta1_pixel(u1x: complex, u2x: complex, u1y: complex, u2y: complex) -> float:
    """Likelihood that SLC pixels x and y share the same parameters.

    The ratio C/A is clamped to ``[1e-12, 1 - 1e-12]`` before evaluation,
    which keeps identical and anti-phase pixel pairs finite.
    """
    if u1x == 0 and u2x == 0 and u1y == 0 and u2y == 0:
        raise ValueError("similarity undefined when all four amplitudes are zero")
    sx = abs(u1x) ** 2 + abs(u2x) ** 2
    sy = abs(u1y) ** 2 + abs(u2y) ** 2
    zx = u1x * np.conj(u2x)
    zy = u1y * np.conj(u2y)
    return float(np.exp(-_kernels.neglog_delta1(sx, sy, complex(zx), complex(zy))))


def neglog_delta1(u1x, u2x, u1y, u2y) -> float:
    """``-log delta1``; stays finite where ``delta1`` itself would overflow."""
    if u1x == 0 and u2x == 0 and u1y == 0 and u2y == 0:
        raise ValueError("similarity undefined when all four amplitudes are zero")
    sx = abs(u1x) ** 2 + abs(u2x) ** 2
    sy = abs(u1y) ** 2 + abs(u2y) ** 2
    return float(_kernels.neglog_delta1(sx, sy, complex(u1x * np.conj(u2x)), complex(u1y * np.conj(u2y))))


def delta2_pixel(ix, gx, px, iy, gy, py) -> float:
    """Symmetric KL divergence between the models of two filtered pixels.

    Coherences are clamped to ``1 - 1e-9``.
    """
    if ix <= 0 or iy <= 0:
        raise ValueError("intensities must be positive")
    gx = min(max(gx, 0.0), GAMMA_MAX)
    gy = min(max(gy, 0.0), GAMMA_MAX)
    return float(_kernels.kl_pixel(ix, gx, px, iy, gy, py))


def guidance_arrays(guide):
    """Intensity, coherence and phase of a guidance bundle, made safe for the
    divergence: intensity floored just above zero, coherence clamped below one."""
    inten = np.asarray(guide.intensity, dtype=float)
    floor = 1e-12 * max(float(inten.mean()), np.finfo(float).tiny)
    inten = np.maximum(inten, floor)
    gam = np.clip(np.asarray(guide.coherence, dtype=float), 0.0, GAMMA_MAX)
    return inten, gam, np.asarray(guide.phase, dtype=float)


def _patch_offsets(shape, x, y, half):
    """Offsets o with both x+o and y+o inside the raster."""
    rows, cols = shape
    k = np.arange(-half, half + 1)
    kr = k[(x[0] + k >= 0) & (x[0] + k < rows) & (y[0] + k >= 0) & (y[0] + k < rows)]
    kc = k[(x[1] + k >= 0) & (x[1] + k < cols) & (y[1] + k >= 0) & (y[1] + k < cols)]
    rr, cc = np.meshgrid(kr, kc, indexing="ij")
    return rr.ravel(), cc.ravel()


def patch_dissim_stage1(pair: SlcPair, x, y, geom: PatchGeometry) -> float:
    """Negative log-likelihood of the patches around x and y.

    Larger means more dissimilar. Terms are summed over offsets valid for
    both patches and rescaled to the full patch size.
    """
    orr, occ = _patch_offsets(pair.shape, x, y, geom.half_width)
    total = 0.0
    for a, b in zip(orr, occ):
        p = (x[0] + a, x[1] + b)
        q = (y[0] + a, y[1] + b)
        total += neglog_delta1(pair.master[p], pair.slave[p], pair.master[q], pair.slave[q])
    return total * geom.size**2 / orr.size


def patch_dissim_stage2(guide, x, y, win: GaussianWindow, fringe=None) -> float:
    """Gaussian-weighted mean of pixel divergences between patches at x and y.

    ``guide`` is an :class:`~nlswag.raster.EstimateBundle`. With a fringe
    field the phase at ``y + o`` is corrected by the linear trend
    ``(y - x) . f_x`` measured at the centre ``x`` before comparison.
    """
    half = win.geometry.half_width
    orr, occ = _patch_offsets(guide.shape, x, y, half)
    g = np.exp(-(orr**2 + occ**2) / (2.0 * win.sigma**2))
    px, py = (x[0] + orr, x[1] + occ), (y[0] + orr, y[1] + occ)
    shift = 0.0
    if fringe is not None:
        dr, dc = y[0] - x[0], y[1] - x[1]
        shift = dc * fringe.f_range[x] + dr * fringe.f_azimuth[x]
    inten, gam, phase = guidance_arrays(guide)
    vals = np.array([
        _kernels.kl_pixel(inten[a], gam[a], phase[a], inten[b], gam[b], phase[b] - shift)
        for a, b in zip(zip(*px), zip(*py))
    ])
    return max(float(np.sum(g * vals) / np.sum(g)), 0.0)


def weights_from_dissim(dissim, h: float, scale: float = 1.0) -> np.ndarray:
    """Normalised weights ``exp(-dissim / (h * scale))``.

    The minimum finite dissimilarity is subtracted first; this cancels in the
    normalisation and avoids underflow. ``inf`` entries get zero weight.
    """
    if not (h > 0 and scale > 0):
        raise ValueError("h and scale must be positive")
    d = np.asarray(dissim, dtype=float)
    finite = np.isfinite(d)
    if not finite.any():
        raise ValueError("at least one finite dissimilarity is required")
    w = np.zeros_like(d)
    w[finite] = np.exp(-(d[finite] - d[finite].min()) / (h * scale))
    return w / w.sum()
