"""Local phase heterogeneity, adaptive window width and fringe frequencies."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, ndimage

from . import _kernels
from .raster import wrap

SIGMA_TABLE_SIZE = 1024
ETA_MAX = float(np.nextafter(1.0, 0.0))


@dataclass(frozen=True)
class FringeField:
    """Local fringe frequency per pixel in radians per pixel."""

    f_range: np.ndarray
    f_azimuth: np.ndarray

    def __post_init__(self):
        if self.f_range.shape != self.f_azimuth.shape:
            raise ValueError("fringe components differ in shape")

    @classmethod
    def zeros(cls, shape):
        return cls(np.zeros(shape), np.zeros(shape))

    @classmethod
    def constant(cls, shape, f_range, f_azimuth):
        return cls(np.full(shape, float(f_range)), np.full(shape, float(f_azimuth)))


def single_look_phase_pdf(phi, gamma):
    """Density of single-look interferometric phase with zero true phase."""
    phi = np.asarray(phi, dtype=float)
    beta = gamma * np.cos(phi)
    root = np.sqrt(1.0 - beta**2)
    return (1.0 - gamma**2) / (2 * np.pi) / (1.0 - beta**2) * (1.0 + beta * np.arccos(-beta) / root)


def _phase_variance_quad(gamma: float) -> float:
    if gamma == 0.0:
        return np.pi**2 / 3
    integrand = lambda p: p * p * single_look_phase_pdf(p, gamma)
    # the density is even; peaks sharply at 0 for gamma near 1
    val, _ = integrate.quad(integrand, 0.0, np.pi, points=[min(1.0 - gamma, 0.5)], limit=400,
                            epsabs=1e-13, epsrel=1e-11)
    return 2.0 * val


class SigmaTable:
    """Single-look phase variance as a function of coherence.

    Tabulated on ``SIGMA_TABLE_SIZE`` points of ``[0, 1)`` with the exact
    limit ``0`` appended at ``gamma = 1``; lookups interpolate linearly.
    """

    def __init__(self, size: int = SIGMA_TABLE_SIZE):
        self.gamma = np.arange(size) / size
        values = np.array([_phase_variance_quad(g) for g in self.gamma])
        self._g = np.append(self.gamma, 1.0)
        self._v = np.append(values, 0.0)
        self.values = values

    def __call__(self, gamma):
        gamma = np.asarray(gamma, dtype=float)
        return np.interp(gamma, self._g, self._v)


@lru_cache(maxsize=1)
def sigma_table() -> SigmaTable:
    return SigmaTable()


def expected_phase_variance(gamma) -> float:
    """Variance (rad^2) of single-look phase at coherence ``gamma``."""
    g = float(gamma)
    if not 0.0 <= g < 1.0:
        raise ValueError("coherence must lie in [0, 1)")
    return _phase_variance_quad(g)


def local_unwrap(phase: np.ndarray, center, half_window: int, ref_half: int = 2) -> np.ndarray:
    """Unwrap the search window around ``center`` relative to its local mean.

    The reference is the argument of the mean phasor over the
    ``(2*ref_half+1)^2`` block at the centre; every value is moved into the
    cycle ``(ref - pi, ref + pi]``. Returns the clipped window.
    """
    if half_window < ref_half:
        raise ValueError("search window must contain the reference block")
    r, c = center
    rows, cols = phase.shape
    blk = phase[max(0, r - ref_half):r + ref_half + 1, max(0, c - ref_half):c + ref_half + 1]
    ref = np.angle(np.exp(1j * blk).sum())
    win = phase[max(0, r - half_window):r + half_window + 1, max(0, c - half_window):c + half_window + 1]
    return ref + wrap(win - ref)


def weighted_phase_variance(phi, weights) -> float:
    """``sum w phi^2 - (sum w phi)^2`` for normalised weights, floored at 0."""
    phi = np.asarray(phi, dtype=float)
    w = np.asarray(weights, dtype=float)
    m = np.sum(w * phi)
    return max(float(np.sum(w * phi * phi) - m * m), 0.0)


def moment_ratio(i1, i2, weights) -> float:
    """Weighted ``E[|u1|^2 |u2|^2] / sqrt(E|u1|^4 E|u2|^4)``."""
    num = np.sum(weights * i1 * i2)
    den = np.sqrt(np.sum(weights * i1 * i1) * np.sum(weights * i2 * i2))
    return float(num / den) if den > 0 else 0.0


def coherence_from_ratio(ratio):
    """Invert ``ratio = (1 + gamma^2) / 2`` for fully developed speckle."""
    return np.clip(np.sqrt(np.maximum(0.0, 2.0 * np.asarray(ratio, dtype=float) - 1.0)), 0.0, 1.0)


def moment_coherence(pair, weights, center) -> float:
    """Coherence from speckle intensity moments over the window at ``center``.

    ``weights`` covers the (clipped) search window around ``center``; it is
    insensitive to the interferometric phase.
    """
    r, c = center
    half_r = (weights.shape[0] - 1) // 2
    half_c = (weights.shape[1] - 1) // 2
    sl = (slice(r - half_r, r + half_r + 1), slice(c - half_c, c + half_c + 1))
    i1 = np.abs(pair.master[sl]) ** 2
    i2 = np.abs(pair.slave[sl]) ** 2
    if i1.shape != weights.shape:
        raise ValueError("weight map does not fit inside the raster at this centre")
    return float(coherence_from_ratio(moment_ratio(i1, i2, weights)))


def heterogeneity_index(var, sigma0_sq):
    """Excess of observed over noise-predicted phase variance, in [0, 1).

    Zero where the observed variance does not exceed the prediction. The
    value 1 (a noise-free prediction) is nudged to the largest float below 1.
    """
    var = np.asarray(var, dtype=float)
    s0 = np.asarray(sigma0_sq, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        eta = np.where(var > s0, (var - s0) / np.where(var > 0, var, 1.0), 0.0)
    eta = np.minimum(eta, ETA_MAX)
    return eta if eta.ndim else float(eta)


def eta_to_sigma(eta):
    """Gaussian window width ``2 (1 - eta) + 1``."""
    return 2.0 * (1.0 - np.asarray(eta, dtype=float)) + 1.0


@dataclass
class Heterogeneity:
    eta: np.ndarray
    sigma: np.ndarray
    variance: np.ndarray
    coherence: np.ndarray
    sigma0_sq: np.ndarray
    moment_ratio: np.ndarray


def heterogeneity_map(pair, weights, offsets, ref_half: int = 2) -> Heterogeneity:
    """Per-pixel heterogeneity from stage-1 weights.

    ``weights`` is the ``(n_offsets, H, W)`` normalised stage-1 weight stack
    with ``offsets`` the matching ``(n_offsets, 2)`` array.
    """
    z = pair.master * np.conj(pair.slave)
    phase = np.angle(z)
    unit = np.exp(1j * phase)
    size = 2 * ref_half + 1
    ref_sum = (ndimage.uniform_filter(unit.real, size, mode="constant")
               + 1j * ndimage.uniform_filter(unit.imag, size, mode="constant"))
    ref = np.angle(ref_sum)
    i1 = np.abs(pair.master) ** 2
    i2 = np.abs(pair.slave) ** 2
    m1, m2, p12, p11, p22 = _kernels.unwrap_moments(
        weights, np.ascontiguousarray(offsets, dtype=np.int64), phase, ref, i1, i2
    )
    var = np.maximum(m2 - m1 * m1, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        den = np.sqrt(p11 * p22)
        ratio = np.where(den > 0, p12 / np.where(den > 0, den, 1.0), 0.0)
    gamma = coherence_from_ratio(ratio)
    s0 = sigma_table()(gamma)
    eta = heterogeneity_index(var, s0)
    return Heterogeneity(eta, eta_to_sigma(eta), var, gamma, s0, ratio)


def _subbin(left, peak, right) -> float:
    """Vertex offset of the parabola through three spectrum samples, in [-0.5, 0.5]."""
    den = left - 2.0 * peak + right
    if not den < 0:
        return 0.0
    return float(np.clip(0.5 * (left - right) / den, -0.5, 0.5))


def estimate_fringe_field(z: np.ndarray, block: int = 32, fft: int = 64, sigma_smooth: float = 8.0,
                          subbin: bool = True) -> FringeField:
    """Local fringe frequencies from block-wise 2-D FFT peaks.

    The raster is tiled into ``block x block`` tiles from the top-left
    corner; each tile is zero-padded to ``fft x fft`` and the peak of the
    magnitude spectrum gives the tile frequency, ``2 pi k / fft`` with
    ``k`` in ``[-fft/2, fft/2)``. With ``subbin`` each component of ``k`` is
    refined by a parabola through the peak and its two neighbours along that
    axis, which leaves on-bin peaks unchanged. Both components are then
    smoothed with a Gaussian of width ``sigma_smooth`` pixels truncated at
    3 sigma.
    """
    if block > fft:
        raise ValueError("block must not exceed the FFT size")
    if fft & (fft - 1):
        raise ValueError("FFT size must be a power of two")
    rows, cols = z.shape
    f_r = np.empty((rows, cols))
    f_az = np.empty((rows, cols))
    for r0 in range(0, rows, block):
        for c0 in range(0, cols, block):
            tile = z[r0:r0 + block, c0:c0 + block]
            spec = np.abs(np.fft.fft2(tile, s=(fft, fft)))
            i_az, i_r = np.unravel_index(np.argmax(spec), spec.shape)
            k_az, k_r = float(i_az), float(i_r)
            if subbin:
                k_az += _subbin(spec[(i_az - 1) % fft, i_r], spec[i_az, i_r], spec[(i_az + 1) % fft, i_r])
                k_r += _subbin(spec[i_az, (i_r - 1) % fft], spec[i_az, i_r], spec[i_az, (i_r + 1) % fft])
            k_az = k_az - fft if k_az >= fft / 2 else k_az
            k_r = k_r - fft if k_r >= fft / 2 else k_r
            f_r[r0:r0 + block, c0:c0 + block] = 2 * np.pi * k_r / fft
            f_az[r0:r0 + block, c0:c0 + block] = 2 * np.pi * k_az / fft
    if sigma_smooth > 0:
        f_r = ndimage.gaussian_filter(f_r, sigma_smooth, mode="nearest", truncate=3.0)
        f_az = ndimage.gaussian_filter(f_az, sigma_smooth, mode="nearest", truncate=3.0)
    return FringeField(f_r, f_az)
