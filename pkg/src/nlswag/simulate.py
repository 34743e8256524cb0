"""Synthetic scenes and correlated SLC pairs under fully developed speckle.

A pixel with amplitude ``A``, coherence ``gamma`` and interferometric phase
``phi`` has the covariance matrix

    C = A^2 [[1, gamma e^{j phi}], [gamma e^{-j phi}, 1]]

and is drawn by multiplying two independent unit-variance circular complex
normals with the lower Cholesky factor of ``C``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import SlcPair, wrap

DEFAULT_TRIALS = 10_000
DEFAULT_COHERENCE = 0.7
# unwrapped span of the fractal test terrain; see make_fractal
FRACTAL_PHASE_SPAN = 2 * np.pi


@dataclass(frozen=True)
class SceneSpec:
    """Ground truth: amplitude, coherence and wrapped phase per pixel."""

    amplitude: np.ndarray
    coherence: np.ndarray
    true_phase: np.ndarray

    def __post_init__(self):
        shapes = {self.amplitude.shape, self.coherence.shape, self.true_phase.shape}
        if len(shapes) != 1 or self.amplitude.ndim != 2:
            raise ValueError(f"scene rasters must share one 2-D shape, got {shapes}")
        if not np.all(np.isfinite(self.amplitude)) or np.any(self.amplitude < 0):
            raise ValueError("amplitude must be finite and non-negative")
        if np.any(self.coherence < 0) or np.any(self.coherence > 1):
            raise ValueError("coherence must lie in [0, 1]")
        if not np.all(np.isfinite(self.true_phase)):
            raise ValueError("phase must be finite")

    @property
    def shape(self) -> tuple[int, int]:
        return self.amplitude.shape


def _bit_generator(seed: int, stream: int = 0) -> np.random.Philox:
    # Philox is counter based: every (seed, stream) pair addresses an
    # independent sequence, and position within it is a pure function of the
    # draw index.
    return np.random.Philox(key=[int(seed) & 0xFFFFFFFFFFFFFFFF, int(stream) & 0xFFFFFFFFFFFFFFFF])


def circular_normal(shape, seed: int, stream: int = 0, count: int = 1) -> np.ndarray:
    """``count`` independent fields of unit-variance circular complex normals.

    Uses Box-Muller on a fixed number of uniforms per pixel, so the value at
    draw ``k``, pixel ``(r, c)`` sits at a fixed position of the counter
    stream and does not depend on evaluation order.
    """
    gen = np.random.Generator(_bit_generator(seed, stream))
    u = gen.random((count, 2) + tuple(shape))
    radius = np.sqrt(-np.log1p(-u[:, 0]))  # 1 - u in (0, 1]
    out = radius * np.exp(2j * np.pi * u[:, 1])
    return out


def sample_slc_pair(scene: SceneSpec, seed: int, stream: int = 0) -> SlcPair:
    """Draw one master/slave pair for ``scene``.

    ``stream`` selects an independent realisation for the same seed, which is
    how Monte-Carlo trials are indexed.
    """
    r1, r2 = circular_normal(scene.shape, seed, stream, count=2)
    amp = scene.amplitude
    gamma = scene.coherence
    u1 = amp * r1
    u2 = amp * (gamma * np.exp(-1j * scene.true_phase) * r1 + np.sqrt(1.0 - gamma**2) * r2)
    return SlcPair(u1, u2)


def _constant(shape, value) -> np.ndarray:
    return np.full(shape, float(value))


def make_ramp(shape, freq, coherence: float = DEFAULT_COHERENCE, amplitude: float = 1.0) -> SceneSpec:
    """Linear phase ramp ``wrap(f_r * col + f_az * row)``.

    ``freq`` is ``(f_range, f_azimuth)`` in radians per pixel.
    """
    f_r, f_az = freq
    rows, cols = np.indices(shape, dtype=float)
    phase = wrap(f_r * cols + f_az * rows)
    return SceneSpec(_constant(shape, amplitude), _constant(shape, coherence), phase)


def make_step(
    shape,
    left_phase: float = -np.pi / 3,
    right_phase: float = np.pi / 3,
    coherence=(DEFAULT_COHERENCE, DEFAULT_COHERENCE),
    intensity_ratio: float = 1.0,
    amplitude: float = 1.0,
) -> SceneSpec:
    """Vertical phase edge at the column midpoint.

    ``intensity_ratio`` is right/left intensity, e.g. ``10**(6/10)`` for a
    6 dB jump.
    """
    rows, cols = shape
    left = np.arange(cols) < cols // 2
    phase = np.where(left, left_phase, right_phase)
    gamma = np.where(left, coherence[0], coherence[1])
    amp = np.where(left, amplitude, amplitude * np.sqrt(intensity_ratio))
    tile = lambda v: np.broadcast_to(v.astype(float), shape).copy()
    return SceneSpec(tile(amp), tile(gamma), wrap(tile(phase)))


def diamond_square(levels: int, roughness: float, seed: int, corners=(0.0, 0.0, 0.0, 0.0)) -> np.ndarray:
    """Heightfield on a ``(2**levels + 1)`` square grid.

    ``corners`` seeds (top-left, top-right, bottom-left, bottom-right). At
    level ``k`` each new point is displaced by a uniform draw on
    ``[-roughness * 2**-k, roughness * 2**-k]``. Boundary edge midpoints
    average their two collinear neighbours, so ``roughness=0`` reproduces
    bilinear interpolation of the corners exactly.
    """
    n = 2**levels
    h = np.zeros((n + 1, n + 1))
    h[0, 0], h[0, n], h[n, 0], h[n, n] = corners
    gen = np.random.Generator(_bit_generator(seed, 0xD1A))
    step = n
    amp = float(roughness)
    while step > 1:
        half = step // 2
        # diamond step: square centres
        centres = 0.25 * (h[0:-1:step, 0:-1:step] + h[0:-1:step, step::step]
                          + h[step::step, 0:-1:step] + h[step::step, step::step])
        h[half::step, half::step] = centres + amp * gen.uniform(-1.0, 1.0, centres.shape)

        # square step: edge midpoints
        for r0, c0 in ((0, half), (half, 0)):
            rr, cc = np.meshgrid(np.arange(r0, n + 1, step), np.arange(c0, n + 1, step), indexing="ij")
            along_row = h[rr, np.clip(cc - half, 0, n)] + h[rr, np.clip(cc + half, 0, n)]
            along_col = h[np.clip(rr - half, 0, n), cc] + h[np.clip(rr + half, 0, n), cc]
            if r0 == 0:
                # midpoints on horizontal grid lines; rows 0 and n are borders
                border = (rr == 0) | (rr == n)
                mean = np.where(border, 0.5 * along_row, 0.25 * (along_row + along_col))
            else:
                border = (cc == 0) | (cc == n)
                mean = np.where(border, 0.5 * along_col, 0.25 * (along_row + along_col))
            h[rr, cc] = mean + amp * gen.uniform(-1.0, 1.0, rr.shape)
        step = half
        amp *= 0.5
    return h


def fractal_surface(shape, roughness: float = 1.0, seed: int = 0, phase_span=FRACTAL_PHASE_SPAN,
                    grid_levels: int | None = None) -> np.ndarray:
    """Unwrapped diamond-square surface cropped to ``shape``.

    By default the grid is the smallest ``2**k + 1`` square covering
    ``shape``; ``grid_levels`` pins ``k`` and a larger ``shape`` is then an
    error. With ``phase_span`` set the crop is rescaled so that max - min
    equals it.
    """
    rows, cols = shape
    if grid_levels is None:
        grid_levels = max(1, int(np.ceil(np.log2(max(rows, cols, 2) - 1))))
    n = 2**grid_levels + 1
    if rows > n or cols > n:
        raise ValueError(f"shape {tuple(shape)} exceeds the {n}x{n} generated grid")
    h = diamond_square(grid_levels, roughness, seed)[:rows, :cols]
    if phase_span is not None:
        lo, hi = h.min(), h.max()
        h = (h - lo) * (phase_span / (hi - lo)) if hi > lo else np.zeros_like(h)
    return h


def make_fractal(
    shape,
    roughness: float = 1.0,
    seed: int = 0,
    phase_span=FRACTAL_PHASE_SPAN,
    coherence: float = DEFAULT_COHERENCE,
    amplitude: float = 1.0,
    grid_levels: int | None = None,
) -> SceneSpec:
    """Wrapped fractal terrain phase with constant coherence and amplitude."""
    h = fractal_surface(shape, roughness, seed, phase_span, grid_levels)
    return SceneSpec(_constant(shape, amplitude), _constant(shape, coherence), wrap(h))
