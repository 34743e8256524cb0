"""Two-stage nonlocal filter with adaptive Gaussian patches and fringe compensation.

Both stages follow the same pattern. For every centre ``x`` and search offset
``d`` a patch dissimilarity gives a weight ``W_d(x)``; the centre then owns a
patch estimate ``zhat_x(o) = sum_d W_d(x) z(x + d + o)`` for every patch offset
``o``. Each pixel ``p`` finally averages the patch estimates that cover it,
weighted by the owning centre's equivalent number of looks ``L`` and window
``g``::

    zhat(p) = sum_o L(p-o) g_{p-o}(o) zhat_{p-o}(o) / normaliser

Swapping the sums turns this into one shifted accumulation per ``d`` with the
kernel ``K_d(p) = sum_o L(p-o) g_{p-o}(o) W_d(p-o)``, so the patch estimates are
never materialised. The normaliser is the sum of ``K_d(p)`` over the offsets
whose source pixel ``p + d`` exists.

Stage 1 compares SLC patches with a uniform 7x7 window. Stage 2 compares the
stage-1 estimates with a Gaussian window whose width follows the local phase
heterogeneity. With fringe compensation on, both stages remove the locally
estimated linear phase before comparing and averaging.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import _kernels
from .adaptivity import FringeField, Heterogeneity, estimate_fringe_field, heterogeneity_map
from .raster import EstimateBundle, SlcPair, form_interferogram, wrap
from .similarity import guidance_arrays

CALIBRATION_FILE = "xi_calibration.txt"
CALIBRATION_MAGIC = "nlswag-xi-calibration"
CALIBRATION_VERSION = 1
DEFAULT_SIGMA_GRID = (1.0, 1.5, 2.0, 2.5, 3.0)
CALIBRATION_LEVELS = (0.3, 0.5, 0.7, 0.9)


def _check_xi(coeffs) -> tuple[float, float, float]:
    c = tuple(float(v) for v in coeffs)
    if len(c) != 3:
        raise ValueError("xi needs exactly three coefficients")
    t = np.linspace(1.0 / 3.0, 1.0, 201)
    if not np.all(np.polynomial.polynomial.polyval(t, c) > 0):
        raise ValueError("xi polynomial must be positive for t in [1/3, 1]")
    return c


@dataclass(frozen=True)
class FilterParams:
    search_half: int = 10
    patch_half_stage1: int = 3
    patch_half_stage2: int = 5
    h1: float = 4.0
    h2: float = 2.0
    fringe_block: int = 32
    fringe_fft: int = 64
    sigma_smooth: float = 8.0
    xi_coeffs: tuple | None = None
    fringe_compensation: bool = True
    fringe_subbin: bool = True

    def __post_init__(self):
        for name in ("search_half", "patch_half_stage1", "patch_half_stage2"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 0:
                raise ValueError(f"{name} must be a non-negative integer")
        for name in ("fringe_block", "fringe_fft"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise ValueError(f"{name} must be a positive integer")
        if not (self.h1 > 0 and self.h2 > 0):
            raise ValueError("h1 and h2 must be positive")
        if self.fringe_fft < self.fringe_block:
            raise ValueError("fringe_fft must be >= fringe_block")
        if self.fringe_fft & (self.fringe_fft - 1):
            raise ValueError("fringe_fft must be a power of two")
        if not self.sigma_smooth >= 0:
            raise ValueError("sigma_smooth must be >= 0")
        if self.xi_coeffs is not None:
            object.__setattr__(self, "xi_coeffs", _check_xi(self.xi_coeffs))

    @property
    def offsets(self) -> np.ndarray:
        return search_offsets(self.search_half)


def search_offsets(half: int) -> np.ndarray:
    """(n, 2) int64 array of (row, col) offsets over ``[-half, half]^2``, row-major."""
    k = np.arange(-half, half + 1)
    rr, cc = np.meshgrid(k, k, indexing="ij")
    return np.column_stack([rr.ravel(), cc.ravel()]).astype(np.int64)


@dataclass(frozen=True)
class XiCalibration:
    """Spread of stage-2 dissimilarities versus Gaussian window width."""

    coherence_level: float
    sigma_grid: tuple
    stds: tuple
    coeffs: tuple

    def __call__(self, t):
        return np.polynomial.polynomial.polyval(t, self.coeffs)


@dataclass
class PatchEstimate:
    """Weighted means of one centre's patch, indexed like the patch offsets."""

    z: np.ndarray
    intensity: np.ndarray
    power1: np.ndarray
    power2: np.ndarray
    enl: float
    window: np.ndarray


@dataclass
class StageResult:
    bundle: EstimateBundle
    weights: np.ndarray | None
    patch_enl: np.ndarray
    offsets: np.ndarray


@dataclass
class PipelineResult:
    """Final estimate plus every intermediate product of the pipeline."""

    bundle: EstimateBundle
    guidance: EstimateBundle
    heterogeneity: Heterogeneity
    fringe: FringeField
    xi: tuple
    stage1_enl: np.ndarray
    stage2_patch_enl: np.ndarray


def enl_from_weights(weights) -> float:
    """``(sum w)^2 / sum w^2``."""
    w = np.asarray(weights, dtype=float)
    sq = np.sum(w * w)
    if sq == 0:
        raise ValueError("weights are all zero")
    return float(np.sum(w) ** 2 / sq)


def patch_weighted_mean(pair: SlcPair, weights, center, patch_half: int, fringe: FringeField | None = None,
                        window=None) -> PatchEstimate:
    """Weighted means over the search window for every offset of one patch.

    ``weights`` is a ``(2R+1, 2R+1)`` map indexed by search offset. Terms whose
    source pixel lies outside the raster are dropped without renormalising.
    With ``fringe`` the source value at ``y + o`` is rotated by
    ``exp(-j (y - x) . f(x + o))`` to remove the local linear trend.
    Patch offsets whose pixel ``x + o`` is outside the raster hold NaN.
    """
    weights = np.asarray(weights, dtype=float)
    R = (weights.shape[0] - 1) // 2
    z = form_interferogram(pair)
    i1 = np.abs(pair.master) ** 2
    i2 = np.abs(pair.slave) ** 2
    rows, cols = z.shape
    r0, c0 = center
    n = 2 * patch_half + 1
    out_z = np.full((n, n), np.nan + 0j)
    out_p1 = np.full((n, n), np.nan)
    out_p2 = np.full((n, n), np.nan)
    for a in range(-patch_half, patch_half + 1):
        for b in range(-patch_half, patch_half + 1):
            pr, pc = r0 + a, c0 + b
            if not (0 <= pr < rows and 0 <= pc < cols):
                continue
            acc_z, acc1, acc2 = 0j, 0.0, 0.0
            for dr in range(-R, R + 1):
                for dc in range(-R, R + 1):
                    sr, sc = pr + dr, pc + dc
                    if not (0 <= sr < rows and 0 <= sc < cols):
                        continue
                    w = weights[dr + R, dc + R]
                    v = z[sr, sc]
                    if fringe is not None:
                        v = v * np.exp(-1j * (dc * fringe.f_range[pr, pc] + dr * fringe.f_azimuth[pr, pc]))
                    acc_z += w * v
                    acc1 += w * i1[sr, sc]
                    acc2 += w * i2[sr, sc]
            out_z[a + patch_half, b + patch_half] = acc_z
            out_p1[a + patch_half, b + patch_half] = acc1
            out_p2[a + patch_half, b + patch_half] = acc2
    if window is None:
        window = np.ones((n, n))
    return PatchEstimate(out_z, 0.5 * (out_p1 + out_p2), out_p1, out_p2,
                         enl_from_weights(weights), np.asarray(window, dtype=float))


def _finish_bundle(acc_z, acc_p1, acc_p2, norm, enl) -> EstimateBundle:
    with np.errstate(divide="ignore", invalid="ignore"):
        zm = acc_z / norm
        p1 = acc_p1 / norm
        p2 = acc_p2 / norm
        den = np.sqrt(p1 * p2)
        coh = np.where(den > 0, np.abs(zm) / np.where(den > 0, den, 1.0), 0.0)
    coh = np.clip(coh, 0.0, 1.0)
    phase = wrap(np.angle(zm))
    inten = 0.5 * (p1 + p2)
    return EstimateBundle(phase, inten, coh, np.clip(enl, 1.0, None))


def _aggregate(pair, weights, patch_enl, offsets, window_sum, rot_r, rot_az):
    """Shifted accumulation of all offsets; ``window_sum(img, out)`` applies
    the aggregation window to ``img`` evaluated at the summed (centre) pixel."""
    z = form_interferogram(pair)
    i1 = np.abs(pair.master) ** 2
    i2 = np.abs(pair.slave) ** 2
    shape = z.shape
    acc_z = np.zeros(shape, dtype=complex)
    acc_p1 = np.zeros(shape)
    acc_p2 = np.zeros(shape)
    norm = np.zeros(shape)
    kern = np.empty(shape)
    for i, (dr, dc) in enumerate(offsets):
        window_sum(patch_enl * weights[i], kern)
        _kernels.accumulate_shifted(kern, int(dr), int(dc), z, i1, i2, rot_r, rot_az,
                                    acc_z, acc_p1, acc_p2, norm)
    lw = np.empty(shape)
    ll = np.empty(shape)
    window_sum(patch_enl, lw)
    window_sum(patch_enl * patch_enl, ll)
    enl = ll / lw
    return _finish_bundle(acc_z, acc_p1, acc_p2, norm, enl)


_NO_ROT = np.zeros((0, 1, 1), dtype=complex)


def _centre_as_best_neighbour(dissim, centre):
    """Give the centre the dissimilarity of its most similar neighbour.

    A patch compared with itself has a likelihood far above any other pair,
    which would leave the centre with nearly all the weight. Centres with no
    finite neighbour keep their own value.
    """
    best = np.full(dissim.shape[1:], np.inf)
    for i in range(len(dissim)):
        if i != centre:
            np.minimum(best, dissim[i], out=best)
    dissim[centre] = np.where(np.isfinite(best), best, dissim[centre])


def stage1_filter(pair: SlcPair, params: FilterParams = FilterParams(), keep_weights: bool = True,
                  fringe: FringeField | None = None) -> StageResult:
    """Guidance estimate from SLC patch likelihoods and uniform aggregation.

    With ``fringe`` given, pixel pairs are compared and averaged after
    removing the linear phase the fringe field predicts between them.
    """
    R = params.search_half
    P = params.patch_half_stage1
    offsets = search_offsets(R)
    n_off = len(offsets)
    s = np.abs(pair.master) ** 2 + np.abs(pair.slave) ** 2
    z = form_interferogram(pair)
    shape = z.shape
    index = {(int(a), int(b)): i for i, (a, b) in enumerate(offsets)}
    dissim = np.empty((n_off,) + shape)
    terms = np.empty(shape)
    mirror = np.empty(shape)
    sums = np.empty(shape)
    for i, (dr, dc) in enumerate(offsets):
        dr, dc = int(dr), int(dc)
        if (dr, dc) < (0, 0):
            continue  # filled from its mirror
        if fringe is None:
            _kernels.stage1_pixel_terms(s, z, dr, dc, terms)
        else:
            _kernels.stage1_pixel_terms_comp(s, z, dr, dc, fringe.f_range, fringe.f_azimuth, terms)
        _kernels.box_sum(terms, P, sums)
        _kernels.finish_stage1_dissim(sums, dr, dc, P, dissim[i])
        if (dr, dc) != (0, 0):
            # -log delta1(p, p - d) = terms[p - d]
            j = index[(-dr, -dc)]
            _kernels.shift_terms(terms, -dr, -dc, mirror)
            _kernels.box_sum(mirror, P, sums)
            _kernels.finish_stage1_dissim(sums, -dr, -dc, P, dissim[j])
    centre = index[(0, 0)]
    _centre_as_best_neighbour(dissim, centre)
    scale = np.full(shape, float(params.h1))
    patch_enl = _kernels.weights_inplace(dissim, scale, centre)
    weights = dissim

    box = lambda img, out: _kernels.box_sum(img, P, out)
    if fringe is None:
        rot_r = rot_az = _NO_ROT
    else:
        rot_r, rot_az = _rotators(fringe.f_range, R), _rotators(fringe.f_azimuth, R)
    bundle = _aggregate(pair, weights, patch_enl, offsets, box, rot_r, rot_az)
    return StageResult(bundle, weights if keep_weights else None, patch_enl, offsets)


def _rotators(freq, R):
    k = np.arange(-R, R + 1, dtype=float)[:, None, None]
    return np.exp(1j * k * freq[None])


def stage2_dissim(guide: EstimateBundle, sigma, offsets, patch_half: int, fringe: FringeField | None):
    """``(n_offsets, H, W)`` stack of Gaussian-windowed divergences."""
    inten, gam, phase = guidance_arrays(guide)
    inv_var = 1.0 / (inten * (1.0 - gam * gam))
    cplx = gam * np.exp(1j * phase)
    prof = _kernels.gauss_profile(np.ascontiguousarray(sigma, dtype=float), patch_half)
    g = _kernels.gauss_products(prof)
    R = int(np.abs(offsets).max()) if len(offsets) else 0
    if fringe is not None:
        rot_r, rot_az = _rotators(fringe.f_range, R), _rotators(fringe.f_azimuth, R)
    else:
        rot_r = rot_az = _NO_ROT
    shape = inten.shape
    full = _kernels.line_sums(prof)
    out = np.empty((len(offsets),) + shape)
    ta, tre, tim = np.empty(shape), np.empty(shape), np.empty(shape)
    pa, pre, pim = (np.empty((patch_half + 1,) + shape) for _ in range(3))
    sa, sre, sim = np.empty(shape), np.empty(shape), np.empty(shape)
    for i, (dr, dc) in enumerate(offsets):
        dr, dc = int(dr), int(dc)
        _kernels.stage2_pixel_terms(inten, inv_var, cplx, dr, dc, ta, tre, tim)
        _kernels.pair_sums(ta, patch_half, pa)
        _kernels.pair_sums(tre, patch_half, pre)
        _kernels.pair_sums(tim, patch_half, pim)
        _kernels.center_gauss_sum3(g, pa, pre, pim, patch_half, sa, sre, sim)
        _kernels.finish_stage2_dissim(sa, sre, sim, prof, full, dr, dc, patch_half, rot_r, rot_az, out[i])
    return out, prof, g


def xi_scale(coeffs, sigma):
    """``xi(1 / sigma)`` floored at a tiny positive value."""
    xi = np.polynomial.polynomial.polyval(1.0 / np.asarray(sigma, dtype=float), coeffs)
    return np.maximum(xi, 1e-12)


def stage2_filter(pair: SlcPair, guide: EstimateBundle, eta, fringe: FringeField | None,
                  params: FilterParams, xi) -> StageResult:
    """Final estimate from guidance divergences with adaptive Gaussian patches.

    ``xi`` is a coefficient triple ``(c0, c1, c2)``. ``fringe=None`` or
    ``params.fringe_compensation=False`` disables compensation.
    """
    from .adaptivity import eta_to_sigma

    R = params.search_half
    P = params.patch_half_stage2
    offsets = search_offsets(R)
    sigma = eta_to_sigma(eta)
    use = fringe if params.fringe_compensation else None
    dissim, prof, g = stage2_dissim(guide, sigma, offsets, P, use)
    scale = params.h2 * xi_scale(_check_xi(xi), sigma)
    self_index = (len(offsets) - 1) // 2
    patch_enl = _kernels.weights_inplace(dissim, scale, self_index)
    if use is not None:
        rot_r, rot_az = _rotators(use.f_range, R), _rotators(use.f_azimuth, R)
    else:
        rot_r = rot_az = _NO_ROT
    gsum = lambda img, out: _kernels.window_gauss_sum(g, img, P, out)
    bundle = _aggregate(pair, dissim, patch_enl, offsets, gsum, rot_r, rot_az)
    return StageResult(bundle, dissim, patch_enl, offsets)


# -- xi calibration ---------------------------------------------------------

def fit_xi(sigma_grid, stds) -> tuple[float, float, float]:
    """Least-squares quadratic in ``t = 1 / sigma`` through the measured spreads."""
    sigma_grid = np.asarray(sigma_grid, dtype=float)
    stds = np.asarray(stds, dtype=float)
    if sigma_grid.size < 3:
        raise ValueError("at least three window widths are needed for a quadratic fit")
    if sigma_grid.shape != stds.shape:
        raise ValueError("sigma grid and measurements differ in length")
    c = np.polynomial.polynomial.polyfit(1.0 / sigma_grid, stds, 2)
    return tuple(float(v) for v in c)


def _fringe(z, params):
    return estimate_fringe_field(z, params.fringe_block, params.fringe_fft, params.sigma_smooth,
                                 params.fringe_subbin)


def _compensation_field(pair, params):
    if not params.fringe_compensation:
        return None
    z = form_interferogram(pair)
    return _fringe(z, params)


def calibrate_xi(coherence_level: float = 0.7, sigma_grid=DEFAULT_SIGMA_GRID, seed: int = 0,
                 shape=(96, 96), n_pairs: int = 4000, params: FilterParams = FilterParams()) -> XiCalibration:
    """Measure the spread of stage-2 dissimilarities on a homogeneous scene.

    A zero-phase scene at ``coherence_level`` is simulated and run through
    stage 1. For each window width the divergence between ``n_pairs`` random
    centres and partners inside their search window is evaluated (same pairs
    for every width, centres kept a search radius from the border), and the
    standard deviations are fitted with :func:`fit_xi`.
    """
    from .simulate import SceneSpec, sample_slc_pair

    sigma_grid = tuple(float(s) for s in sigma_grid)
    if len(sigma_grid) < 3:
        raise ValueError("at least three window widths are needed for a quadratic fit")
    ones = np.ones(shape)
    scene = SceneSpec(ones, ones * coherence_level, np.zeros(shape))
    pair = sample_slc_pair(scene, seed, stream=0xCA11)
    fringe = _compensation_field(pair, params)
    guide = stage1_filter(pair, params, keep_weights=False, fringe=fringe).bundle

    R = params.search_half
    rng = np.random.Generator(np.random.Philox(key=[seed, 0xCA12]))
    margin = R + params.patch_half_stage2
    rows, cols = shape
    if rows <= 2 * margin or cols <= 2 * margin:
        raise ValueError("calibration scene is too small for the search window")
    cr = rng.integers(margin, rows - margin, n_pairs)
    cc = rng.integers(margin, cols - margin, n_pairs)
    offsets = search_offsets(R)
    offsets = offsets[np.any(offsets != 0, axis=1)]
    pick = rng.integers(0, len(offsets), n_pairs)

    stds = []
    for s in sigma_grid:
        stack, _, _ = stage2_dissim(guide, np.full(shape, s), offsets, params.patch_half_stage2, fringe)
        vals = stack[pick, cr, cc]
        stds.append(float(np.std(vals)))
    return XiCalibration(float(coherence_level), sigma_grid, tuple(stds), fit_xi(sigma_grid, stds))


def write_calibration_table(rows, path) -> None:
    """Write ``(coherence, c0, c1, c2)`` rows as the versioned text table."""
    with open(path, "w") as fh:
        fh.write(f"{CALIBRATION_MAGIC} {CALIBRATION_VERSION}\n")
        fh.write("# coherence c0 c1 c2   xi(t) = c0 + c1 t + c2 t^2, t = 1/sigma\n")
        for row in rows:
            g, c0, c1, c2 = (float(v) for v in row)
            fh.write(f"{g:.6f} {c0!r} {c1!r} {c2!r}\n")


def read_calibration_table(path=None) -> np.ndarray:
    """Rows of ``(coherence, c0, c1, c2)``; defaults to the shipped table."""
    if path is None:
        text = resources.files("nlswag").joinpath("data", CALIBRATION_FILE).read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    lines = [ln.strip() for ln in text.splitlines()]
    if not lines or lines[0].split() != [CALIBRATION_MAGIC, str(CALIBRATION_VERSION)]:
        raise ValueError("not a version-1 xi calibration table")
    rows = []
    for ln in lines[1:]:
        if not ln or ln.startswith("#"):
            continue
        vals = [float(v) for v in ln.split()]
        if len(vals) != 4:
            raise ValueError(f"calibration row needs 4 values: {ln!r}")
        _check_xi(vals[1:])
        rows.append(vals)
    if not rows:
        raise ValueError("calibration table is empty")
    return np.array(rows)


def select_xi(coherence, table=None) -> tuple[float, float, float]:
    """Coefficients of the calibration level nearest to ``coherence``.

    Ties go to the lower level.
    """
    table = read_calibration_table() if table is None else np.asarray(table)
    i = int(np.argmin(np.abs(table[:, 0] - coherence)))
    return tuple(float(v) for v in table[i, 1:])


# -- full pipeline ------------------------------------------------------------

def nlswag(pair: SlcPair, params: FilterParams = FilterParams(), calibration=None) -> PipelineResult:
    """Stage 1, heterogeneity and fringe estimation, then stage 2.

    ``calibration`` overrides the shipped xi table; ``params.xi_coeffs``
    overrides both.
    """
    z = form_interferogram(pair)
    fringe = _fringe(z, params)
    st1 = stage1_filter(pair, params, keep_weights=True,
                        fringe=fringe if params.fringe_compensation else None)
    het = heterogeneity_map(pair, st1.weights, st1.offsets)
    st1.weights = None  # the stack is the largest allocation; drop before stage 2
    if params.xi_coeffs is not None:
        xi = params.xi_coeffs
    else:
        xi = select_xi(float(np.median(st1.bundle.coherence)), calibration)
    st2 = stage2_filter(pair, st1.bundle, het.eta, fringe, params, xi)
    return PipelineResult(st2.bundle, st1.bundle, het, fringe, tuple(xi), st1.bundle.enl, st2.patch_enl)
