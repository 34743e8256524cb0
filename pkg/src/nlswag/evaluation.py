"""Monte-Carlo experiments on synthetic scenes: ramps, steps and fractal terrain.

Every experiment draws independent noise realisations of one ground-truth
scene, runs each method on the same draws and accumulates per-pixel
circular statistics of the phase error in trial order, so results are
reproducible for a fixed seed.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from . import simulate
from .baselines import boxcar
from .filter import FilterParams, nlswag, stage1_filter
from .raster import Raster, wrap, write_raster
from .render import render_raster

RESULTANT_FLOOR = 1e-9
STD_SENTINEL = float(np.sqrt(-2.0 * np.log(RESULTANT_FLOOR)))
DESK_TRIALS = 200
BORDER = 10
DEFAULT_SLOPES = tuple(np.round(np.arange(0.0, 1.51, 0.1), 10))


@dataclass
class TrialStats:
    """Per-pixel circular error statistics over a set of trials."""

    bias: np.ndarray
    std: np.ndarray
    enl: np.ndarray
    trials: int
    flagged: np.ndarray

    def interior(self, margin: int = BORDER):
        sl = (slice(margin, -margin or None), slice(margin, -margin or None))
        return self.bias[sl], self.std[sl], self.enl[sl]

    def summary(self, margin: int = BORDER) -> dict:
        b, s, e = self.interior(margin)
        return {"std_rad": float(s.mean()), "enl": float(e.mean()), "max_abs_bias_rad": float(np.abs(b).max())}


class CircularAccumulator:
    """Streaming sum of unit error phasors and of ENL, one trial at a time."""

    def __init__(self, shape):
        self.phasor = np.zeros(shape, dtype=complex)
        self.enl = np.zeros(shape)
        self.trials = 0

    def add(self, estimate, truth, enl=None):
        self.phasor += np.exp(1j * wrap(np.asarray(estimate) - truth))
        if enl is not None:
            self.enl += enl
        self.trials += 1

    def stats(self) -> TrialStats:
        if self.trials < 1:
            raise ValueError("no trials accumulated")
        return _stats_from_mean(self.phasor / self.trials, self.enl / self.trials, self.trials)


def _stats_from_mean(mean, enl, trials) -> TrialStats:
    r = np.abs(mean)
    flagged = r < RESULTANT_FLOOR
    # r can round a hair above 1 when every error is zero
    std = np.sqrt(-2.0 * np.log(np.clip(r, RESULTANT_FLOOR, 1.0)))
    return TrialStats(np.angle(mean), std, enl, trials, flagged)


def circular_stats(estimates, truth, enl=None) -> TrialStats:
    """Circular bias and std of ``wrap(estimate - truth)`` per pixel.

    ``std = sqrt(-2 ln R)`` with ``R`` the mean resultant length; pixels with
    ``R < 1e-9`` are capped at :data:`STD_SENTINEL` and flagged.
    """
    est = np.asarray(estimates, dtype=float)
    if est.ndim == 2:
        est = est[None]
    if est.shape[0] < 1:
        raise ValueError("at least one estimate is required")
    mean = np.mean(np.exp(1j * wrap(est - truth)), axis=0)
    enl_mean = np.zeros(mean.shape) if enl is None else np.mean(np.asarray(enl, dtype=float).reshape(est.shape), axis=0)
    return _stats_from_mean(mean, enl_mean, est.shape[0])


# -- methods --------------------------------------------------------------------

def make_methods(names, params: FilterParams = FilterParams(), boxcar_k: int = 5, calibration=None):
    """Map method names onto callables ``pair -> EstimateBundle``.

    Known names: ``boxcar``, ``stage1``, ``nlswag`` and ``nlswag-nocomp``
    (fringe compensation disabled).
    """
    from dataclasses import replace

    table = {
        "boxcar": lambda pair: boxcar(pair, boxcar_k),
        "stage1": lambda pair: stage1_filter(pair, params, keep_weights=False).bundle,
        "nlswag": lambda pair: nlswag(pair, replace(params, fringe_compensation=True), calibration).bundle,
        "nlswag-nocomp": lambda pair: nlswag(pair, replace(params, fringe_compensation=False), calibration).bundle,
    }
    out = {}
    for n in names:
        if n not in table:
            raise ValueError(f"unknown method {n!r}; choose from {sorted(table)}")
        out[n] = table[n]
    return out


def run_trials(scene, methods, trials: int, seed: int) -> dict:
    """Accumulate per-method statistics over ``trials`` noise draws."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    accs = {name: CircularAccumulator(scene.shape) for name in methods}
    for t in range(trials):
        pair = simulate.sample_slc_pair(scene, seed, stream=t)
        for name, fn in methods.items():
            b = fn(pair)
            accs[name].add(b.phase, scene.true_phase, b.enl)
    return {name: acc.stats() for name, acc in accs.items()}


# -- reports --------------------------------------------------------------------

@dataclass
class ExperimentReport:
    experiment: str
    parameters: dict
    rows: list
    paths: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    def write_csv(self, path, columns) -> str:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in self.rows:
                w.writerow([_fmt(row[c]) for c in columns])
        self.paths.append(path)
        return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


SLOPE_COLUMNS = ["freq_rad_per_px", "method", "std_rad", "enl"]
FRACTAL_COLUMNS = ["method", "std_rad", "enl", "max_abs_bias_rad", "trials"]
STEP_COLUMNS = ["method", "column", "mean_rad", "std_rad", "enl"]


def slope_sweep(frequencies=DEFAULT_SLOPES, coherence: float = simulate.DEFAULT_COHERENCE, trials: int = 20,
                methods=("boxcar", "nlswag", "nlswag-nocomp"), seed: int = 0, shape=(96, 96),
                params: FilterParams = FilterParams(), out_dir=None, margin: int = BORDER) -> ExperimentReport:
    """Mean circular std versus range fringe frequency of a linear ramp."""
    fns = make_methods(methods, params)
    rows = []
    stats = {}
    for f in frequencies:
        scene = simulate.make_ramp(shape, (float(f), 0.0), coherence)
        res = run_trials(scene, fns, trials, seed)
        for name in methods:
            s = res[name].summary(margin)
            rows.append({"freq_rad_per_px": float(f), "method": name, "std_rad": s["std_rad"], "enl": s["enl"]})
            stats[(float(f), name)] = res[name]
    rep = ExperimentReport("slope", {"coherence": coherence, "trials": trials, "seed": seed,
                                     "shape": tuple(shape), "frequencies": [float(f) for f in frequencies]},
                           rows, stats=stats)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        rep.write_csv(os.path.join(out_dir, "slope.csv"), SLOPE_COLUMNS)
    return rep


STEP_VARIANTS = {
    "plain": dict(coherence=(0.7, 0.7), intensity_ratio=1.0),
    "intensity-coherence": dict(coherence=(0.6, 0.8), intensity_ratio=10 ** (6 / 10)),
}


def step_scene(variant: str, shape=(32, 64)) -> simulate.SceneSpec:
    if variant not in STEP_VARIANTS:
        raise ValueError(f"unknown step variant {variant!r}; choose from {sorted(STEP_VARIANTS)}")
    return simulate.make_step(shape, **STEP_VARIANTS[variant])


@dataclass
class StepProfile:
    """Column profiles pooled over interior rows and all trials."""

    mean: np.ndarray
    std: np.ndarray
    enl: np.ndarray
    edge: int


def step_response(variant: str = "plain", trials: int = 1000, methods=("boxcar", "nlswag"), seed: int = 0,
                  shape=(32, 64), params: FilterParams = FilterParams(), out_dir=None,
                  row_margin: int = 8) -> ExperimentReport:
    """Per-column mean phase and circular std across a vertical phase edge.

    Rows are statistically identical, so each column pools the interior rows
    (``row_margin`` away from the top and bottom) of every trial.
    """
    scene = step_scene(variant, shape)
    fns = make_methods(methods, params)
    rows_sl = slice(row_margin, shape[0] - row_margin)
    if rows_sl.stop <= rows_sl.start:
        raise ValueError("scene has no interior rows")
    acc = {n: np.zeros(shape[1], dtype=complex) for n in methods}
    enl = {n: np.zeros(shape[1]) for n in methods}
    for t in range(trials):
        pair = simulate.sample_slc_pair(scene, seed, stream=t)
        for name, fn in fns.items():
            b = fn(pair)
            acc[name] += np.exp(1j * b.phase[rows_sl]).sum(axis=0)
            enl[name] += b.enl[rows_sl].sum(axis=0)
    n = trials * (rows_sl.stop - rows_sl.start)
    rows = []
    profiles = {}
    for name in methods:
        m = acc[name] / n
        r = np.clip(np.abs(m), RESULTANT_FLOOR, 1.0)
        prof = StepProfile(np.angle(m), np.sqrt(-2.0 * np.log(r)), enl[name] / n, shape[1] // 2)
        profiles[name] = prof
        for c in range(shape[1]):
            rows.append({"method": name, "column": c, "mean_rad": float(prof.mean[c]),
                         "std_rad": float(prof.std[c]), "enl": float(prof.enl[c])})
    rep = ExperimentReport("step", {"variant": variant, "trials": trials, "seed": seed, "shape": tuple(shape)},
                           rows, stats=profiles)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        rep.write_csv(os.path.join(out_dir, f"step_{variant}.csv"), STEP_COLUMNS)
    return rep


def transition_distance(mean_profile, low: float, high: float, edge: int) -> float:
    """Columns between the 50% and 90% crossings of a rising phase profile.

    Crossings are located by linear interpolation, searching outward from
    the edge column.
    """
    frac = (np.asarray(mean_profile) - low) / (high - low)

    def crossing(level):
        for c in range(max(edge - 1, 0), len(frac) - 1):
            a, b = frac[c], frac[c + 1]
            if a < level <= b:
                return c + (level - a) / (b - a)
        # search left of the edge as well
        for c in range(max(edge - 1, 0) - 1, -1, -1):
            a, b = frac[c], frac[c + 1]
            if a < level <= b:
                return c + (level - a) / (b - a)
        raise ValueError(f"profile never crosses {level:.0%}")

    return float(crossing(0.9) - crossing(0.5))


def std_halo_width(std_profile, edge: int, factor: float = 1.5, plateau_gap: int = 15, margin: int = BORDER) -> int:
    """Longest run of columns whose std exceeds ``factor`` times its side's plateau.

    Each side's plateau is the median std of columns at least
    ``plateau_gap`` from the edge and ``margin`` from the raster border.
    """
    std = np.asarray(std_profile)
    n = len(std)
    left = std[margin:max(edge - plateau_gap, margin + 1)]
    right = std[min(edge + plateau_gap, n - margin - 1):n - margin]
    if left.size == 0 or right.size == 0:
        raise ValueError("profile too short for plateau estimates")
    plateau = np.where(np.arange(n) < edge, np.median(left), np.median(right))
    high = std > factor * plateau
    high[:margin] = False
    high[n - margin:] = False
    best = run = 0
    for h in high:
        run = run + 1 if h else 0
        best = max(best, run)
    return int(best)


def fractal_experiment(seed: int = 1, trials: int = DESK_TRIALS, methods=("boxcar", "nlswag"),
                       shape=(256, 256), phase_span: float | None = None,
                       coherence: float = simulate.DEFAULT_COHERENCE,
                       params: FilterParams = FilterParams(), out_dir=None, margin: int = BORDER) -> ExperimentReport:
    """Fixed fractal truth, repeated noise draws, per-method std, ENL and bias."""
    span = simulate.FRACTAL_PHASE_SPAN if phase_span is None else phase_span
    scene = simulate.make_fractal(shape, seed=seed, phase_span=span, coherence=coherence)
    fns = make_methods(methods, params)
    res = run_trials(scene, fns, trials, seed)
    rows = []
    for name in methods:
        s = res[name].summary(margin)
        rows.append({"method": name, **s, "trials": trials})
    rep = ExperimentReport("fractal", {"seed": seed, "trials": trials, "shape": tuple(shape),
                                       "phase_span": span, "coherence": coherence}, rows, stats=res)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        rep.write_csv(os.path.join(out_dir, "fractal.csv"), FRACTAL_COLUMNS)
        truth = Raster(scene.true_phase, "phase")
        write_raster(truth, os.path.join(out_dir, "truth_phase"))
        render_raster(truth, os.path.join(out_dir, "truth_phase.pgm"))
        rep.paths.append(os.path.join(out_dir, "truth_phase.bin"))
        for name, st in res.items():
            for kind, arr, sem in (("bias", st.bias, "phase"), ("std", st.std, "sigma")):
                stem = os.path.join(out_dir, f"{name}_{kind}")
                r = Raster(arr, sem)
                write_raster(r, stem)
                render_raster(r, stem + ".pgm", "minmax")
                rep.paths.extend([stem + ".bin", stem + ".pgm"])
    return rep
