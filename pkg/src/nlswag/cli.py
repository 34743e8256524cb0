"""Command-line entry point.

Exit codes: 0 success, 2 missing file, 3 invalid configuration, 4 shape
mismatch, 5 malformed raster. Failures print one line to stderr of the form
``nlswag: error[<category>]: <message>``.

Results do not depend on ``--threads``: every parallel kernel writes
disjoint output rows and performs its reductions in a fixed order.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import evaluation, simulate
from .baselines import boxcar
from .config import FILTER_KEYS, ConfigError, filter_params, read_config
from .filter import (CALIBRATION_LEVELS, DEFAULT_SIGMA_GRID, FilterParams, calibrate_xi, nlswag,
                     read_calibration_table, stage1_filter, write_calibration_table)
from .raster import (Raster, RasterError, ShapeMismatchError, read_pair, read_raster,
                     write_pair, write_raster)
from .render import render_raster

EXIT_MISSING = 2
EXIT_CONFIG = 3
EXIT_SHAPE = 4
EXIT_RASTER = 5

_CATEGORY = {EXIT_MISSING: "missing-file", EXIT_CONFIG: "invalid-config",
             EXIT_SHAPE: "shape-mismatch", EXIT_RASTER: "invalid-raster"}

_DEFAULTS = FilterParams()


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    """Usage errors count as invalid configuration."""

    def error(self, message):
        raise CliError(EXIT_CONFIG, message)


def _fmt_default(name):
    v = getattr(_DEFAULTS, name)
    if v is None:
        return "from calibration table"
    return str(v)


# -- simulate ---------------------------------------------------------------------

def _write_scene(scene: simulate.SceneSpec, out):
    os.makedirs(out, exist_ok=True)
    write_raster(Raster(scene.amplitude, "amplitude"), os.path.join(out, "amplitude"))
    write_raster(Raster(scene.coherence, "coherence"), os.path.join(out, "coherence"))
    write_raster(Raster(scene.true_phase, "phase"), os.path.join(out, "true_phase"))


def _read_scene(directory) -> simulate.SceneSpec:
    parts = {}
    for name, sem in (("amplitude", "amplitude"), ("coherence", "coherence"), ("true_phase", "phase")):
        r = read_raster(os.path.join(directory, name), validate=True)
        if r.semantic != sem:
            raise RasterError(f"{name}: expected semantic {sem!r}, found {r.semantic!r}")
        parts[name] = r.values.astype(float)
    shapes = {v.shape for v in parts.values()}
    if len(shapes) != 1:
        raise ShapeMismatchError(f"scene rasters differ in shape: {sorted(shapes)}")
    return simulate.SceneSpec(**parts)


def _shape(args):
    if args.size is not None:
        if args.shape is not None:
            raise CliError(EXIT_CONFIG, "give --size or --shape, not both")
        return (args.size, args.size)
    return tuple(args.shape) if args.shape is not None else (256, 256)


def cmd_simulate(args):
    if args.kind == "sample":
        scene = _read_scene(args.scene)
    else:
        shape = _shape(args)
        if min(shape) < 1:
            raise CliError(EXIT_CONFIG, "scene shape must be positive")
        try:
            if args.kind == "ramp":
                scene = simulate.make_ramp(shape, tuple(args.freq), args.coherence, args.amplitude)
            elif args.kind == "step":
                variant = evaluation.STEP_VARIANTS[args.variant]
                scene = simulate.make_step(shape, amplitude=args.amplitude, **variant)
            else:
                scene = simulate.make_fractal(shape, roughness=args.roughness, seed=args.seed,
                                              phase_span=args.phase_span, coherence=args.coherence,
                                              amplitude=args.amplitude)
        except ValueError as exc:
            raise CliError(EXIT_CONFIG, str(exc)) from None
        _write_scene(scene, args.out)
    if not args.no_pair:
        noise_seed = args.seed if args.noise_seed is None else args.noise_seed
        write_pair(simulate.sample_slc_pair(scene, noise_seed, args.stream), args.out)


# -- filter -----------------------------------------------------------------------

def _settings(args) -> dict:
    """Config file values overridden by explicitly given flags."""
    settings = read_config(args.config) if args.config else {}
    for key in FILTER_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            settings[key] = tuple(v) if key == "xi_coeffs" else v
    for key in ("method", "k", "master", "slave", "input", "out", "calibration"):
        v = getattr(args, key, None)
        if v is not None:
            settings[key] = v
    return settings


def _check_file(path):
    stem = path[:-4] if path.endswith((".bin", ".json")) else path
    for ext in (".bin", ".json"):
        if not os.path.exists(stem + ext):
            raise CliError(EXIT_MISSING, f"{stem + ext} does not exist")


def cmd_filter(args):
    if args.config and not os.path.exists(args.config):
        raise CliError(EXIT_MISSING, f"{args.config} does not exist")
    s = _settings(args)
    method = s.get("method", "nlswag")
    if method not in ("boxcar", "stage1", "nlswag"):
        raise CliError(EXIT_CONFIG, f"unknown method {method!r}")
    params = filter_params(s)
    k = s.get("k")
    if k is not None and method != "boxcar":
        raise CliError(EXIT_CONFIG, "k only applies to --method boxcar")
    k = 5 if k is None else k
    if method == "boxcar" and (k < 1 or k % 2 == 0):
        raise CliError(EXIT_CONFIG, f"boxcar window k must be odd and positive, got {k}")
    if method == "boxcar":
        given = [key for key in FILTER_KEYS if key in s]
        if given:
            raise CliError(EXIT_CONFIG, f"{', '.join(given)} do not apply to --method boxcar")
    if (args.dump_eta or args.dump_fringe) and method != "nlswag":
        raise CliError(EXIT_CONFIG, "--dump-eta and --dump-fringe need --method nlswag")
    if "calibration" in s and method != "nlswag":
        raise CliError(EXIT_CONFIG, "calibration only applies to --method nlswag")
    if "input" in s and ("master" in s or "slave" in s):
        raise CliError(EXIT_CONFIG, "give input or master/slave, not both")
    if "input" in s:
        master, slave = os.path.join(s["input"], "master"), os.path.join(s["input"], "slave")
    elif "master" in s and "slave" in s:
        master, slave = s["master"], s["slave"]
    else:
        raise CliError(EXIT_CONFIG, "need input, or both master and slave")
    out = s.get("out")
    if out is None:
        raise CliError(EXIT_CONFIG, "need an output directory (out)")
    table = None
    if "calibration" in s:
        if not os.path.exists(s["calibration"]):
            raise CliError(EXIT_MISSING, f"{s['calibration']} does not exist")
        try:
            table = read_calibration_table(s["calibration"])
        except ValueError as exc:
            raise CliError(EXIT_CONFIG, f"calibration table: {exc}") from None
    _check_file(master)
    _check_file(slave)
    pair = read_pair(master, slave)

    extra = {}
    if method == "boxcar":
        bundle = boxcar(pair, k)
    elif method == "stage1":
        bundle = stage1_filter(pair, params, keep_weights=False).bundle
    else:
        res = nlswag(pair, params, table)
        bundle = res.bundle
        if args.dump_eta:
            extra["eta"] = Raster(res.heterogeneity.eta, "heterogeneity")
            extra["sigma"] = Raster(res.heterogeneity.sigma, "sigma")
        if args.dump_fringe:
            extra["fringe_range"] = Raster(res.fringe.f_range, "frequency")
            extra["fringe_azimuth"] = Raster(res.fringe.f_azimuth, "frequency")
        if args.dump_enl:
            extra["stage1_enl"] = Raster(res.stage1_enl, "enl")

    os.makedirs(out, exist_ok=True)
    for name, r in bundle.rasters().items():
        write_raster(r, os.path.join(out, name))
    for name, r in extra.items():
        write_raster(r, os.path.join(out, name))


# -- calibrate --------------------------------------------------------------------

def cmd_calibrate(args):
    levels = tuple(args.levels)
    for g in levels:
        if not 0.0 <= g < 1.0:
            raise CliError(EXIT_CONFIG, f"coherence level {g} outside [0, 1)")
    grid = tuple(args.sigma_grid)
    if len(grid) < 3 or min(grid) < 1.0 or max(grid) > 3.0:
        raise CliError(EXIT_CONFIG, "sigma grid needs >= 3 points inside [1, 3]")
    rows = []
    for g in levels:
        cal = calibrate_xi(g, grid, seed=args.seed, n_pairs=args.pairs)
        rows.append((g, *cal.coeffs))
    parent = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(parent, exist_ok=True)
    write_calibration_table(rows, args.out)


# -- eval -------------------------------------------------------------------------

_EVAL_TRIALS = {"slope": 20, "step": 1000, "fractal": evaluation.DESK_TRIALS}


def _snapshot(scene, methods, seed, out, tag):
    """One noise draw of ``scene`` filtered by each method, as PGM."""
    pair = simulate.sample_slc_pair(scene, seed, stream=0)
    render_raster(Raster(scene.true_phase, "phase"), os.path.join(out, f"{tag}_truth.pgm"))
    z = pair.master * np.conj(pair.slave)
    render_raster(Raster(np.angle(z), "phase"), os.path.join(out, f"{tag}_noisy.pgm"))
    for name, fn in methods.items():
        render_raster(Raster(fn(pair).phase, "phase"), os.path.join(out, f"{tag}_{name}.pgm"))


def cmd_eval(args):
    if args.paper_scale and args.trials is not None:
        raise CliError(EXIT_CONFIG, "--paper-scale fixes the trial count; drop --trials")
    trials = simulate.DEFAULT_TRIALS if args.paper_scale else args.trials
    if trials is None:
        trials = _EVAL_TRIALS[args.experiment]
    if trials < 1:
        raise CliError(EXIT_CONFIG, "--trials must be >= 1")
    if args.config and not os.path.exists(args.config):
        raise CliError(EXIT_MISSING, f"{args.config} does not exist")
    settings = read_config(args.config) if args.config else {}
    extra = set(settings) - set(FILTER_KEYS)
    if extra:
        raise CliError(EXIT_CONFIG, f"keys {sorted(extra)} do not apply to eval")
    params = filter_params(settings)
    out = args.out
    os.makedirs(out, exist_ok=True)
    if args.experiment == "slope":
        methods = tuple(args.methods or ("boxcar", "nlswag", "nlswag-nocomp"))
        freqs = tuple(args.frequencies or evaluation.DEFAULT_SLOPES)
        evaluation.slope_sweep(freqs, trials=trials, methods=methods, seed=args.seed,
                               shape=(args.size, args.size), params=params, out_dir=out)
        scene = simulate.make_ramp((args.size, args.size), (max(freqs), 0.0))
        tag = "slope"
    elif args.experiment == "step":
        methods = tuple(args.methods or ("boxcar", "nlswag"))
        evaluation.step_response(args.variant, trials=trials, methods=methods, seed=args.seed,
                                 params=params, out_dir=out)
        scene = evaluation.step_scene(args.variant)
        tag = f"step_{args.variant}"
    else:
        methods = tuple(args.methods or ("boxcar", "nlswag"))
        evaluation.fractal_experiment(seed=args.seed, trials=trials, methods=methods,
                                      shape=(args.size, args.size), params=params, out_dir=out)
        scene = simulate.make_fractal((args.size, args.size), seed=args.seed)
        tag = "fractal"
    _snapshot(scene, evaluation.make_methods(methods, params), args.seed, out, tag)


# -- parser -----------------------------------------------------------------------

def _add_filter_params(p):
    g = p.add_argument_group("filter parameters (override the config file)")
    g.add_argument("--search-half", dest="search_half", type=int,
                   help=f"search window half-width (default {_fmt_default('search_half')})")
    g.add_argument("--patch-half-stage1", dest="patch_half_stage1", type=int,
                   help=f"stage-1 patch half-width (default {_fmt_default('patch_half_stage1')})")
    g.add_argument("--patch-half-stage2", dest="patch_half_stage2", type=int,
                   help=f"stage-2 Gaussian window half-width (default {_fmt_default('patch_half_stage2')})")
    g.add_argument("--h1", type=float, help=f"stage-1 smoothing parameter (default {_fmt_default('h1')})")
    g.add_argument("--h2", type=float, help=f"stage-2 smoothing parameter (default {_fmt_default('h2')})")
    g.add_argument("--fringe-block", dest="fringe_block", type=int,
                   help=f"fringe estimation block size (default {_fmt_default('fringe_block')})")
    g.add_argument("--fringe-fft", dest="fringe_fft", type=int,
                   help=f"zero-padded block FFT size (default {_fmt_default('fringe_fft')})")
    g.add_argument("--sigma-smooth", dest="sigma_smooth", type=float,
                   help=f"fringe field smoothing width in px (default {_fmt_default('sigma_smooth')})")
    g.add_argument("--xi", dest="xi_coeffs", type=float, nargs=3, metavar=("C0", "C1", "C2"),
                   help=f"xi polynomial coefficients (default {_fmt_default('xi_coeffs')})")
    g.add_argument("--no-fringe-compensation", dest="fringe_compensation", action="store_const",
                   const=False, help="disable fringe compensation (default: enabled)")
    g.add_argument("--no-fringe-subbin", dest="fringe_subbin", action="store_const", const=False,
                   help="use the plain FFT peak bin as fringe frequency (default: parabolic sub-bin refinement)")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = _Parser(prog="nlswag", description="Adaptive nonlocal InSAR phase filtering.", formatter_class=fmt)
    p.add_argument("--threads", type=int, default=0,
                   help="worker threads for compiled kernels, 0 = all available; results do not depend on it")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="write a synthetic scene and a sampled SLC pair", formatter_class=fmt)
    kinds = sim.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    for kind, help_ in (("ramp", "linear phase ramp"), ("step", "vertical phase edge"),
                        ("fractal", "diamond-square terrain phase"), ("sample", "draw a pair from a scene directory")):
        k = kinds.add_parser(kind, help=help_, formatter_class=fmt)
        k.add_argument("--out", required=True, help="output directory")
        k.add_argument("--seed", type=int, default=0, help="terrain seed (fractal) and noise seed")
        k.add_argument("--noise-seed", type=int, default=None, help="noise seed if different from --seed")
        k.add_argument("--stream", type=int, default=0, help="noise stream index")
        k.add_argument("--no-pair", action="store_true", help="write the scene only")
        if kind == "sample":
            k.add_argument("--scene", required=True, help="directory holding amplitude, coherence, true_phase")
            continue
        k.add_argument("--size", type=int, default=None, help="square scene side; exclusive with --shape")
        k.add_argument("--shape", type=int, nargs=2, metavar=("ROWS", "COLS"), default=None,
                       help="scene shape, 256 256 when neither is given")
        k.add_argument("--amplitude", type=float, default=1.0, help="amplitude")
        if kind == "ramp":
            k.add_argument("--freq", type=float, nargs=2, metavar=("F_RANGE", "F_AZ"), default=(0.5, 0.0),
                           help="fringe frequency in rad/px")
            k.add_argument("--coherence", type=float, default=simulate.DEFAULT_COHERENCE, help="coherence")
        elif kind == "step":
            k.add_argument("--variant", choices=sorted(evaluation.STEP_VARIANTS), default="plain",
                           help="edge type")
        else:
            k.add_argument("--coherence", type=float, default=simulate.DEFAULT_COHERENCE, help="coherence")
            k.add_argument("--roughness", type=float, default=1.0, help="diamond-square roughness")
            k.add_argument("--phase-span", type=float, default=simulate.FRACTAL_PHASE_SPAN,
                           help="unwrapped phase span in rad")
        k.set_defaults(func=cmd_simulate)
    kinds.choices["sample"].set_defaults(func=cmd_simulate)

    flt = sub.add_parser("filter", help="filter an SLC pair", formatter_class=fmt)
    flt.add_argument("--method", choices=("boxcar", "stage1", "nlswag"), default=None,
                     help="estimator (default nlswag)")
    flt.add_argument("--k", type=int, default=None, help="boxcar window size (default 5)")
    flt.add_argument("--config", default=None, help="key = value configuration file")
    flt.add_argument("--input", default=None, help="directory holding master and slave rasters")
    flt.add_argument("--master", default=None, help="master SLC raster")
    flt.add_argument("--slave", default=None, help="slave SLC raster")
    flt.add_argument("--out", default=None, help="output directory")
    flt.add_argument("--calibration", default=None, help="xi calibration table (default: shipped table)")
    flt.add_argument("--dump-eta", action="store_true", help="also write heterogeneity and sigma maps")
    flt.add_argument("--dump-fringe", action="store_true", help="also write the fringe frequency field")
    flt.add_argument("--dump-enl", action="store_true", help="also write the stage-1 ENL map")
    _add_filter_params(flt)
    flt.set_defaults(func=cmd_filter)

    cal = sub.add_parser("calibrate", help="fit the xi polynomial per coherence level", formatter_class=fmt)
    cal.add_argument("--out", required=True, help="calibration table path")
    cal.add_argument("--levels", type=float, nargs="+", default=list(CALIBRATION_LEVELS), help="coherence levels")
    cal.add_argument("--sigma-grid", type=float, nargs="+", default=list(DEFAULT_SIGMA_GRID), help="sigma grid")
    cal.add_argument("--seed", type=int, default=0, help="seed")
    cal.add_argument("--pairs", type=int, default=4000, help="sampled (pixel, offset) pairs per sigma")
    cal.set_defaults(func=cmd_calibrate)

    ev = sub.add_parser("eval", help="Monte-Carlo experiments", formatter_class=fmt)
    ev.add_argument("experiment", choices=("slope", "step", "fractal"))
    ev.add_argument("--out", required=True, help="output directory")
    ev.add_argument("--trials", type=int, default=None,
                    help="noise draws (slope 20, step 1000, fractal 200)")
    ev.add_argument("--paper-scale", action="store_true",
                    help=f"use {simulate.DEFAULT_TRIALS} trials")
    ev.add_argument("--seed", type=int, default=1, help="seed")
    ev.add_argument("--size", type=int, default=None, help="scene side (slope 96, fractal 256)")
    ev.add_argument("--variant", choices=sorted(evaluation.STEP_VARIANTS), default="intensity-coherence",
                    help="step variant")
    ev.add_argument("--frequencies", type=float, nargs="+", default=None,
                    help="slope frequencies in rad/px (default 0 to 1.5 step 0.1)")
    ev.add_argument("--methods", nargs="+", default=None,
                    choices=("boxcar", "stage1", "nlswag", "nlswag-nocomp"), help="methods to compare")
    ev.add_argument("--config", default=None, help="key = value file with filter parameters")
    ev.set_defaults(func=cmd_eval)
    return p


def _check_eval_args(args):
    if args.command != "eval":
        return
    if args.experiment == "step" and args.size is not None:
        raise CliError(EXIT_CONFIG, "--size does not apply to the step experiment")
    if args.experiment != "step" and args.variant != "intensity-coherence":
        raise CliError(EXIT_CONFIG, "--variant only applies to the step experiment")
    if args.experiment != "slope" and args.frequencies is not None:
        raise CliError(EXIT_CONFIG, "--frequencies only applies to the slope experiment")
    if args.size is None:
        args.size = 96 if args.experiment == "slope" else 256


def _set_threads(n: int):
    import numba

    if n < 0:
        raise CliError(EXIT_CONFIG, "--threads must be >= 0")
    limit = numba.config.NUMBA_NUM_THREADS
    if n > limit:
        raise CliError(EXIT_CONFIG, f"--threads {n} exceeds the {limit} threads available")
    numba.set_num_threads(n if n > 0 else limit)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _check_eval_args(args)
        _set_threads(args.threads)
        args.func(args)
    except CliError as exc:
        return _fail(exc.code, str(exc))
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except FileNotFoundError as exc:
        return _fail(EXIT_MISSING, f"{exc.filename} does not exist")
    except ShapeMismatchError as exc:
        return _fail(EXIT_SHAPE, str(exc))
    except RasterError as exc:
        return _fail(EXIT_RASTER, str(exc))
    return 0


def _fail(code, message) -> int:
    message = " ".join(str(message).split())
    print(f"nlswag: error[{_CATEGORY[code]}]: {message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
