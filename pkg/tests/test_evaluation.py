import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image

from nlswag import evaluation
from nlswag.evaluation import (
    STD_SENTINEL, CircularAccumulator, circular_stats, std_halo_width, transition_distance,
)
from nlswag.raster import Raster, wrap
from nlswag.render import render_raster, stretch


def test_constant_error_has_zero_spread():
    truth = np.linspace(-3, 3, 12).reshape(3, 4)
    est = np.stack([wrap(truth + 0.25)] * 7)
    s = circular_stats(est, truth)
    np.testing.assert_allclose(s.bias, 0.25, atol=1e-12)
    np.testing.assert_array_equal(s.std, 0.0)
    assert s.trials == 7 and not s.flagged.any()


def test_two_point_spread():
    # errors +a and -a: resultant cos a, std sqrt(-2 ln cos a)
    a = 0.4
    est = np.array([[[a]], [[-a]]])
    s = circular_stats(est, np.zeros((1, 1)))
    assert s.bias[0, 0] == pytest.approx(0.0, abs=1e-15)
    assert s.std[0, 0] == pytest.approx(math.sqrt(-2 * math.log(math.cos(a))), rel=1e-12)


def test_opposite_errors_hit_sentinel():
    est = np.array([[[0.5, 1.0]], [[0.5 - np.pi, 1.0]]])
    s = circular_stats(est, np.full((1, 2), 0.5))
    assert s.flagged.tolist() == [[True, False]]
    assert s.std[0, 0] == STD_SENTINEL
    assert STD_SENTINEL == pytest.approx(math.sqrt(-2 * math.log(1e-9)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 12))
def test_matches_pixel_loop(seed, n):
    g = np.random.default_rng(seed)
    truth = g.uniform(-np.pi, np.pi, (3, 4))
    est = wrap(truth + g.normal(0, 0.8, (n, 3, 4)))
    enl = g.uniform(1, 50, (n, 3, 4))
    s = circular_stats(est, truth, enl)
    for i in range(3):
        for j in range(4):
            c = sum(math.cos(est[t, i, j] - truth[i, j]) for t in range(n)) / n
            d = sum(math.sin(est[t, i, j] - truth[i, j]) for t in range(n)) / n
            r = math.hypot(c, d)
            assert s.bias[i, j] == pytest.approx(math.atan2(d, c), abs=1e-12)
            expect = 0.0 if r >= 1 else math.sqrt(-2 * math.log(r))
            assert s.std[i, j] == pytest.approx(expect, abs=1e-7)
            assert s.enl[i, j] == pytest.approx(enl[:, i, j].mean(), rel=1e-12)


def test_accumulator_matches_batch(rng):
    truth = rng.uniform(-np.pi, np.pi, (5, 6))
    est = wrap(truth + rng.normal(0, 0.5, (9, 5, 6)))
    enl = rng.uniform(1, 9, (9, 5, 6))
    acc = CircularAccumulator(truth.shape)
    for t in range(9):
        acc.add(est[t], truth, enl[t])
    a, b = acc.stats(), circular_stats(est, truth, enl)
    np.testing.assert_allclose(a.bias, b.bias, atol=1e-12)
    np.testing.assert_allclose(a.std, b.std, atol=1e-12)
    np.testing.assert_allclose(a.enl, b.enl, rtol=1e-12)
    with pytest.raises(ValueError):
        CircularAccumulator((2, 2)).stats()


def test_transition_distance_linear_ramp():
    # 0 up to column 10, then linear to 1 at column 20
    prof = np.clip((np.arange(40) - 10) / 10.0, 0, 1)
    assert transition_distance(prof, 0.0, 1.0, 10) == pytest.approx(4.0)
    assert transition_distance(-1 + 2 * prof, -1.0, 1.0, 10) == pytest.approx(4.0)
    sharp = (np.arange(40) >= 20).astype(float)
    assert transition_distance(sharp, 0.0, 1.0, 20) == pytest.approx(0.4)
    with pytest.raises(ValueError):
        transition_distance(np.zeros(40), 0.0, 1.0, 20)


def test_std_halo_width():
    std = np.full(64, 0.1)
    std[32:] = 0.2
    assert std_halo_width(std, 32) == 0
    std[29:35] *= 2
    assert std_halo_width(std, 32) == 6
    std[40] = 5.0  # a separate, shorter run
    assert std_halo_width(std, 32) == 6


def test_stretch_and_constant():
    assert np.all(stretch(np.full((3, 3), 7.0)) == 128)
    s = stretch(np.array([[-1.0, 0.0, 3.0]]))
    assert s.tolist() == [[0, 64, 255]]
    with pytest.raises(ValueError):
        stretch(np.ones((2, 2), complex))


def test_pgm_readable_by_independent_reader(tmp_path):
    v = np.linspace(-np.pi, np.pi, 35).reshape(5, 7)
    render_raster(Raster(v, "phase"), tmp_path / "p.pgm")
    img = np.asarray(Image.open(tmp_path / "p.pgm"))
    assert img.shape == (5, 7) and img.dtype == np.uint8
    assert img[0, 0] == 0 and img[-1, -1] == 255
    # values landing on .5 may round either way
    np.testing.assert_allclose(img.astype(float), (v + np.pi) * 255 / (2 * np.pi), atol=0.5 + 1e-9)
    render_raster(Raster(np.full((2, 3), 0.4), "coherence"), tmp_path / "c.pgm")
    assert np.all(np.asarray(Image.open(tmp_path / "c.pgm")) == 128)
    with pytest.raises(ValueError):
        render_raster(v, tmp_path / "x.pgm", "log")


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_fractal_csv_deterministic(tmp_path):
    kw = dict(seed=2, trials=2, methods=("boxcar", "stage1"), shape=(40, 40))
    a = evaluation.fractal_experiment(out_dir=tmp_path / "a", **kw)
    evaluation.fractal_experiment(out_dir=tmp_path / "b", **kw)
    ra, rb = _read_csv(tmp_path / "a" / "fractal.csv"), _read_csv(tmp_path / "b" / "fractal.csv")
    assert ra == rb
    assert ra[0] == evaluation.FRACTAL_COLUMNS
    assert [r[0] for r in ra[1:]] == ["boxcar", "stage1"]
    for r in ra[1:]:
        assert float(r[1]) > 0 and float(r[2]) >= 1 and int(r[4]) == 2
    assert set(a.stats) == {"boxcar", "stage1"}
    assert (tmp_path / "a" / "boxcar_std.pgm").exists()


def test_slope_and_step_reports(tmp_path):
    rep = evaluation.slope_sweep((0.0, 0.5), trials=2, methods=("boxcar",), shape=(32, 32), out_dir=tmp_path)
    rows = _read_csv(tmp_path / "slope.csv")
    assert rows[0] == evaluation.SLOPE_COLUMNS and len(rows) == 3
    assert [r["freq_rad_per_px"] for r in rep.rows] == [0.0, 0.5]
    step = evaluation.step_response("plain", trials=2, methods=("boxcar",), out_dir=tmp_path)
    rows = _read_csv(tmp_path / "step_plain.csv")
    assert rows[0] == evaluation.STEP_COLUMNS and len(rows) == 65
    assert step.stats["boxcar"].edge == 32
    with pytest.raises(ValueError):
        evaluation.step_scene("nope")
    with pytest.raises(ValueError):
        evaluation.make_methods(["median"])
