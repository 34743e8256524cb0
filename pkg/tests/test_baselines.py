import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from nlswag import simulate
from nlswag.baselines import boxcar
from nlswag.raster import SlcPair, form_interferogram, wrap

from conftest import homogeneous


def test_identity_at_k1(small_pair):
    b = boxcar(small_pair, 1)
    np.testing.assert_allclose(b.phase, np.angle(form_interferogram(small_pair)), atol=1e-15)
    np.testing.assert_allclose(b.coherence, 1.0, atol=1e-12)
    assert np.all(b.enl == 1)


def test_constant_noise_free_scene():
    m = np.full((9, 9), 1.5 + 0j)
    b = boxcar(SlcPair(m, m * np.exp(-0.6j)), 5)
    np.testing.assert_allclose(b.phase, 0.6, atol=1e-14)
    np.testing.assert_allclose(b.coherence, 1.0, atol=1e-14)


@pytest.mark.parametrize("k", [0, 2, 4, -3, 2.5, True])
def test_rejects_bad_size(small_pair, k):
    with pytest.raises(ValueError):
        boxcar(small_pair, k)


@pytest.mark.parametrize("k", [3, 5, 7])
def test_matches_direct_windows(small_pair, k):
    b = boxcar(small_pair, k)
    ph, inten, coh, enl = oracles.boxcar(small_pair, k)
    np.testing.assert_allclose(wrap(b.phase - ph), 0, atol=1e-12)
    np.testing.assert_allclose(b.intensity, inten, rtol=1e-12)
    np.testing.assert_allclose(b.coherence, coh, rtol=1e-12)
    np.testing.assert_array_equal(b.enl, enl)
    assert b.enl[0, 0] == (k // 2 + 1) ** 2


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), k=st.sampled_from([1, 3, 5, 9]))
def test_coherence_bounds(seed, k):
    g = np.random.default_rng(seed)
    shape = (12, 10)
    u1 = g.normal(size=shape) + 1j * g.normal(size=shape)
    u2 = g.normal(size=shape) + 1j * g.normal(size=shape)
    b = boxcar(SlcPair(u1, u2), k)
    assert np.all((b.coherence >= 0) & (b.coherence <= 1))


def test_aligned_window_has_unit_coherence():
    g = np.random.default_rng(1)
    u1 = g.normal(size=(7, 7)) + 1j * g.normal(size=(7, 7))
    b = boxcar(SlcPair(u1, 0.3 * u1 * np.exp(-0.4j)), 3)
    np.testing.assert_allclose(b.coherence, 1.0, atol=1e-12)


@pytest.mark.parametrize("f", [(0.4, 0.0), (0.7, -0.3), (1.0, 0.5)])
def test_linear_ramp_centre_phase(f):
    # holds while the window's response 1 + 2cos f + 2cos 2f stays positive
    shape = (20, 20)
    rows, cols = np.indices(shape)
    phi = f[0] * cols + f[1] * rows
    m = np.ones(shape, complex)
    b = boxcar(SlcPair(m, m * np.exp(-1j * phi)), 5)
    np.testing.assert_allclose(wrap(b.phase - phi)[2:-2, 2:-2], 0.0, atol=1e-9)


def test_homogeneous_std_near_reference():
    scene = homogeneous((128, 128), 0.7)
    err = []
    for t in range(40):
        b = boxcar(simulate.sample_slc_pair(scene, 6, stream=t), 5)
        err.append(b.phase[5:-5, 5:-5])
    std = math.sqrt(-2 * math.log(abs(np.mean(np.exp(1j * np.array(err))))))
    assert 0.1482 * 0.85 <= std <= 0.1482 * 1.15
