import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from nlswag.raster import (
    EstimateBundle, HeaderError, Raster, RangeError, ShapeMismatchError, SlcPair,
    TruncatedPayloadError, UnknownDtypeError, form_interferogram, read_pair, read_raster,
    write_pair, write_raster, wrap,
)

finite = dict(allow_nan=False, allow_infinity=False)


def test_interferogram_examples():
    one = np.ones((1, 1), dtype=complex)
    assert form_interferogram(SlcPair(one, one))[0, 0] == 1 + 0j
    z = form_interferogram(SlcPair(one * 1j, one))
    assert np.isclose(np.angle(z[0, 0]), np.pi / 2)


def test_interferogram_matches_pixel_loop(rng):
    u1 = rng.normal(size=(5, 7)) + 1j * rng.normal(size=(5, 7))
    u2 = rng.normal(size=(5, 7)) + 1j * rng.normal(size=(5, 7))
    z = form_interferogram(SlcPair(u1, u2))
    for r in range(5):
        for c in range(7):
            expect = complex(u1[r, c]) * complex(u2[r, c]).conjugate()
            assert z[r, c] == pytest.approx(expect, rel=1e-15)
            assert abs(z[r, c]) == pytest.approx(abs(u1[r, c]) * abs(u2[r, c]), rel=1e-14)


@given(a=st.floats(0.01, 100.0), seed=st.integers(0, 2**32 - 1))
def test_interferogram_scales_with_master(a, seed):
    g = np.random.default_rng(seed)
    u1 = g.normal(size=(3, 3)) + 1j * g.normal(size=(3, 3))
    u2 = g.normal(size=(3, 3)) + 1j * g.normal(size=(3, 3))
    z = form_interferogram(SlcPair(u1, u2))
    za = form_interferogram(SlcPair(a * u1, u2))
    np.testing.assert_allclose(np.abs(za), a * np.abs(z), rtol=1e-12)


def test_pair_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        SlcPair(np.ones((2, 2), complex), np.ones((2, 3), complex))


def test_bundle_shape_mismatch():
    a = np.zeros((2, 2))
    with pytest.raises(ShapeMismatchError):
        EstimateBundle(a, a, a, np.zeros((2, 3)))


def test_complex_roundtrip_bytes(tmp_path):
    v = np.array([[1 + 2j, -3.5 + 0.25j], [0j, 1e-3 - 7j]], dtype=np.complex64)
    write_raster(Raster(v, "slc"), tmp_path / "a")
    payload = (tmp_path / "a.bin").read_bytes()
    assert payload == v.astype("<c8").tobytes()
    back = read_raster(tmp_path / "a.bin")
    assert back.semantic == "slc"
    assert back.values.tobytes() == v.tobytes()


@settings(max_examples=40, deadline=None)
@given(arr=hnp.arrays(np.float32, hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=9),
                      elements=st.floats(-1e6, 1e6, width=32, **finite)))
def test_real_roundtrip(tmp_path_factory, arr):
    d = tmp_path_factory.mktemp("r")
    write_raster(Raster(arr, "intensity"), d / "x")
    back = read_raster(d / "x")
    assert back.values.dtype == np.float32
    np.testing.assert_array_equal(back.values, arr)


@settings(max_examples=40, deadline=None)
@given(arr=hnp.arrays(np.complex64, hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=9),
                      elements=st.complex_numbers(max_magnitude=1e6, width=64, **finite)))
def test_complex_roundtrip(tmp_path_factory, arr):
    d = tmp_path_factory.mktemp("c")
    write_raster(Raster(arr, "slc"), d / "x")
    np.testing.assert_array_equal(read_raster(d / "x").values, arr)


def test_truncated_payload(tmp_path):
    write_raster(Raster(np.ones((3, 3)), "intensity"), tmp_path / "t")
    data = (tmp_path / "t.bin").read_bytes()
    (tmp_path / "t.bin").write_bytes(data[:-4])
    with pytest.raises(TruncatedPayloadError):
        read_raster(tmp_path / "t")


def _edit_header(path, **changes):
    h = json.loads(path.read_text())
    h.update(changes)
    for k, v in list(h.items()):
        if v is None:
            del h[k]
    path.write_text(json.dumps(h))


@pytest.mark.parametrize("changes, err", [
    (dict(dtype="f64"), UnknownDtypeError),
    (dict(rows=None), HeaderError),
    (dict(version=2), HeaderError),
    (dict(cols=0), HeaderError),
    (dict(rows=True), HeaderError),
])
def test_bad_headers(tmp_path, changes, err):
    write_raster(Raster(np.ones((2, 2)), "intensity"), tmp_path / "h")
    _edit_header(tmp_path / "h.json", **changes)
    with pytest.raises(err):
        read_raster(tmp_path / "h")


def test_unparsable_header(tmp_path):
    write_raster(Raster(np.ones((2, 2)), "intensity"), tmp_path / "h")
    (tmp_path / "h.json").write_text("{not json")
    with pytest.raises(HeaderError):
        read_raster(tmp_path / "h")


def test_range_validation(tmp_path):
    write_raster(Raster(np.array([[0.5, 1.5]]), "coherence"), tmp_path / "c")
    read_raster(tmp_path / "c")  # unchecked read is fine
    with pytest.raises(RangeError):
        read_raster(tmp_path / "c", validate=True)


def test_phase_validation_accepts_pi(tmp_path):
    write_raster(Raster(np.array([[np.pi, -np.pi + 1e-7]]), "phase"), tmp_path / "p")
    read_raster(tmp_path / "p", validate=True)
    write_raster(Raster(np.array([[4.0]]), "phase"), tmp_path / "q")
    with pytest.raises(RangeError):
        read_raster(tmp_path / "q", validate=True)


def test_pair_roundtrip(tmp_path, small_pair):
    write_pair(small_pair, tmp_path)
    back = read_pair(tmp_path / "master", tmp_path / "slave")
    np.testing.assert_array_equal(back.master, small_pair.master.astype(np.complex64))


def test_read_pair_rejects_real(tmp_path):
    write_raster(Raster(np.ones((2, 2)), "intensity"), tmp_path / "m")
    write_raster(Raster(np.ones((2, 2)), "intensity"), tmp_path / "s")
    with pytest.raises(HeaderError):
        read_pair(tmp_path / "m", tmp_path / "s")


def test_raster_is_read_only():
    r = Raster(np.zeros((2, 2)), "phase")
    with pytest.raises(ValueError):
        r.values[0, 0] = 1.0


@given(st.floats(-1e4, 1e4, **finite))
def test_wrap_principal_interval(x):
    w = wrap(x)
    assert -np.pi < w <= np.pi
    k = (x - w) / (2 * np.pi)
    assert abs(k - round(k)) < 1e-6


def test_wrap_edges():
    assert wrap(np.pi) == np.pi
    assert wrap(-np.pi) == np.pi
    assert wrap(3 * np.pi) == pytest.approx(np.pi)
