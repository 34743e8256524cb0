"""Raster containers, interferogram formation and the on-disk raster format.

Rasters are 2-D numpy arrays, row index = azimuth, column index = range.
On disk a raster is a pair of files sharing a stem::

    <name>.bin   flat little-endian payload, row-major
    <name>.json  {"rows", "cols", "dtype": "c64" | "f32", "semantic", "version": 1}
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

FORMAT_VERSION = 1

_DTYPES = {
    "c64": np.dtype("<c8"),
    "f32": np.dtype("<f4"),
}

# closed ranges (lo, hi); open upper bounds are handled in _check_range
SEMANTICS = {
    "complex": None,
    "slc": None,
    "interferogram": None,
    "phase": (-np.pi, np.pi),
    "intensity": (0.0, np.inf),
    "amplitude": (0.0, np.inf),
    "coherence": (0.0, 1.0),
    "enl": (1.0, np.inf),
    "heterogeneity": (0.0, 1.0),
    "sigma": (0.0, np.inf),
    "frequency": (-np.pi, np.pi),
}


class RasterError(Exception):
    """Base class for raster format problems."""


class HeaderError(RasterError):
    """Sidecar is missing, unparsable or has bad fields."""


class TruncatedPayloadError(RasterError):
    """Payload size disagrees with rows * cols * itemsize."""


class UnknownDtypeError(RasterError):
    """Sidecar names a dtype outside {"c64", "f32"}."""


class RangeError(RasterError, ValueError):
    """Values violate the range implied by the raster semantic."""


class ShapeMismatchError(ValueError):
    """Two rasters that must share a grid do not."""


@dataclass(frozen=True)
class Raster:
    """A 2-D array tagged with what its values mean."""

    values: np.ndarray
    semantic: str

    def __post_init__(self):
        if self.values.ndim != 2 or min(self.values.shape) < 1:
            raise ValueError(f"raster must be 2-D and non-empty, got shape {self.values.shape}")
        self.values.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)


@dataclass(frozen=True)
class SlcPair:
    """Co-registered master and slave single-look complex images."""

    master: np.ndarray
    slave: np.ndarray

    def __post_init__(self):
        if self.master.shape != self.slave.shape:
            raise ShapeMismatchError(
                f"master {self.master.shape} and slave {self.slave.shape} differ"
            )
        if self.master.ndim != 2:
            raise ValueError("SLC images must be 2-D")

    @property
    def shape(self) -> tuple[int, int]:
        return self.master.shape


@dataclass(frozen=True)
class EstimateBundle:
    """Filtered phase, intensity, coherence and equivalent number of looks."""

    phase: np.ndarray
    intensity: np.ndarray
    coherence: np.ndarray
    enl: np.ndarray

    def __post_init__(self):
        shapes = {a.shape for a in (self.phase, self.intensity, self.coherence, self.enl)}
        if len(shapes) != 1:
            raise ShapeMismatchError(f"estimate rasters differ in shape: {shapes}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.phase.shape

    def rasters(self) -> dict[str, Raster]:
        return {
            "phase": Raster(self.phase, "phase"),
            "intensity": Raster(self.intensity, "intensity"),
            "coherence": Raster(self.coherence, "coherence"),
            "enl": Raster(self.enl, "enl"),
        }


def wrap(phase):
    """Wrap phase to the principal interval (-pi, pi]."""
    phase = np.asarray(phase, dtype=float)
    return phase - 2 * np.pi * np.ceil((phase - np.pi) / (2 * np.pi))


def form_interferogram(pair: SlcPair) -> np.ndarray:
    """Complex interferogram ``master * conj(slave)``."""
    if pair.master.shape != pair.slave.shape:
        raise ShapeMismatchError("master and slave differ in shape")
    return pair.master * np.conj(pair.slave)


def _stem(path) -> str:
    path = os.fspath(path)
    for ext in (".bin", ".json"):
        if path.endswith(ext):
            return path[: -len(ext)]
    return path


def _check_range(values: np.ndarray, semantic: str) -> None:
    if not np.all(np.isfinite(values)):
        raise RangeError(f"non-finite values in {semantic!r} raster")
    bounds = SEMANTICS.get(semantic)
    if bounds is None:
        return
    lo, hi = bounds
    if semantic == "phase":
        # f32 storage rounds pi up by ~1e-7
        ok = (values > -np.pi - 1e-6) & (values <= np.pi + 1e-6)
    else:
        ok = (values >= lo) & (values <= hi)
    if not np.all(ok):
        bad = values[~ok].ravel()[0]
        raise RangeError(f"value {bad!r} outside the range of a {semantic!r} raster")


def write_raster(raster: Raster, path) -> None:
    """Write ``raster`` as ``<stem>.bin`` + ``<stem>.json``.

    Complex data is stored as c64, real data as f32, so values are cast down
    from double precision on write.
    """
    stem = _stem(path)
    dtype = "c64" if raster.is_complex else "f32"
    rows, cols = raster.shape
    payload = np.ascontiguousarray(raster.values, dtype=_DTYPES[dtype])
    header = {
        "rows": rows,
        "cols": cols,
        "dtype": dtype,
        "semantic": raster.semantic,
        "version": FORMAT_VERSION,
    }
    with open(stem + ".bin", "wb") as fh:
        fh.write(payload.tobytes())
    with open(stem + ".json", "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_header(path) -> dict:
    stem = _stem(path)
    try:
        with open(stem + ".json") as fh:
            header = json.load(fh)
    except json.JSONDecodeError as exc:
        raise HeaderError(f"{stem}.json: {exc}") from None
    if not isinstance(header, dict):
        raise HeaderError(f"{stem}.json: header must be an object")
    for key in ("rows", "cols", "dtype", "semantic", "version"):
        if key not in header:
            raise HeaderError(f"{stem}.json: missing field {key!r}")
    if header["version"] != FORMAT_VERSION:
        raise HeaderError(f"{stem}.json: unsupported version {header['version']!r}")
    for key in ("rows", "cols"):
        if not isinstance(header[key], int) or isinstance(header[key], bool) or header[key] < 1:
            raise HeaderError(f"{stem}.json: {key} must be a positive integer")
    if header["dtype"] not in _DTYPES:
        raise UnknownDtypeError(f"{stem}.json: unknown dtype {header['dtype']!r}")
    if not isinstance(header["semantic"], str):
        raise HeaderError(f"{stem}.json: semantic must be a string")
    return header


def read_raster(path, validate: bool = False) -> Raster:
    """Read a raster written by :func:`write_raster`.

    With ``validate=True`` the values are checked against the range implied
    by the header's ``semantic`` field.
    """
    stem = _stem(path)
    header = read_header(stem)
    dtype = _DTYPES[header["dtype"]]
    expected = header["rows"] * header["cols"] * dtype.itemsize
    with open(stem + ".bin", "rb") as fh:
        data = fh.read()
    if len(data) != expected:
        raise TruncatedPayloadError(
            f"{stem}.bin: payload has {len(data)} bytes, header implies {expected}"
        )
    values = np.frombuffer(data, dtype=dtype).reshape(header["rows"], header["cols"]).copy()
    if validate:
        _check_range(values, header["semantic"])
    return Raster(values, header["semantic"])


def write_pair(pair: SlcPair, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    write_raster(Raster(pair.master, "slc"), os.path.join(directory, "master"))
    write_raster(Raster(pair.slave, "slc"), os.path.join(directory, "slave"))


def read_pair(master_path, slave_path) -> SlcPair:
    master = read_raster(master_path)
    slave = read_raster(slave_path)
    if not (master.is_complex and slave.is_complex):
        raise HeaderError("SLC rasters must have dtype c64")
    return SlcPair(
        master.values.astype(np.complex128), slave.values.astype(np.complex128)
    )
