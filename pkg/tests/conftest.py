import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from nlswag import simulate  # noqa: E402
from nlswag.raster import wrap  # noqa: E402

# criterion number -> (passed, detail); filled by test_acceptance
CRITERIA: dict = {}


def record(number: int, passed: bool, detail: str) -> None:
    CRITERIA[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def homogeneous(shape, gamma, phase=0.0, amplitude=1.0):
    return simulate.SceneSpec(np.full(shape, float(amplitude)), np.full(shape, float(gamma)),
                              np.full(shape, float(phase)))


@pytest.fixture
def small_pair():
    """A 16x16 pair with a ramp, an intensity step and moderate coherence."""
    shape = (16, 16)
    rows, cols = np.indices(shape, dtype=float)
    amp = np.where(cols < 8, 1.0, 1.6)
    gamma = np.where(rows < 8, 0.6, 0.85)
    phase = wrap(0.3 * cols - 0.2 * rows)
    scene = simulate.SceneSpec(amp, gamma, phase)
    return simulate.sample_slc_pair(scene, 3, stream=1)
