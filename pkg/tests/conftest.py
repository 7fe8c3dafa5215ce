import numpy as np
import pytest

from curvetrack.grid import LabelMap, ScalarField
from curvetrack.levelset import sdf_from_mask


def disk_labels(shape, center, radius):
    ys, xs = np.mgrid[0:shape[0], 0:shape[1]]
    return LabelMap((np.hypot(xs - center[0], ys - center[1]) <= radius).astype(np.int32), 2)


def disk_phi(shape, center, radius):
    """Analytic SDF of a disk (negative inside)."""
    ys, xs = np.mgrid[0:shape[0], 0:shape[1]].astype(np.float64)
    return ScalarField(np.hypot(xs - center[0], ys - center[1]) - radius)


@pytest.fixture
def disk64():
    return sdf_from_mask(disk_labels((64, 64), (32, 32), 10), 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(line)
