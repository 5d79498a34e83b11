import numpy as np
import pytest

from afpilot.channel import FrameGeometry, PathSet, sample_paths
from afpilot.transforms import ChirpParams


@pytest.fixture
def geom():
    return FrameGeometry()


@pytest.fixture
def chirps():
    return ChirpParams.from_rule(0, 1, 64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_paths(rng, nu_max=0.1):
    return sample_paths(nu_max=nu_max, rng=rng)


def single_path(gain=1.0, delay=0, doppler=0.0):
    return PathSet.from_arrays([gain], [delay], [doppler])


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[num])
