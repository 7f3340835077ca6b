import numpy as np
import pytest

from vidrobust.grid import GridSpec
from vidrobust.synth import SynthSpec, make_sample

# measured-vs-bound lines recorded by test_acceptance.py; echoed after the
# run summary so they survive output capturing
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def grid():
    return GridSpec()


@pytest.fixture
def small_video(rng):
    return rng.random((4, 16, 16, 1)).astype(np.float32)


@pytest.fixture(scope="session")
def sample_video():
    """One default-spec synthetic sample, shared across tests."""
    return make_sample(SynthSpec(), 0).video
