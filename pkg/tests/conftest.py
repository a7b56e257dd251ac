import sys
from pathlib import Path

import numpy as np
import pytest

from graspbci.synthgen import SynthSpec, gen_session

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def small_session():
    """A quick 5 x 12 trial session at 500 Hz with a moderately visible source."""
    spec = SynthSpec(trials_per_class=12, fs_hz=500.0, snr_db=-10.0, seed=21)
    return gen_session(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_report_header(config):
    return f"numpy {np.__version__}, python {sys.version.split()[0]}"


# one line per acceptance criterion, printed at the end of the run
_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance_log(request):
    return request.config.stash[_ACCEPTANCE]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)
