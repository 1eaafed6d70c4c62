import numpy as np
import pytest

from pathaug.audio import AudioBuffer

SR = 16000

# (criterion, passed, detail) rows collected by the acceptance module
ACCEPTANCE_RESULTS = []


def tone(freq, seconds=1.0, sr=SR, amp=1.0):
    t = np.arange(int(seconds * sr)) / sr
    return AudioBuffer(amp * np.sin(2 * np.pi * freq * t), sr)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def fixture_root(tmp_path_factory):
    from pathaug.fixtures import make_fixture_corpus

    return make_fixture_corpus(tmp_path_factory.mktemp("fixture"), seed=11)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
