import numpy as np
import pytest

from bayestof import config as C

# acceptance results, printed once at the end of the session
ACCEPTANCE = []


@pytest.fixture(scope="session")
def cfg():
    return C.load_config()


@pytest.fixture(scope="session")
def curves(cfg):
    return C.curves_from(cfg)


@pytest.fixture(scope="session")
def noise(cfg):
    return C.noise_from(cfg)


@pytest.fixture(scope="session")
def priors(cfg):
    return C.priors_from(cfg)


@pytest.fixture(scope="session")
def settings(cfg):
    return C.settings_from(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
