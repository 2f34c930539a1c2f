import numpy as np
import pytest

from holoreg.physical import TWO_PI, DeviceParams, EnsembleSpec, build_ensemble


def uniform_geom(n, rate=TWO_PI * 1e6, length=1.0, placement="grid", seed=None):
    """Uniform couplings with collective rate sqrt(N) g_bar = ``rate``."""
    return build_ensemble(EnsembleSpec(n, length, placement=placement, g_bar=rate / np.sqrt(n)), seed=seed)


@pytest.fixture
def device():
    return DeviceParams(omega_c=TWO_PI * 5e9, L=1.0, g_cpb=TWO_PI * 20e6, delta_cpb=TWO_PI * 2e9)


@pytest.fixture
def bare_device():
    return DeviceParams(omega_c=TWO_PI * 5e9, L=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
