import numpy as np
import pytest

from hawkesnet.model import ExponentialDecay, GammaDensity, HawkesModel, UniformWindow, example_model
from hawkesnet.simulate import SimConfig, simulate


@pytest.fixture(scope="session")
def model10():
    return example_model()


@pytest.fixture(scope="session")
def stream10(model10):
    return simulate(model10, SimConfig(500.0, seed=1))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def univariate(a=0.5, eta=1.0, w=None):
    w = UniformWindow(1.0, 2.0) if w is None else w
    return HawkesModel(1, (eta,), {(1, 1): (a, w)} if a > 0 else {})


KERNELS = [GammaDensity(6.0, 4.0), GammaDensity(0.7, 2.0), UniformWindow(1.0, 2.0),
           UniformWindow(0.0, 0.3), ExponentialDecay(2.5)]


# criterion number -> (passed, detail); filled by the acceptance tests
ACCEPTANCE = {}


def record(n, passed, detail):
    ACCEPTANCE[n] = (bool(passed), detail)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}")
