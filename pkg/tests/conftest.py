import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from omnisense.calibration import calibrate
from omnisense.datasets import LightPath, synthesize_sweep
from omnisense.reference import flower_model, vertical_model
from omnisense.response import Design

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def vmodel():
    return vertical_model()


@pytest.fixture(scope="session")
def fmodel():
    return flower_model()


@pytest.fixture(scope="session", params=[Design.VERTICAL, Design.FLOWER], ids=["vertical", "flower"])
def model(request, vmodel, fmodel):
    return vmodel if request.param is Design.VERTICAL else fmodel


@pytest.fixture(scope="session")
def noiseless_sweeps(vmodel, fmodel):
    out = {}
    for m in (vmodel, fmodel):
        out[m.design] = (synthesize_sweep(m), synthesize_sweep(m, path=LightPath.POST))
    return out


@pytest.fixture(scope="session")
def calibrated(noiseless_sweeps):
    return {design: calibrate(free, post) for design, (free, post) in noiseless_sweeps.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Acceptance criteria report: one line per criterion in the terminal summary.

_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash.setdefault(_ACCEPTANCE, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_ACCEPTANCE, {})
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(log):
        terminalreporter.write_line(log[key])
