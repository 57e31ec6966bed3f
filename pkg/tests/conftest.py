"""Shared fixtures: scalar and SMD instances, objectives, an isolated output directory."""

import numpy as np
import pytest

from app.core.config import parse_config
from app.core.logging import configure_logging
from app.models.presets import ScalarParams, make_pendulum_model, make_scalar_model, make_smd_model
from app.models.system import Objective


@pytest.fixture(scope="session", autouse=True)
def quiet_logging():
    configure_logging(level="WARNING", json=False)


@pytest.fixture
def scalar_lq():
    """A = 0, B = C = R = sigma = G = 1"""
    return make_scalar_model()


@pytest.fixture
def scalar_noiseless():
    return make_scalar_model(ScalarParams(sigma=0.0))


@pytest.fixture
def smd():
    return make_smd_model()


@pytest.fixture
def pendulum():
    return make_pendulum_model()


@pytest.fixture
def soc():
    return Objective.soc()


@pytest.fixture
def leqgp():
    return Objective.rsc(0.5)


@pytest.fixture
def leqgn():
    return Objective.rsc(-1.0)


@pytest.fixture(params=["soc", "leqgp", "leqgn"])
def any_objective(request):
    return {
        "soc": Objective.soc(),
        "leqgp": Objective.rsc(0.5),
        "leqgn": Objective.rsc(-1.0),
    }[request.param]


@pytest.fixture
def output_config(tmp_path):
    def build(**sections):
        overrides = {"output": {"directory": str(tmp_path)}}
        overrides.update(sections)
        return parse_config(overrides=overrides)

    return build


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
