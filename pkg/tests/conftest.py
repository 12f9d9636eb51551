import json

import numpy as np
import pytest

from src.integrate import IntegrationConfig
from src.matrix_bounds import make_linear_gaussian_vector_model
from src.model import discrete_channel, gaussian_gaussian, uniform_location


@pytest.fixture(scope="session")
def cfg():
    return IntegrationConfig()


@pytest.fixture(scope="session")
def gg():
    return gaussian_gaussian(1.0, 1.0, 1)


@pytest.fixture(scope="session")
def bsc():
    return discrete_channel(0.2)


@pytest.fixture(scope="session")
def uni():
    return uniform_location(1.0, 1.0)


@pytest.fixture(scope="session", params=["gg", "bsc", "uni"])
def catalog_model(request, gg, bsc, uni):
    return {"gg": gg, "bsc": bsc, "uni": uni}[request.param]


@pytest.fixture(scope="session")
def vmodel():
    return make_linear_gaussian_vector_model(np.eye(2), np.eye(2), np.eye(2))


@pytest.fixture
def write_config(tmp_path):
    def _write(data, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return str(path)
    return _write
