import numpy as np
import pytest

from hjdiv import builtin_model
from hjdiv.geometry import model_from_config


@pytest.fixture(scope="session")
def exponential():
    return builtin_model("exponential")


@pytest.fixture(scope="session")
def sphere():
    return builtin_model("sphere-qubit")


@pytest.fixture(scope="session")
def euclidean():
    return builtin_model("euclidean")


@pytest.fixture(scope="session")
def unit_sphere():
    """Round 2-sphere in the polar chart, defined through the config schema."""
    return model_from_config(
        {
            "name": "unit-sphere",
            "dim": 2,
            "domain": [{"lo": 0, "hi": np.pi}, {"lo": -np.pi, "hi": np.pi}],
            "metric": [["1", "0"], ["0", "sin(x1)^2"]],
            "skewness": "zero",
        }
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
