import numpy as np
import pytest

from simulation.data_generator import ModelGenerator


@pytest.fixture
def two_level():
    """Rows alternate between all-9 and all-1"""
    return np.array([[9, 9, 9, 9], [1, 1, 1, 1], [9, 9, 9, 9], [1, 1, 1, 1]], dtype=np.float32)


@pytest.fixture
def chain_graph():
    return ModelGenerator(seed=1).chain_model()


@pytest.fixture
def residual_graph():
    return ModelGenerator(seed=2).residual_model()


@pytest.fixture
def integer_residual_graph():
    return ModelGenerator(seed=2, integer=True).residual_model()


@pytest.fixture
def alexnet_graph():
    return ModelGenerator(seed=3).alexnet_like()


@pytest.fixture
def resnet_graph():
    return ModelGenerator(seed=4).resnet_like()


@pytest.fixture
def synthetic_graph():
    return ModelGenerator(seed=5).synthetic_model(layers=6, width=16)
