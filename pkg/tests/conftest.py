import numpy as np
import pytest

from loopsoup import ModelParams


@pytest.fixture
def p3():
    return ModelParams(3, 1.0, 0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
