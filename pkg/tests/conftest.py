import numpy as np
import pytest

from trivol import config
from trivol.tensor import reset_tape


@pytest.fixture(autouse=True)
def accuracy_profile():
    """Every test starts in the float64 profile with a clean tape."""
    config.use_accuracy_profile()
    reset_tape()
    yield
    config.use_accuracy_profile()
    reset_tape()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
