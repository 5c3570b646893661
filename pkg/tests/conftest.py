import numpy as np
import pytest

from mimkd import tensor as T


@pytest.fixture
def f64():
    """Run a test in float64 mode for strict numerical checks."""
    T.set_default_dtype(np.float64)
    yield
    T.set_default_dtype(np.float32)


@pytest.fixture(autouse=True)
def _reset_dtype():
    yield
    T.set_default_dtype(np.float32)
