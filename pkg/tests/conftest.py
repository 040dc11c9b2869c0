import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from jumptime.models import build_decay_model, figure1_spec  # noqa: E402


@pytest.fixture(scope="session")
def fig1():
    """The 101-level flat band with tau_Z = 48, tau_L = 393."""
    return build_decay_model(figure1_spec())


@pytest.fixture(scope="session")
def three_level():
    h = np.array([[0, 0.1, 0.1], [0.1, -0.5, 0], [0.1, 0, 0.5]], dtype=complex)
    return h


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)

