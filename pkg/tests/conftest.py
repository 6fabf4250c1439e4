import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from proactlab import crypto

import helpers


@pytest.fixture
def sim_backend():
    return crypto.SIMULATED_BACKEND


@pytest.fixture
def spongent_backend():
    return crypto.SPONGENT_BACKEND


@pytest.fixture
def registry(sim_backend):
    return helpers.make_registry(sim_backend)
