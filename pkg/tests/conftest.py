from __future__ import annotations

import numpy as np
import pytest

from app.core.config import get_settings
from app.schemas.simulation import SimulationSpec
from app.services.simulation import PARAMETER_SETS, simulate


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture(autouse=True)
def _fresh_settings():
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def make_array():
    """Single S1 array drawn from one of the nine parameter sets."""

    def make(set_id: int, n_reg: int = 2000, n_neg: int = 200, seed: int = 1):
        spec = SimulationSpec(
            scenario="s1", parameter_set=set_id, n_reg=n_reg, n_neg=n_neg, n_arrays=1, seed=seed
        )
        return simulate(spec, threads=1).arrays[0]

    return make


@pytest.fixture
def set1():
    return PARAMETER_SETS[1].params


@pytest.fixture
def set1_array(make_array):
    return make_array(1)


@pytest.fixture
def set3_array(make_array):
    return make_array(3)
