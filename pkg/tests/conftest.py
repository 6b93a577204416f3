from __future__ import annotations

import numpy as np
import pytest

from hartree_waveops.grid import ModelParams, PhaseField, ProfileField, random_band_limited
from hartree_waveops.hierarchy import TimeGrid


@pytest.fixture(scope="session")
def params() -> ModelParams:
    return ModelParams(gamma=0.6, N=16)


@pytest.fixture(scope="session")
def short_grid() -> TimeGrid:
    return TimeGrid(1.0, 1e3, 32)


@pytest.fixture(scope="session")
def w_plus(params) -> ProfileField:
    return random_band_limited(7, 3, 1.0, params.k, params)


@pytest.fixture(scope="session")
def psi_plus(params) -> PhaseField:
    return random_band_limited(11, 3, 0.1, params.k, params, real=True)


@pytest.fixture(scope="session")
def zero_phase(params) -> PhaseField:
    return PhaseField(params, np.zeros(params.shape))


@pytest.fixture(scope="session")
def free_params() -> ModelParams:
    """Same grid with the nonlinearity switched off."""
    return ModelParams(gamma=0.6, N=16, lam=0.0)
