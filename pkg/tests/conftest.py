import numpy as np
import pytest

from vdpchaos import Heterogeneity, ModelParams, NetworkState


@pytest.fixture(scope="session")
def single_params():
    """Single oscillator in the middle of the primary locking tongue."""
    return ModelParams(phi=1.0, beta=0.0, epsilon=1.0, amplitude=0.5,
                       omega=0.85, n_osc=1)


@pytest.fixture(scope="session")
def single_het():
    return Heterogeneity(np.zeros(1))


@pytest.fixture()
def small_net_params():
    return ModelParams(phi=1.0, beta=0.2, epsilon=1.0, amplitude=0.5,
                       omega=0.85, n_osc=60)


@pytest.fixture()
def small_net_het():
    return Heterogeneity.draw(60, seed=7)


@pytest.fixture()
def generic_state():
    rng = np.random.default_rng(11)
    return NetworkState(rng.normal(size=60), rng.normal(size=60))
