import numpy as np
import pytest

from robustiv import SimConfig, generate_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def strong_small():
    """Well-conditioned strong-instrument fixture with one invalid instrument."""
    config = SimConfig(
        n=400,
        n_instruments=5,
        inst_corr=0.3,
        n_invalid=1,
        beta_star=2.0,
        rho=0.5,
        concentration=60.0,
        u=2,
        reps=200,
        seed=7,
    )
    data, truth = generate_dataset(config)
    return config, data, truth


@pytest.fixture
def valid_small():
    """All-valid strong-instrument fixture."""
    config = SimConfig(
        n=400,
        n_instruments=4,
        inst_corr=0.2,
        n_invalid=0,
        beta_star=1.5,
        rho=0.4,
        concentration=80.0,
        u=2,
        reps=200,
        seed=11,
    )
    data, truth = generate_dataset(config)
    return config, data, truth
