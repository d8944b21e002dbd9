import os

import numpy as np
import pytest

from app.core.model import ChannelSet, NetworkConfig


def pytest_collection_modifyitems(config, items):
    if os.environ.get("RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set RUN_SLOW=1 to run statistical reproductions")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def random_cn(rng: np.random.Generator, shape, scale: float = 1.0) -> np.ndarray:
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_channels(rng: np.random.Generator, n_s: int, n_r: int, n_d: int, direct: float = 1.0) -> ChannelSet:
    return ChannelSet(
        h_r1=random_cn(rng, (n_r, n_s)),
        h_r2=random_cn(rng, (n_r, n_s)),
        h_d1=random_cn(rng, (n_d, n_s), direct),
        h_d2=random_cn(rng, (n_d, n_s), direct),
        h_dr=random_cn(rng, (n_d, n_r)),
    )


def random_precoder(rng: np.random.Generator, n_s: int, p: float) -> np.ndarray:
    f = random_cn(rng, (n_s, n_s))
    return f * np.sqrt(p / np.real(np.trace(f @ f.conj().T)))


@pytest.fixture
def rng():
    return np.random.default_rng(20120417)


@pytest.fixture
def small_config():
    return NetworkConfig.from_db(20.0, n_s=2, n_r=2, n_d=2, seed=7)


@pytest.fixture
def fig_config():
    return NetworkConfig.from_db(20.0, n_s=4, n_r=4, n_d=4, seed=2012)
