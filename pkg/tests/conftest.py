import numpy as np
import pytest

from clusterflow.seeding import SeedConfig
from clusterflow.tree import Activation, BuildConfig


def blob(center, n, dim, label, rng, spread=1.0, prefix=None):
    prefix = prefix or label
    return [
        Activation.make(rng.normal(center, spread, dim), {label}, f"{prefix}{i}")
        for i in range(n)
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def two_class_separable(rng):
    return (blob(0.0, 120, 8, "cat", rng) + blob(40.0, 120, 8, "dog", rng))


@pytest.fixture
def default_cfg():
    return BuildConfig(
        rng_seed=99,
        seed_config=SeedConfig(algorithm="detk", k_max=4, rng_seed=99),
    )
