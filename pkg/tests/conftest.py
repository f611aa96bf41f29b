import numpy as np
import pytest

from distclust.distributions import (
    DiscreteDistribution,
    DistributionSet,
    SyntheticConfig,
    generate_synthetic,
)


@pytest.fixture(scope="session")
def default_set() -> DistributionSet:
    return generate_synthetic(SyntheticConfig())


@pytest.fixture(scope="session")
def default_labels(default_set):
    return default_set.labels()


def random_distribution(rng, m, d=2, uniform=False, dist_id="x", label=None):
    support = rng.uniform(-1.0, 1.0, size=(m, d))
    if uniform:
        weights = np.full(m, 1.0 / m)
    else:
        weights = rng.dirichlet(np.ones(m))
    return DiscreteDistribution(id=dist_id, support=support, weights=weights, label=label)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
