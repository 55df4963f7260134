import numpy as np
import pytest

from proxyrank import Dataset, SimConfig, simulate_cohort


def make_dataset(n=40, k=3, seed=0, treat_prob=0.5):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, k))
    a = (rng.random(n) < treat_prob).astype(int)
    if a.min() == a.max():  # ensure both arms for fit-based tests
        a[0], a[1] = 0, 1
    y = X @ np.arange(1.0, k + 1.0) + 0.5 * a + rng.normal(0, 0.3, n)
    return Dataset(X, a, y)


@pytest.fixture
def toy_dataset():
    return make_dataset()


@pytest.fixture(scope="session")
def small_sim():
    """A small clean cohort shared across fast tests."""
    return simulate_cohort(SimConfig(n=1200, k=10, seed=11))


@pytest.fixture(scope="session")
def small_confounded_sim():
    return simulate_cohort(SimConfig(n=1200, k=10, seed=11, mode="confounded"))
