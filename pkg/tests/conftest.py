import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from zovr.objectives import SyntheticDataset, make_ridge, reference_instance

settings.register_profile("zovr", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("zovr")


@pytest.fixture(scope="session")
def ref():
    return reference_instance()


def tiny_dataset(features, labels):
    return SyntheticDataset(np.atleast_2d(np.asarray(features, dtype=float)), np.asarray(labels, dtype=float))


@pytest.fixture(scope="session")
def half_square():
    # f(x) = x^2 / 2 with one component in one dimension.
    return make_ridge(tiny_dataset([[1.0]], [0.0]), 0.0)


@pytest.fixture(scope="session")
def small_ridge():
    rng = np.random.default_rng(7)
    return make_ridge(SyntheticDataset(rng.standard_normal((5, 4)), rng.standard_normal(5)), 0.1)
