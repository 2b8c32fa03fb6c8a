import numpy as np
import pytest

from banditclo.polytope import build_grid, enumerate_paths
from banditclo.simulator import build_logging_policy, init_ground_truth


@pytest.fixture(scope="session")
def grid5():
    return build_grid(5, 5)


@pytest.fixture(scope="session")
def paths5(grid5):
    return enumerate_paths(grid5)


@pytest.fixture(scope="session")
def gt5(grid5):
    return init_ground_truth(7, grid5)


@pytest.fixture(scope="session")
def reference_X():
    return np.random.default_rng(11).standard_normal((2000, 3))


@pytest.fixture(scope="session")
def uniform_policy(gt5, paths5, reference_X):
    return build_logging_policy("uniform", gt5, paths5, reference_X)


@pytest.fixture(scope="session")
def x1_policy(gt5, paths5, reference_X):
    return build_logging_policy("x1", gt5, paths5, reference_X)


@pytest.fixture(scope="session")
def x1x2_policy(gt5, paths5, reference_X):
    return build_logging_policy("x1x2", gt5, paths5, reference_X)
