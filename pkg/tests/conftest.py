import pytest

from xylab.models import potential
from xylab.models.geometry import FiberGrid
from xylab.services.cache import EigenCache, RedisCache
from xylab.services.maxplus import solve_maxplus


@pytest.fixture(scope="session")
def grid128():
    return FiberGrid(n_nodes=128)


@pytest.fixture(scope="session")
def grid64():
    return FiberGrid(n_nodes=64)


@pytest.fixture(scope="session")
def grid32():
    return FiberGrid(n_nodes=32)


@pytest.fixture(scope="session")
def zero():
    return potential.zero()


@pytest.fixture(scope="session")
def cosine():
    return potential.cosine()


@pytest.fixture(scope="session")
def xy_pair():
    return potential.xy_pair()


@pytest.fixture(scope="session")
def xy_pinned():
    return potential.xy_pinned(0.5)


@pytest.fixture(scope="session")
def cosine_sub(cosine, grid128):
    return solve_maxplus(cosine, grid128)


@pytest.fixture(scope="session")
def pinned_sub(xy_pinned, grid64):
    return solve_maxplus(xy_pinned, grid64)


@pytest.fixture
def memory_cache():
    return EigenCache(RedisCache(enabled=False))
