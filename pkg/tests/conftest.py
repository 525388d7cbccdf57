import pytest

from ipdiff.rng import RngStream

SEED = 20240101


@pytest.fixture
def stream():
    return RngStream(SEED, 0)


@pytest.fixture
def alpha():
    return 0.5


@pytest.fixture
def streams():
    """Factory for independent streams keyed by an index."""
    return lambda i: RngStream(SEED, i)
