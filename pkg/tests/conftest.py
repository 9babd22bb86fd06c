import numpy as np
import pytest

from maskplan import TabularDenoiser, Vocab


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


@pytest.fixture
def rng() -> np.random.Generator:
    return make_rng(20240816)


@pytest.fixture
def small_denoiser(rng) -> TabularDenoiser:
    """d=3, L=3 random instance shared by cheap exactness checks."""
    return TabularDenoiser.random(Vocab(3), 3, rng)
