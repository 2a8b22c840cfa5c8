import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)


def random_u8_image(rng, m=8, n=8):
    return rng.integers(0, 256, size=(m, n, 3), dtype=np.uint8)


def random_mask(rng, m=8, n=8, p_zero=0.3):
    return (rng.random((m, n)) >= p_zero).astype(np.uint8)
