import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def random_signal(n_len, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(n_len) + 1j * rng.standard_normal(n_len)


def direct_inner_product(x):
    """Double-sum definition of S[p, k], no FFTs."""
    n_len = len(x)
    S = np.zeros((n_len, n_len), dtype=complex)
    for p in range(n_len):
        for k in range(n_len):
            S[p, k] = sum(x[n] * np.conj(x[(n - p) % n_len]) * np.exp(-2j * np.pi * n * k / n_len) for n in range(n_len))
    return S


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def delta(n_len=4):
    x = np.zeros(n_len, dtype=complex)
    x[0] = 1
    return x
