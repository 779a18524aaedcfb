import numpy as np
import pytest


def rand_corr(d, rng, factor=4):
    """Random correlation matrix from a wide factor model; larger ``factor``
    concentrates the off-diagonals near zero."""
    W = rng.standard_normal((d, factor * d))
    S = W @ W.T
    dh = 1.0 / np.sqrt(np.diag(S))
    return S * dh[:, None] * dh[None, :]


def exchangeable(d, rho):
    return rho * np.ones((d, d)) + (1.0 - rho) * np.eye(d)


@pytest.fixture
def rng():
    return np.random.default_rng(20240815)
