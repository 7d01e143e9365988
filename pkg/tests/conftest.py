import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def fro(a):
    return float(np.linalg.norm(a))


def subspace_gap(u1, u2):
    """Frobenius distance of the two projectors (0 iff the spans coincide)."""
    return fro(u1 @ u1.T - u2 @ u2.T)
