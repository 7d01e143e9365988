"""Random generators for admissible inputs, shared by tests and the benchmark."""

import numpy as np

from .fixed_rank import PsdFixedRank
from .linalg import compact_svd, symmetrize


def random_orthogonal(rng, n):
    """Haar-distributed orthogonal matrix (QR with positive-diagonal fix)."""
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.where(np.diagonal(r) < 0.0, -1.0, 1.0)


def random_stiefel(rng, n, p):
    """Uniformly random n-by-p basis with orthonormal columns."""
    q, r = np.linalg.qr(rng.standard_normal((n, p)))
    return q * np.where(np.diagonal(r) < 0.0, -1.0, 1.0)


def random_spd(rng, p, spread=1.0, scale=1.0):
    """Random SPD matrix with log-eigenvalues uniform in ``[-spread, spread]``."""
    q = random_orthogonal(rng, p)
    lam = np.exp(rng.uniform(-spread, spread, size=p))
    return symmetrize(scale * (q * lam) @ q.T)


def random_fixed_rank(rng, n, p, spread=1.0, scale=1.0):
    """Random rank-p PSD matrix in factored form."""
    return PsdFixedRank(
        random_stiefel(rng, n, p), random_spd(rng, p, spread, scale), check=False
    )


def rotate_subspace(rng, basis, distance):
    """Move a basis a given geodesic distance along a random horizontal direction.

    When the horizontal space is trivial (p = n) the basis is returned
    unchanged: the whole space cannot rotate away from itself.
    """
    n, p = basis.shape
    h = rng.standard_normal((n, p))
    h -= basis @ (basis.T @ h)
    left, theta, right = compact_svd(h)
    norm = np.linalg.norm(theta)
    if norm < 1e-10:
        return basis.copy()
    theta = theta * (distance / norm)
    moved = (basis @ right) * np.cos(theta) + left * np.sin(theta)
    return moved @ right.T


def clustered_fixed_rank(rng, n, p, count, subspace_radius=0.2, shape_spread=0.5):
    """``count`` factored inputs whose spans cluster around a common subspace.

    Every span sits at geodesic distance at most ``subspace_radius`` from a
    random center, so pairwise distances stay below ``2 * subspace_radius``
    and the uniqueness-ball precondition holds whenever
    ``subspace_radius < pi / (4 sqrt 2)``.
    """
    center = random_stiefel(rng, n, p)
    out = []
    for _ in range(count):
        dist = subspace_radius * rng.uniform(0.3, 1.0)
        basis = rotate_subspace(rng, center, dist)
        out.append(PsdFixedRank(basis, random_spd(rng, p, shape_spread), check=False))
    return out
