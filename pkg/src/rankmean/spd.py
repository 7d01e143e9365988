"""Geometric means and distances on the cone of positive definite matrices.

Two N-matrix means are provided: the least-squares (Karcher) mean of the
affine-invariant metric, computed by a fixed-point iteration, and the
recursive pairwise mean of Ando, Li and Mathias (``alm``), computed by the
literal replace-each-matrix-by-the-mean-of-the-others recursion.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    ConvergenceError,
    DimensionMismatchError,
    DomainError,
    NotPositiveDefiniteError,
)
from .linalg import (
    _spd_sqrt_pair,
    check_spd,
    require_same_shape,
    spd_sqrt,
    sym_eig,
    symmetrize,
)

MEAN_METHODS = ("ls", "alm")


@dataclass(frozen=True)
class SpdMeanConfig:
    """Settings for the iterative cone means.

    ``tolerance`` stops the Karcher iteration when the Frobenius norm of the
    weighted log-sum falls below ``tolerance * dim``, and the alm recursion
    when the largest pairwise distance of the iterates falls below it.
    """

    method: str = "ls"
    max_iterations: int = 200
    tolerance: float = 1e-10
    step_size: float = 1.0

    def __post_init__(self):
        if self.method not in MEAN_METHODS:
            raise DomainError(f"unknown mean method {self.method!r}, expected one of {MEAN_METHODS}")
        if self.max_iterations < 1:
            raise DomainError("max_iterations must be at least 1")
        if self.tolerance <= 0.0:
            raise DomainError("tolerance must be positive")
        if not 0.0 < self.step_size <= 1.0:
            raise DomainError("step_size must lie in (0, 1]")


DEFAULT_CONFIG = SpdMeanConfig()


def ando_mean(a, b):
    """Geometric mean ``a^{1/2} (a^{-1/2} b a^{-1/2})^{1/2} a^{1/2}`` of two SPD matrices."""
    a = check_spd(a)
    b = check_spd(b)
    require_same_shape(a, b)
    rs, ris = _spd_sqrt_pair(a)
    mid = spd_sqrt(symmetrize(ris @ b @ ris))
    return symmetrize(rs @ mid @ rs)


def spd_geodesic(a, b, t):
    """Point at parameter ``t`` on the geodesic from ``a`` to ``b``.

    The path is ``a^{1/2} exp(t log(a^{-1/2} b a^{-1/2})) a^{1/2}``; ``t=0``
    gives ``a``, ``t=1`` gives ``b`` and ``t=1/2`` the geometric mean.
    """
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"geodesic parameter t={t} outside [0, 1]")
    a = check_spd(a)
    b = check_spd(b)
    require_same_shape(a, b)
    rs, ris = _spd_sqrt_pair(a)
    w, v = sym_eig(symmetrize(ris @ b @ ris))
    if w[-1] <= 0.0:
        raise NotPositiveDefiniteError("congruence-transformed matrix lost positive definiteness")
    inner = symmetrize((v * np.exp(t * np.log(w))) @ v.T)
    return symmetrize(rs @ inner @ rs)


def spd_distance(a, b):
    """Affine-invariant distance ``sqrt(sum_k log^2 lambda_k)``.

    The ``lambda_k`` are the generalized eigenvalues of the pencil
    ``a - lambda b``. Invariant under congruence by any invertible matrix
    and under joint inversion.
    """
    a = check_spd(a)
    b = check_spd(b)
    require_same_shape(a, b)
    try:
        lam = scipy.linalg.eigh(a, b, eigvals_only=True)
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
        raise NotPositiveDefiniteError(f"generalized eigenproblem failed: {exc}") from exc
    if np.any(lam <= 0.0):
        raise NotPositiveDefiniteError("pencil has non-positive generalized eigenvalues")
    return float(np.sqrt(np.sum(np.log(lam) ** 2)))


def _check_weights(weights, count):
    if weights is None:
        return np.full(count, 1.0 / count)
    w = np.asarray(weights, dtype=float)
    if w.shape != (count,):
        raise DimensionMismatchError(f"expected {count} weights, got shape {w.shape}")
    if np.any(w <= 0.0):
        raise DomainError("weights must be strictly positive")
    if abs(w.sum() - 1.0) > 1e-8:
        raise DomainError(f"weights must sum to 1, got {w.sum():.12g}")
    return w / w.sum()


def _as_spd_stack(matrices):
    mats = [check_spd(m) for m in matrices]
    if not mats:
        raise DomainError("need at least one matrix")
    dim = mats[0].shape[0]
    for m in mats[1:]:
        if m.shape[0] != dim:
            raise DimensionMismatchError("input matrices have mixed dimensions")
    return np.stack(mats)


def karcher_mean_spd(matrices, weights=None, config=DEFAULT_CONFIG, diagnostics=None):
    """Least-squares (Karcher) mean of SPD matrices under the affine-invariant metric.

    Fixed-point iteration started at the arithmetic mean:

        X <- X^{1/2} exp(step * sum_i w_i log(X^{-1/2} A_i X^{-1/2})) X^{1/2}

    The returned ``X`` satisfies the first-order condition
    ``||sum_i w_i log(X^{-1/2} A_i X^{-1/2})||_F < tolerance * dim``.
    A dict passed as ``diagnostics`` receives the iteration count and final
    residual.

    Raises
    ------
    ConvergenceError
        If the residual does not reach tolerance within
        ``config.max_iterations``; carries the last iterate and residual.
    """
    stack = _as_spd_stack(matrices)
    n_mats, dim = stack.shape[0], stack.shape[1]
    w = _check_weights(weights, n_mats)
    if n_mats == 1:
        if diagnostics is not None:
            diagnostics.update(iterations=0, residual=0.0)
        return stack[0].copy()

    x = symmetrize(np.tensordot(w, stack, axes=1))
    residual = np.inf
    for iteration in range(config.max_iterations):
        w_x, v_x = sym_eig(x)
        if w_x[-1] <= 0.0:
            raise NotPositiveDefiniteError("iterate lost positive definiteness")
        sq = np.sqrt(w_x)
        xs = (v_x * sq) @ v_x.T
        xis = (v_x / sq) @ v_x.T
        inner = xis @ stack @ xis
        inner = 0.5 * (inner + inner.transpose(0, 2, 1))
        lam, vecs = np.linalg.eigh(inner)
        if np.any(lam <= 0.0):
            raise NotPositiveDefiniteError("congruence-transformed matrix lost positive definiteness")
        logs = (vecs * np.log(lam)[:, None, :]) @ vecs.transpose(0, 2, 1)
        grad = symmetrize(np.tensordot(w, logs, axes=1))
        residual = float(np.linalg.norm(grad))
        if residual < config.tolerance * dim:
            if diagnostics is not None:
                diagnostics.update(iterations=iteration + 1, residual=residual)
            return symmetrize(x)
        w_g, v_g = np.linalg.eigh(config.step_size * grad)
        x = symmetrize(xs @ ((v_g * np.exp(w_g)) @ v_g.T) @ xs)
    raise ConvergenceError(
        f"Karcher mean did not converge in {config.max_iterations} iterations "
        f"(residual {residual:.3e})",
        last_iterate=x,
        residual=residual,
    )


def alm_mean(matrices, config=DEFAULT_CONFIG, diagnostics=None):
    """Ando-Li-Mathias mean: the common limit of recursive pairwise averaging.

    Each sweep replaces ``A_i`` by the alm mean of the other ``N - 1``
    matrices (recursively, with ``N = 2`` reducing to :func:`ando_mean`),
    until the largest pairwise distance falls below ``config.tolerance``.

    The cost grows steeply with ``N`` (every sweep recurses through all
    ``N - 1``-subsets); practical for ``N`` up to about 5.
    """
    stack = _as_spd_stack(matrices)
    n_mats = stack.shape[0]
    if n_mats < 2:
        raise DomainError("the alm mean needs at least two matrices")
    if n_mats == 2:
        if diagnostics is not None:
            diagnostics.update(iterations=0, residual=0.0)
        return ando_mean(stack[0], stack[1])

    current = [stack[i] for i in range(n_mats)]
    for sweep in range(config.max_iterations):
        spread = max(
            spd_distance(current[i], current[j])
            for i in range(n_mats)
            for j in range(i + 1, n_mats)
        )
        if spread < config.tolerance:
            if diagnostics is not None:
                diagnostics.update(iterations=sweep, residual=spread)
            return symmetrize(np.mean(current, axis=0))
        current = [
            alm_mean([current[j] for j in range(n_mats) if j != i], config)
            for i in range(n_mats)
        ]
    raise ConvergenceError(
        f"alm mean did not converge in {config.max_iterations} sweeps",
        last_iterate=symmetrize(np.mean(current, axis=0)),
        residual=spread,
    )
