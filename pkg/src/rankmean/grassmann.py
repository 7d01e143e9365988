"""Subspace geometry: principal angles, alignment, geodesics and means.

A p-dimensional subspace of R^n is handled through an n-by-p basis with
orthonormal columns. Bases are representatives only: every operation in this
module depends on them through their span alone, except where a specific
aligned representative is the documented output.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    AmbiguousSubspaceError,
    ConvergenceError,
    CutLocusError,
    DimensionMismatchError,
    DomainError,
    OutOfBallError,
)
from .linalg import (
    EIGEN_GAP_TOL,
    check_stiefel,
    compact_svd,
    orthonormal_completion,
    signed_svd,
)
from .spd import DEFAULT_CONFIG, _check_weights

# Principal angles within this margin of pi/2 put a pair of subspaces at the
# cut locus, where the midpoint (and hence any mean) stops being unique.
CUT_LOCUS_MARGIN = 1e-6
# Angles at or below this are snapped to exactly zero; their geodesic
# direction column is completed orthogonally instead of divided by sin(0).
# The threshold sits above the ~sqrt(eps) rounding noise of arccos near 1.
ZERO_ANGLE_TOL = 1e-7
# Radius of the geodesic ball in which the N-subspace Karcher mean is
# guaranteed to exist and be unique (curvature bound 2, injectivity pi/2).
KARCHER_BALL_RADIUS = math.pi / (4.0 * math.sqrt(2.0))


@dataclass(frozen=True)
class AlignedPair:
    """Two bases of two subspaces, rotated so their columns pair off.

    ``y1.T @ y2`` is diagonal with entries ``cos(angles)`` (non-negative,
    descending). ``direction`` is the n-by-p matrix ``X`` with orthonormal
    columns orthogonal to ``y1`` such that
    ``t -> y1 cos(angles t) + X sin(angles t)`` is the connecting geodesic;
    on zero-angle columns ``X`` is a deterministic orthonormal completion
    (zero columns if the ambient space has no room left, which is harmless
    since those columns only ever appear multiplied by sin 0).
    """

    y1: np.ndarray
    y2: np.ndarray
    angles: np.ndarray
    direction: np.ndarray


def _check_pair(u1, u2):
    u1 = check_stiefel(u1)
    u2 = check_stiefel(u2)
    if u1.shape != u2.shape:
        raise DimensionMismatchError(
            f"subspace bases have mismatched shapes {u1.shape} and {u2.shape}"
        )
    return u1, u2


def principal_angles(u1, u2):
    """Principal angles between two subspaces, ascending, in [0, pi/2].

    Computed as ``arccos`` of the singular values of ``u1.T @ u2`` (clipped
    to [0, 1] to guard the domain against rounding).
    """
    u1, u2 = _check_pair(u1, u2)
    s = np.linalg.svd(u1.T @ u2, compute_uv=False)
    return np.arccos(np.clip(s, 0.0, 1.0))


def grassmann_distance(u1, u2):
    """Geodesic distance: the 2-norm of the principal angles."""
    return float(np.linalg.norm(principal_angles(u1, u2)))


def align(u1, u2):
    """Rotate two bases inside their spans so they pair off column by column.

    The rotations come from the SVD ``u1.T @ u2 = O1 diag(cos angles) O2.T``;
    ``y1 = u1 @ O1`` and ``y2 = u2 @ O2`` realize the minimal Stiefel
    distance between the two spans, and the connecting geodesic direction is
    recovered as ``X = (y2 - y1 cos)(sin)^+`` on non-zero angles.

    Raises
    ------
    CutLocusError
        If some principal angle reaches ``pi/2 - CUT_LOCUS_MARGIN``.
    """
    u1, u2 = _check_pair(u1, u2)
    o1, s, o2 = compact_svd(u1.T @ u2)
    s = np.clip(s, 0.0, 1.0)
    angles = np.arccos(s)
    if angles[-1] >= 0.5 * math.pi - CUT_LOCUS_MARGIN:
        raise CutLocusError(
            f"principal angle {angles[-1]:.9f} rad is at the cut locus "
            f"(within {CUT_LOCUS_MARGIN:.1e} of pi/2); the subspace mean is undefined"
        )
    zero = angles <= ZERO_ANGLE_TOL
    angles = np.where(zero, 0.0, angles)
    y1 = u1 @ o1
    y2 = u2 @ o2
    direction = np.zeros_like(y1)
    if np.any(~zero):
        x_nz = (y2[:, ~zero] - y1[:, ~zero] * np.cos(angles[~zero])) / np.sin(angles[~zero])
        # One projection pass keeps X orthogonal to y1 at rounding level even
        # for angles barely above the snap threshold.
        x_nz -= y1 @ (y1.T @ x_nz)
        direction[:, ~zero] = x_nz
    if np.any(zero):
        base = np.hstack([y1, direction[:, ~zero]])
        direction[:, zero] = orthonormal_completion(base, int(np.sum(zero)))
    return AlignedPair(y1=y1, y2=y2, angles=angles, direction=direction)


def grassmann_geodesic(pair, t):
    """Basis at parameter ``t`` along the aligned geodesic.

    ``t = 0`` gives ``pair.y1``, ``t = 1`` gives ``pair.y2``; the curve has
    constant speed equal to the 2-norm of the angles.
    """
    ct = np.cos(pair.angles * t)
    st = np.sin(pair.angles * t)
    return pair.y1 * ct + pair.direction * st


def subspace_mean_two(u1, u2, alpha):
    """Weighted mean of two subspaces: geodesic point with weight ``alpha`` on ``u2``."""
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"weight alpha={alpha} outside [0, 1]")
    return grassmann_geodesic(align(u1, u2), alpha)


def chordal_mean(subspaces, weights=None):
    """Chordal mean: dominant p-subspace of the projector centroid.

    Equal to the top-p left-singular subspace of the stacked scaled bases
    ``[sqrt(w_1) U_1, ..., sqrt(w_N) U_N]`` (the centroid is that matrix
    times its transpose), which keeps the cost linear in n.

    Raises
    ------
    AmbiguousSubspaceError
        If the centroid's eigenvalue gap ``lambda_p - lambda_{p+1}`` is
        below ``EIGEN_GAP_TOL * lambda_1``.
    """
    bases = [check_stiefel(u) for u in subspaces]
    if not bases:
        raise DomainError("need at least one subspace")
    n, p = bases[0].shape
    for u in bases[1:]:
        if u.shape != (n, p):
            raise DimensionMismatchError("subspace bases have mixed shapes")
    w = _check_weights(weights, len(bases))
    if len(bases) == 1:
        return bases[0].copy()
    stacked = np.hstack([u * math.sqrt(wi) for u, wi in zip(bases, w)])
    left, s, _ = signed_svd(stacked)
    lam = s**2
    lam_next = lam[p] if p < lam.size else 0.0
    if lam[0] <= 0.0 or lam[p - 1] - lam_next < EIGEN_GAP_TOL * lam[0]:
        raise AmbiguousSubspaceError(
            f"centroid eigenvalue gap {lam[p - 1] - lam_next:.3e} below "
            f"{EIGEN_GAP_TOL:.1e} of lambda_1; the mean subspace is not well-defined"
        )
    return np.ascontiguousarray(left[:, :p])


def _log_map(w, u):
    """Horizontal tangent at the basis ``w`` pointing to span(u), as X Sigma O1.T."""
    pair = align(w, u)
    o1 = w.T @ pair.y1
    return (pair.direction * pair.angles) @ o1.T


def _exp_map(w, tangent):
    """Geodesic step from the basis ``w`` along a horizontal tangent."""
    left, theta, right = compact_svd(tangent)
    ct = np.cos(theta)
    st = np.sin(theta)
    moved = (w @ right) * ct + left * st
    return moved @ right.T


def _reorthonormalize(w):
    """QR cleanup with positive diagonal; a near-identity correction for near-orthonormal input."""
    q, r = np.linalg.qr(w)
    signs = np.where(np.diagonal(r) < 0.0, -1.0, 1.0)
    return q * signs


def karcher_mean_grassmann(subspaces, weights=None, config=DEFAULT_CONFIG):
    """Karcher mean of N subspaces by tangent-space averaging.

    Starts at the chordal mean; every iteration averages the log-map
    tangents to the inputs and moves along the resulting direction, until
    the mean tangent's Frobenius norm drops below ``config.tolerance``.

    Raises
    ------
    OutOfBallError
        If some input lies farther than ``KARCHER_BALL_RADIUS`` from the
        chordal initializer, outside the uniqueness ball.
    ConvergenceError
        If the tangent norm does not reach tolerance in
        ``config.max_iterations``.
    """
    bases = [check_stiefel(u) for u in subspaces]
    w_arr = _check_weights(weights, len(bases))
    center = chordal_mean(bases, weights)
    radius = max(grassmann_distance(center, u) for u in bases)
    if radius > KARCHER_BALL_RADIUS:
        raise OutOfBallError(
            f"input subspace at distance {radius:.6f} from the chordal initializer exceeds "
            f"the uniqueness ball radius {KARCHER_BALL_RADIUS:.6f}"
        )
    if len(bases) == 1:
        return center
    residual = np.inf
    for _ in range(config.max_iterations):
        mean_tangent = sum(wi * _log_map(center, u) for wi, u in zip(w_arr, bases))
        residual = float(np.linalg.norm(mean_tangent))
        if residual < config.tolerance:
            return center
        center = _reorthonormalize(_exp_map(center, config.step_size * mean_tangent))
    raise ConvergenceError(
        f"subspace Karcher mean did not converge in {config.max_iterations} iterations "
        f"(tangent norm {residual:.3e})",
        last_iterate=center,
        residual=residual,
    )


def minimal_rotation(pair):
    """Rotation of minimal energy mapping ``pair.y1`` to ``pair.y2``.

    Block planar rotation by the principal angles in the (y1_j, X_j) planes,
    identity on the orthogonal complement. The result is in SO(n).
    """
    y1, x, angles = pair.y1, pair.direction, pair.angles
    n = y1.shape[0]
    c = np.cos(angles) - 1.0
    s = np.sin(angles)
    r = np.eye(n)
    r += (y1 * c) @ y1.T + (x * c) @ x.T
    r += (x * s) @ y1.T - (y1 * s) @ x.T
    return r
