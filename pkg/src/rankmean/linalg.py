"""Dense symmetric/orthogonal kernels shared by every other module.

All routines operate on plain ``numpy.ndarray`` inputs. Conventions used
throughout the package and enforced here:

- eigenvalues are returned in descending order;
- singular value decompositions carry a deterministic sign (the entry of
  largest magnitude in each left-singular column is non-negative, ties
  resolved by lowest row index), so repeated calls on identical input are
  bit-identical;
- nominally symmetric inputs are symmetrized as ``(M + M.T) / 2`` before
  any decomposition, so asymmetry noise cannot accumulate across chained
  operations.
"""

import numpy as np

from .errors import (
    AmbiguousSubspaceError,
    DimensionMismatchError,
    DomainError,
    NotPositiveDefiniteError,
    NumericalError,
)

# Relative asymmetry tolerated before an input stops counting as symmetric.
SYMMETRY_TOL = 1e-12
# Frobenius tolerance on U.T @ U - I for a basis with orthonormal columns.
STIEFEL_TOL = 1e-10
# Relative eigenvalue gap below which a dominant subspace is ill-defined.
EIGEN_GAP_TOL = 1e-8

_SPD_FUNCTIONS = ("sqrt", "inv_sqrt", "log", "exp_sym")


def symmetrize(m):
    """Return the symmetric part ``(m + m.T) / 2``."""
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


def check_symmetric(m, tol=SYMMETRY_TOL):
    """Validate and return the symmetrized copy of a square matrix.

    Raises
    ------
    DomainError
        If ``m`` is not square, not finite, or asymmetric beyond ``tol``
        relative to its largest entry.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DomainError("matrix contains non-finite entries")
    scale = np.max(np.abs(m)) if m.size else 0.0
    asym = np.max(np.abs(m - m.T)) if m.size else 0.0
    if asym > tol * max(scale, 1e-300):
        raise DomainError(
            f"matrix is asymmetric: max |M - M.T| = {asym:.3e} exceeds "
            f"{tol:.1e} relative tolerance"
        )
    return symmetrize(m)


def check_spd(m, tol_factor=None):
    """Validate a symmetric positive definite matrix and return its symmetrized copy.

    The positivity test is scale invariant: the smallest eigenvalue must
    exceed ``dim * eps * largest eigenvalue``.
    """
    m = check_symmetric(m)
    w = np.linalg.eigvalsh(m)
    lam_min, lam_max = w[0], w[-1]
    factor = tol_factor if tol_factor is not None else m.shape[0] * np.finfo(float).eps
    if lam_max <= 0.0 or lam_min <= factor * lam_max:
        raise NotPositiveDefiniteError(
            f"matrix is not positive definite: eigenvalue range [{lam_min:.3e}, {lam_max:.3e}]"
        )
    return m


def check_stiefel(u, tol=STIEFEL_TOL):
    """Validate an n-by-p matrix with orthonormal columns and return it as float array."""
    u = np.asarray(u, dtype=float)
    if u.ndim != 2 or u.shape[0] < u.shape[1]:
        raise DomainError(f"expected an n x p matrix with p <= n, got shape {u.shape}")
    gram_defect = np.linalg.norm(u.T @ u - np.eye(u.shape[1]))
    if gram_defect > tol:
        raise DomainError(
            f"columns are not orthonormal: ||U.T U - I||_F = {gram_defect:.3e}"
        )
    return u


def sym_eig(m):
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Parameters
    ----------
    m : (n, n) array_like
        Symmetric matrix (symmetrized internally).

    Returns
    -------
    eigenvalues : (n,) ndarray
        In descending order.
    eigenvectors : (n, n) ndarray
        Orthonormal, column ``k`` paired with ``eigenvalues[k]``.
    """
    m = check_symmetric(m)
    try:
        w, v = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"symmetric eigensolver failed: {exc}") from exc
    return np.ascontiguousarray(w[::-1]), np.ascontiguousarray(v[:, ::-1])


def spd_fn(m, kind):
    """Apply a scalar function to a symmetric matrix through its eigenvalues.

    ``kind`` is one of ``sqrt``, ``inv_sqrt``, ``log`` (all requiring a
    positive spectrum) or ``exp_sym`` (any symmetric input). The result is
    ``V diag(f(lambda)) V.T``.

    Unlike :func:`check_spd` (the input-validation gate), the domain test
    here only demands strictly positive eigenvalues: chained operations on
    extremely flat inputs produce legitimate intermediates whose condition
    number approaches 1/eps, and rejecting them would lose the exactly
    computable cases (diagonal flat pairs).
    """
    if kind not in _SPD_FUNCTIONS:
        raise DomainError(f"unknown matrix function {kind!r}, expected one of {_SPD_FUNCTIONS}")
    w, v = sym_eig(m)
    if kind == "exp_sym":
        fw = np.exp(w)
    else:
        if w[-1] <= 0.0:
            raise NotPositiveDefiniteError(
                f"matrix function {kind!r} needs a positive definite input, "
                f"eigenvalue range [{w[-1]:.3e}, {w[0]:.3e}]"
            )
        if kind == "sqrt":
            fw = np.sqrt(w)
        elif kind == "inv_sqrt":
            fw = 1.0 / np.sqrt(w)
        else:
            fw = np.log(w)
    return symmetrize((v * fw) @ v.T)


def spd_sqrt(m):
    """Principal square root of a positive definite matrix."""
    return spd_fn(m, "sqrt")


def spd_inv_sqrt(m):
    """Inverse principal square root of a positive definite matrix."""
    return spd_fn(m, "inv_sqrt")


def spd_log(m):
    """Matrix logarithm of a positive definite matrix."""
    return spd_fn(m, "log")


def sym_exp(s):
    """Matrix exponential of a symmetric matrix."""
    return spd_fn(s, "exp_sym")


def _spd_sqrt_pair(m):
    """Square root and inverse square root from a single eigendecomposition."""
    w, v = sym_eig(m)
    if w[-1] <= 0.0:
        raise NotPositiveDefiniteError(
            f"expected a positive definite matrix, eigenvalue range [{w[-1]:.3e}, {w[0]:.3e}]"
        )
    sq = np.sqrt(w)
    return symmetrize((v * sq) @ v.T), symmetrize((v / sq) @ v.T)


def signed_svd(m):
    """Economy SVD of any 2-d array with the deterministic sign convention.

    The entry of largest magnitude in every left-singular column is made
    non-negative (ties broken by lowest row index), with the compensating
    flip applied to the right factor.
    """
    m = np.asarray(m, dtype=float)
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed: {exc}") from exc
    # np.argmax returns the lowest index on ties, which fixes the convention.
    anchor = np.argmax(np.abs(u), axis=0)
    signs = np.where(u[anchor, np.arange(u.shape[1])] < 0.0, -1.0, 1.0)
    return u * signs, s, (vt * signs[:, None]).T


def compact_svd(m):
    """Compact singular value decomposition with a deterministic sign.

    Parameters
    ----------
    m : (n, p) array_like, p <= n.

    Returns
    -------
    left : (n, p) ndarray
        Orthonormal columns; in each column the entry of largest magnitude
        is non-negative (ties broken by lowest row index).
    singular_values : (p,) ndarray, descending and non-negative.
    right : (p, p) ndarray
        Orthogonal, ``left @ diag(s) @ right.T`` reconstructs ``m``.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] < m.shape[1]:
        raise DomainError(f"expected an n x p matrix with p <= n, got shape {m.shape}")
    return signed_svd(m)


def dominant_subspace(m, p):
    """Orthonormal basis of the span of the ``p`` largest eigenvalues.

    Raises
    ------
    AmbiguousSubspaceError
        If the relative gap ``lambda_p - lambda_{p+1}`` falls below
        ``EIGEN_GAP_TOL * lambda_1``: the subspace is then ill-defined.
    """
    w, v = sym_eig(m)
    n = len(w)
    if not 1 <= p <= n:
        raise DomainError(f"subspace dimension {p} out of range for a {n} x {n} matrix")
    lam_max = w[0]
    if p < n:
        gap = w[p - 1] - w[p]
        if lam_max <= 0.0 or gap < EIGEN_GAP_TOL * lam_max:
            raise AmbiguousSubspaceError(
                f"eigenvalue gap {gap:.3e} below {EIGEN_GAP_TOL:.1e} of lambda_1 = {lam_max:.3e}; "
                "the dominant subspace is not well-defined"
            )
    return np.ascontiguousarray(v[:, :p])


def orthonormal_completion(b, k):
    """``k`` orthonormal columns orthogonal to the columns of ``b``.

    Deterministic (Householder QR based). If the orthogonal complement has
    fewer than ``k`` directions, the remaining columns are zero.
    """
    b = np.asarray(b, dtype=float)
    n, m = b.shape
    if k <= 0:
        return np.zeros((n, 0))
    q, _ = np.linalg.qr(b, mode="complete")
    comp = q[:, m:]
    if comp.shape[1] >= k:
        return np.ascontiguousarray(comp[:, :k])
    out = np.zeros((n, k))
    out[:, : comp.shape[1]] = comp
    return out


def require_same_shape(a, b, what="matrices"):
    """Raise :class:`DimensionMismatchError` unless ``a`` and ``b`` have equal shapes."""
    if np.shape(a) != np.shape(b):
        raise DimensionMismatchError(
            f"{what} have mismatched shapes {np.shape(a)} and {np.shape(b)}"
        )
