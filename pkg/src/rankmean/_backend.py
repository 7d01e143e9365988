"""Selection between the compiled mean kernel and the pure NumPy path.

The compiled extension removes per-call dispatch overhead from the hot
pipeline (subspace mean + alignment + small-matrix Karcher loop), which is
what keeps the cost of the N-matrix mean visibly linear in the ambient
dimension. It is optional: when the import fails the package silently runs
on NumPy alone. Set ``RANKMEAN_BACKEND`` to ``python`` or ``compiled`` to
force a choice at import time; ``set_backend`` switches afterwards (used by
the benchmark command to time both).
"""

import os

import numpy as np

from .errors import (
    AmbiguousSubspaceError,
    ConvergenceError,
    CutLocusError,
    DomainError,
    NumericalError,
    OutOfBallError,
)

try:
    from . import _core

    _HAVE_CORE = True
except ImportError:  # pragma: no cover - depends on the build
    _core = None
    _HAVE_CORE = False

_ENV_VAR = "RANKMEAN_BACKEND"
_BACKENDS = ("python", "compiled")


def _initial_backend():
    requested = os.environ.get(_ENV_VAR, "auto").strip().lower()
    if requested in ("", "auto"):
        return "compiled" if _HAVE_CORE else "python"
    if requested == "compiled" and not _HAVE_CORE:
        raise ImportError(
            f"{_ENV_VAR}=compiled but the compiled kernel failed to import"
        )
    if requested not in _BACKENDS:
        raise ValueError(f"unknown {_ENV_VAR} value {requested!r}")
    return requested


_ACTIVE = _initial_backend()


def active_backend():
    """Name of the backend the mean pipeline currently dispatches to."""
    return _ACTIVE


def compiled_available():
    return _HAVE_CORE


def set_backend(name):
    """Switch backends; returns the previous name."""
    global _ACTIVE
    if name not in _BACKENDS:
        raise DomainError(f"unknown backend {name!r}, expected one of {_BACKENDS}")
    if name == "compiled" and not _HAVE_CORE:
        raise DomainError("the compiled kernel is not available in this installation")
    previous = _ACTIVE
    _ACTIVE = name
    return previous


# Status codes shared with the compiled kernel.
_STATUS_OK = 0
_STATUS_AMBIGUOUS = 1
_STATUS_CUT_LOCUS = 2
_STATUS_OUT_OF_BALL = 3
_STATUS_NO_CONVERGENCE = 4
_STATUS_NUMERICAL = 5


def mean_ls_chordal_compiled(
    basis_stack, shape_stack, weights, tol, max_iter, step, ball_check
):
    """Invoke the compiled pipeline; maps status codes back to exceptions."""
    from .grassmann import CUT_LOCUS_MARGIN, KARCHER_BALL_RADIUS
    from .linalg import EIGEN_GAP_TOL

    status, iters, resid, w_out, t_out = _core.mean_ls_chordal(
        basis_stack,
        shape_stack,
        np.ascontiguousarray(weights, dtype=float),
        float(tol),
        int(max_iter),
        float(step),
        bool(ball_check),
        KARCHER_BALL_RADIUS,
        CUT_LOCUS_MARGIN,
        EIGEN_GAP_TOL,
    )
    if status == _STATUS_OK:
        return w_out, t_out, {"iterations": iters, "residual": resid}
    if status == _STATUS_AMBIGUOUS:
        raise AmbiguousSubspaceError(
            "centroid eigenvalue gap too small; the mean subspace is not well-defined"
        )
    if status == _STATUS_CUT_LOCUS:
        raise CutLocusError(
            f"input span at a principal angle within {CUT_LOCUS_MARGIN:.1e} of pi/2 "
            "from the mean subspace (cut locus)"
        )
    if status == _STATUS_OUT_OF_BALL:
        raise OutOfBallError(
            f"input span outside the uniqueness ball of radius "
            f"{KARCHER_BALL_RADIUS:.6f} around the mean subspace"
        )
    if status == _STATUS_NO_CONVERGENCE:
        raise ConvergenceError(
            f"shape mean did not converge in {max_iter} iterations (residual {resid:.3e})",
            last_iterate=(w_out, t_out),
            residual=resid,
        )
    if status == _STATUS_NUMERICAL:
        raise NumericalError("shape mean iterate lost positive definiteness")
    raise NumericalError(f"LAPACK failure in the compiled kernel (info={-status})")
