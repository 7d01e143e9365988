"""Rank-preserving geometric means of fixed-rank positive semi-definite matrices.

Modules
-------
``linalg``     dense symmetric/orthogonal kernels
``spd``        means and distances on the positive definite cone
``grassmann``  principal angles, subspace geodesics and means
``fixed_rank`` the rank-preserving N-matrix mean and its property suite
``filtering``  first-order filter on fixed-rank PSD streams
``matio``      plain-text matrix files
``cli``        the ``rankmean`` command
"""

from ._backend import active_backend, compiled_available, set_backend
from .errors import (
    AmbiguousSubspaceError,
    ConvergenceError,
    CutLocusError,
    DimensionMismatchError,
    DomainError,
    FileFormatError,
    NotPositiveDefiniteError,
    NotPsdError,
    NumericalError,
    OutOfBallError,
    PreconditionError,
    RankDeficientError,
    RankMeanError,
)
from .fixed_rank import (
    FixedRankMeanConfig,
    HorizontalTangent,
    PsdFixedRank,
    factorize,
    mean_n,
    mean_two,
    metric_inner,
    pseudo_inverse,
    verify_properties,
)
from .filtering import (
    FilterConfig,
    FilterState,
    filter_step,
    generate_measurement,
    run_experiment,
)
from .grassmann import (
    AlignedPair,
    align,
    chordal_mean,
    grassmann_distance,
    grassmann_geodesic,
    karcher_mean_grassmann,
    minimal_rotation,
    principal_angles,
    subspace_mean_two,
)
from .linalg import compact_svd, dominant_subspace, spd_fn, sym_eig
from .spd import (
    SpdMeanConfig,
    alm_mean,
    ando_mean,
    karcher_mean_spd,
    spd_distance,
    spd_geodesic,
)

__version__ = "0.1.0"

__all__ = [
    "AlignedPair",
    "AmbiguousSubspaceError",
    "ConvergenceError",
    "CutLocusError",
    "DimensionMismatchError",
    "DomainError",
    "FileFormatError",
    "FilterConfig",
    "FilterState",
    "FixedRankMeanConfig",
    "HorizontalTangent",
    "NotPositiveDefiniteError",
    "NotPsdError",
    "NumericalError",
    "OutOfBallError",
    "PreconditionError",
    "PsdFixedRank",
    "RankDeficientError",
    "RankMeanError",
    "SpdMeanConfig",
    "active_backend",
    "align",
    "alm_mean",
    "ando_mean",
    "chordal_mean",
    "compact_svd",
    "compiled_available",
    "dominant_subspace",
    "factorize",
    "filter_step",
    "generate_measurement",
    "grassmann_distance",
    "grassmann_geodesic",
    "karcher_mean_grassmann",
    "karcher_mean_spd",
    "mean_n",
    "mean_two",
    "metric_inner",
    "minimal_rotation",
    "principal_angles",
    "pseudo_inverse",
    "run_experiment",
    "set_backend",
    "spd_distance",
    "spd_fn",
    "spd_geodesic",
    "subspace_mean_two",
    "sym_eig",
    "verify_properties",
]
