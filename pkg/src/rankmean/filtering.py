"""First-order filtering of a stream of noisy fixed-rank PSD measurements.

The discrete filter realizes the semi-implicit update
``x_{i+1} = (y_i dt + tau x_i) / (dt + tau)`` with the weighted
rank-preserving mean in place of the arithmetic one: every step moves the
estimate toward the measurement by ``alpha = dt / (dt + tau)``, along the
subspace geodesic and the log-domain shape geodesic simultaneously. Large
outlier shapes are crushed by the logarithm, while the rank of the estimate
never collapses.

For rank-1 streams in the plane this reduces to a convex combination of
line angles and of log squared radii, which the tests use as a closed-form
cross-check.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import CutLocusError, DimensionMismatchError, DomainError, NumericalError
from .fixed_rank import PsdFixedRank, mean_two
from .linalg import symmetrize


class RejectedStepWarning(UserWarning):
    """A measurement at the cut locus of the estimate was skipped."""


@dataclass(frozen=True)
class FilterConfig:
    """Filter and experiment parameters.

    ``tau`` and ``dt`` share a unit; their ratio sets the smoothing weight
    ``alpha = dt / (dt + tau)``. ``noise_level`` is the expected ratio
    ``E||noise|| / ||signal||`` of the measurement generator; every
    ``outlier_period``-th step (if set) scales the noise by
    ``outlier_scale``.
    """

    tau: float
    dt: float
    steps: int = 500
    noise_level: float = 0.5
    outlier_period: int | None = None
    outlier_scale: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.tau <= 0.0:
            raise DomainError("tau must be positive")
        if self.dt <= 0.0:
            raise DomainError("dt must be positive")
        if self.steps < 1:
            raise DomainError("steps must be at least 1")
        if self.noise_level < 0.0:
            raise DomainError("noise_level must be non-negative")
        if self.outlier_period is not None and self.outlier_period < 1:
            raise DomainError("outlier_period must be at least 1")
        if self.outlier_scale <= 0.0:
            raise DomainError("outlier_scale must be positive")

    @property
    def alpha(self):
        return self.dt / (self.dt + self.tau)


@dataclass(frozen=True)
class FilterState:
    estimate: PsdFixedRank
    step_index: int = 0


def filter_step(state, measurement, config):
    """One filter update: weighted mean of estimate and measurement.

    A measurement whose span hits the cut locus of the estimate's span is
    rejected: the state is returned unchanged and a
    :class:`RejectedStepWarning` is emitted, so a stream survives
    pathological samples.
    """
    if (measurement.n, measurement.p) != (state.estimate.n, state.estimate.p):
        raise DimensionMismatchError(
            f"measurement is ({measurement.n}, {measurement.p}) but the estimate is "
            f"({state.estimate.n}, {state.estimate.p})"
        )
    try:
        new_estimate = mean_two(state.estimate, measurement, config.alpha)
    except CutLocusError:
        warnings.warn(
            f"measurement at step {state.step_index} lies at the cut locus of the "
            "current estimate; step rejected",
            RejectedStepWarning,
            stacklevel=2,
        )
        return state
    return FilterState(estimate=new_estimate, step_index=state.step_index + 1)


def generate_measurement(truth, noise_level, rng, scale=1.0):
    """Rank-1 measurement ``(z + noise)(z + noise)^T`` of a vector signal.

    The noise is Gaussian with per-component standard deviation
    ``noise_level * scale * ||z|| / sqrt(n)``, so its expected norm is about
    ``noise_level * scale * ||z||``. Resamples (up to 100 times) if the
    noisy vector is numerically zero.
    """
    z = np.asarray(truth, dtype=float).reshape(-1)
    z_norm = np.linalg.norm(z)
    if z_norm == 0.0:
        raise DomainError("the true signal vector must be non-zero")
    sigma = noise_level * scale * z_norm / np.sqrt(z.size)
    for _ in range(100):
        m = z + rng.normal(0.0, sigma, size=z.size) if sigma > 0.0 else z.copy()
        m_norm = np.linalg.norm(m)
        if m_norm > 1e-12 * z_norm:
            return PsdFixedRank(
                (m / m_norm)[:, None], np.array([[m_norm**2]]), check=False
            )
    raise NumericalError("measurement vector degenerated to zero in 100 resamples")


def _generate_factor_measurement(z_factor, noise_level, rng, scale=1.0):
    """Rank-p measurement ``(Z + noise)(Z + noise)^T`` from an n-by-p factor."""
    z_norm = np.linalg.norm(z_factor)
    sigma = noise_level * scale * z_norm / np.sqrt(z_factor.size)
    for _ in range(100):
        m = z_factor + rng.normal(0.0, sigma, size=z_factor.shape) if sigma > 0.0 else z_factor.copy()
        q, r = np.linalg.qr(m)
        diag = np.diagonal(r)
        if np.min(np.abs(diag)) > 1e-12 * max(z_norm, 1.0):
            signs = np.where(diag < 0.0, -1.0, 1.0)
            q = q * signs
            r = r * signs[:, None]
            return PsdFixedRank(q, symmetrize(r @ r.T), check=False)
    raise NumericalError("measurement factor degenerated to rank deficiency in 100 resamples")


@dataclass(frozen=True)
class TrajectoryRow:
    """One CSV row: dense upper-triangle coefficients plus the error to the truth."""

    step: int
    kind: str  # "truth", "measurement" or "estimate"
    coeffs: tuple
    err_fro: float


def _upper_coeffs(dense):
    n = dense.shape[0]
    return tuple(dense[i, j] for i in range(n) for j in range(i, n))


def coefficient_labels(n):
    """Header labels for the upper-triangle coefficients of an n-by-n matrix."""
    if n < 10:
        return [f"c{i + 1}{j + 1}" for i in range(n) for j in range(i, n)]
    return [f"c{i + 1}_{j + 1}" for i in range(n) for j in range(i, n)]


def run_experiment(config, truth):
    """Filter a constant noisy rank-p signal and record the full trajectory.

    ``truth`` is the signal factor: a length-n vector for a rank-1 stream or
    an n-by-p matrix ``Z`` for the dense truth ``Z Z^T``. The estimate is
    initialized with the first measurement. Three rows are emitted per step
    (truth, measurement, estimate), each carrying the upper-triangle dense
    coefficients and the Frobenius error against the truth. Deterministic
    for a fixed ``config.seed``.
    """
    z = np.asarray(truth, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if z.ndim != 2:
        raise DomainError(f"truth factor must be a vector or an n x p matrix, got shape {z.shape}")
    n, p = z.shape
    truth_dense = symmetrize(z @ z.T)
    rng = np.random.default_rng(config.seed)
    rows = []
    state = None
    truth_coeffs = _upper_coeffs(truth_dense)
    for i in range(config.steps):
        scale = 1.0
        if config.outlier_period is not None and i > 0 and i % config.outlier_period == 0:
            scale = config.outlier_scale
        if p == 1:
            measurement = generate_measurement(z[:, 0], config.noise_level, rng, scale)
        else:
            measurement = _generate_factor_measurement(z, config.noise_level, rng, scale)
        if state is None:
            state = FilterState(estimate=measurement, step_index=0)
        else:
            state = filter_step(state, measurement, config)
        meas_dense = measurement.dense()
        est_dense = state.estimate.dense()
        rows.append(TrajectoryRow(i, "truth", truth_coeffs, 0.0))
        rows.append(
            TrajectoryRow(
                i,
                "measurement",
                _upper_coeffs(meas_dense),
                float(np.linalg.norm(meas_dense - truth_dense)),
            )
        )
        rows.append(
            TrajectoryRow(
                i,
                "estimate",
                _upper_coeffs(est_dense),
                float(np.linalg.norm(est_dense - truth_dense)),
            )
        )
    return rows


def trajectory_csv(rows, n):
    """Serialize trajectory rows to CSV text, floats at 17 significant digits."""
    header = "step,kind," + ",".join(coefficient_labels(n)) + ",err_fro"
    lines = [header]
    for row in rows:
        coeffs = ",".join(f"{c:.17g}" for c in row.coeffs)
        lines.append(f"{row.step},{row.kind},{coeffs},{row.err_fro:.17g}")
    return "\n".join(lines) + "\n"


def trajectory_summary(rows):
    """Tail-averaged and peak errors of the measurement and estimate streams.

    Averages run over the last half of the steps (transient excluded); peaks
    run over all steps.
    """
    meas = [r.err_fro for r in rows if r.kind == "measurement"]
    est = [r.err_fro for r in rows if r.kind == "estimate"]
    tail = len(meas) // 2
    return {
        "steps": len(meas),
        "avg_measurement_err_tail": float(np.mean(meas[tail:])),
        "avg_estimate_err_tail": float(np.mean(est[tail:])),
        "max_measurement_err": float(np.max(meas)),
        "max_estimate_err": float(np.max(est)),
        "final_estimate_err": float(est[-1]),
    }
