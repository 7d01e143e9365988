"""Compiled kernel against the pure NumPy pipeline: same results, same errors."""

import numpy as np
import pytest

from rankmean import _backend
from rankmean.errors import (
    AmbiguousSubspaceError,
    ConvergenceError,
    CutLocusError,
    OutOfBallError,
)
from rankmean.fixed_rank import FixedRankMeanConfig, PsdFixedRank, mean_n
from rankmean.sampling import clustered_fixed_rank
from rankmean.spd import SpdMeanConfig

from conftest import fro

pytestmark = pytest.mark.skipif(
    not _backend.compiled_available(), reason="compiled kernel not built"
)


@pytest.fixture
def both_backends():
    def run(fn):
        previous = _backend.set_backend("compiled")
        try:
            compiled = fn()
        finally:
            _backend.set_backend(previous)
        previous = _backend.set_backend("python")
        try:
            python = fn()
        finally:
            _backend.set_backend(previous)
        return compiled, python

    return run


@pytest.mark.parametrize(
    "n,p,count",
    [(6, 2, 3), (20, 3, 5), (8, 2, 10), (50, 5, 10), (4, 4, 3)],
)
def test_dense_agreement(rng, both_backends, n, p, count):
    # (8, 2, 10) makes the stacked basis wide (N p > n), (4, 4, 3) is full rank
    mats = clustered_fixed_rank(rng, n, p, count)
    compiled, python = both_backends(lambda: mean_n(mats))
    assert fro(compiled.dense() - python.dense()) < 1e-10
    assert fro(compiled.basis - python.basis) < 1e-8


def test_weighted_agreement(rng, both_backends):
    mats = clustered_fixed_rank(rng, 12, 2, 4)
    cfg = FixedRankMeanConfig(weights=(0.4, 0.3, 0.2, 0.1))
    compiled, python = both_backends(lambda: mean_n(mats, cfg))
    assert fro(compiled.dense() - python.dense()) < 1e-10


def test_iteration_counts_match(rng, both_backends):
    mats = clustered_fixed_rank(rng, 10, 3, 4)

    def run():
        d = {}
        mean_n(mats, diagnostics=d)
        return d

    compiled, python = both_backends(run)
    assert compiled["backend"] == "compiled"
    assert python["backend"] == "python"
    assert abs(compiled["iterations"] - python["iterations"]) <= 1


def line_matrix(angle, n=3):
    u = np.zeros(n)
    u[0], u[1] = np.cos(angle), np.sin(angle)
    return PsdFixedRank(u[:, None], np.array([[1.0]]))


def test_cut_locus_parity(both_backends):
    e = np.eye(3)
    mats = [
        PsdFixedRank(e[:, :1], np.array([[1.0]])),
        PsdFixedRank(e[:, :1], np.array([[2.0]])),
        PsdFixedRank(e[:, 2:3], np.array([[1.0]])),
    ]

    def run():
        with pytest.raises(CutLocusError):
            mean_n(mats)
        return True

    both_backends(run)


def test_ambiguous_parity(both_backends):
    mats = [line_matrix(0.0), line_matrix(np.pi / 2)]

    def run():
        with pytest.raises(AmbiguousSubspaceError):
            mean_n(mats)
        return True

    both_backends(run)


def test_out_of_ball_parity(both_backends):
    mats = [line_matrix(0.0), line_matrix(75.0 * np.pi / 180.0)]

    def run():
        with pytest.raises(OutOfBallError):
            mean_n(mats)
        return True

    both_backends(run)


def test_non_convergence_parity(rng, both_backends):
    mats = clustered_fixed_rank(rng, 8, 2, 4, shape_spread=1.5)
    cfg = FixedRankMeanConfig(
        spd_config=SpdMeanConfig(max_iterations=1, tolerance=1e-15)
    )

    def run():
        with pytest.raises(ConvergenceError) as err:
            mean_n(mats, cfg)
        return err.value.residual

    compiled, python = both_backends(run)
    assert compiled > 0.0 and python > 0.0


def test_compiled_deterministic(rng):
    mats = clustered_fixed_rank(rng, 30, 4, 6)
    previous = _backend.set_backend("compiled")
    try:
        a = mean_n(mats)
        b = mean_n(mats)
    finally:
        _backend.set_backend(previous)
    assert np.array_equal(a.basis, b.basis)
    assert np.array_equal(a.shape, b.shape)
