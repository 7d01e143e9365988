import numpy as np
import pytest
import scipy.linalg

from rankmean.errors import (
    CutLocusError,
    DomainError,
    NotPsdError,
    OutOfBallError,
    RankDeficientError,
)
from rankmean.fixed_rank import (
    FixedRankMeanConfig,
    HorizontalTangent,
    PsdFixedRank,
    _mean_in_subspace,
    factorize,
    mean_n,
    mean_two,
    metric_inner,
    pseudo_inverse,
    verify_properties,
)
from rankmean.grassmann import chordal_mean, karcher_mean_grassmann
from rankmean.linalg import symmetrize
from rankmean.sampling import (
    clustered_fixed_rank,
    random_fixed_rank,
    random_orthogonal,
    random_spd,
    random_stiefel,
    rotate_subspace,
)
from rankmean.spd import SpdMeanConfig, ando_mean, karcher_mean_spd

from conftest import fro, subspace_gap


def line_matrix(angle, radius2=1.0, n=2):
    u = np.zeros(n)
    u[0], u[1] = np.cos(angle), np.sin(angle)
    return PsdFixedRank(u[:, None], np.array([[radius2]]))


ALM_CFG = FixedRankMeanConfig(spd_config=SpdMeanConfig(method="alm"))
KARCHER_SUB_CFG = FixedRankMeanConfig(subspace_method="karcher")


class TestFactorize:
    def test_diagonal(self):
        a = factorize(np.diag([3.0, 2.0, 0.0]), 2)
        assert subspace_gap(a.basis, np.eye(3)[:, :2]) < 1e-12
        assert fro(a.shape - np.diag([3.0, 2.0])) < 1e-12

    def test_rank_one(self):
        z = np.array([1.0, 1.0]) / np.sqrt(2.0) * 3.0
        a = factorize(np.outer(z, z), 1)
        assert abs(a.shape[0, 0] - 9.0) < 1e-12
        assert subspace_gap(a.basis, (z / np.linalg.norm(z))[:, None]) < 1e-12

    def test_round_trip(self, rng):
        for _ in range(5):
            a = random_fixed_rank(rng, 7, 3)
            b = factorize(a.dense(), 3)
            assert fro(b.dense() - a.dense()) < 1e-9

    def test_rejects_indefinite(self):
        with pytest.raises(NotPsdError):
            factorize(np.diag([1.0, -0.5]), 1)

    def test_rejects_rank_deficient(self):
        with pytest.raises(RankDeficientError):
            factorize(np.diag([1.0, 0.0, 0.0]), 2)

    def test_constructor_validates(self, rng):
        u = random_stiefel(rng, 4, 2)
        with pytest.raises(Exception):
            PsdFixedRank(u, np.diag([1.0, -1.0]))


class TestPseudoInverse:
    def test_projector_fixed_point(self, rng):
        a = PsdFixedRank(random_stiefel(rng, 5, 2), np.eye(2))
        assert fro(pseudo_inverse(a).dense() - a.dense()) < 1e-12

    def test_scalar(self):
        a = PsdFixedRank(np.eye(3)[:, :1], np.array([[4.0]]))
        assert abs(pseudo_inverse(a).shape[0, 0] - 0.25) < 1e-15

    def test_involution(self, rng):
        a = random_fixed_rank(rng, 6, 2)
        back = pseudo_inverse(pseudo_inverse(a))
        assert fro(back.dense() - a.dense()) < 1e-10

    def test_moore_penrose(self, rng):
        a = random_fixed_rank(rng, 6, 2)
        d = a.dense()
        pinv = pseudo_inverse(a).dense()
        assert fro(d @ pinv @ d - d) < 1e-9
        assert fro(pinv @ d @ pinv - pinv) < 1e-9


class TestMeanTwo:
    def test_idempotent(self, rng):
        a = random_fixed_rank(rng, 6, 2)
        assert fro(mean_two(a, a, 0.5).dense() - a.dense()) < 1e-10

    def test_endpoints(self, rng):
        a = random_fixed_rank(rng, 5, 2)
        b = PsdFixedRank(rotate_subspace(rng, a.basis, 0.4), random_spd(rng, 2))
        assert fro(mean_two(a, b, 0.0).dense() - a.dense()) < 1e-9
        assert fro(mean_two(a, b, 1.0).dense() - b.dense()) < 1e-9

    def test_common_range_reduces_to_cone_mean(self, rng):
        u = random_stiefel(rng, 6, 2)
        a = PsdFixedRank(u, random_spd(rng, 2))
        o = random_orthogonal(rng, 2)
        b = PsdFixedRank(u @ o, random_spd(rng, 2))
        m = mean_two(a, b, 0.5).dense()
        expected = u @ ando_mean(u.T @ a.dense() @ u, u.T @ b.dense() @ u) @ u.T
        assert fro(m - expected) < 1e-9

    def test_planar_bisector_rank_one(self):
        a = line_matrix(0.0, radius2=4.0)  # (2 e1)(2 e1)^T
        b = line_matrix(np.pi / 3, radius2=1.0)
        m = mean_two(a, b, 0.5)
        u = np.array([np.cos(np.pi / 6), np.sin(np.pi / 6)])
        assert fro(m.dense() - 2.0 * np.outer(u, u)) < 1e-12

    def test_rank_preserved_random_pairs(self, rng):
        for _ in range(10):
            a = random_fixed_rank(rng, 6, 2)
            b = random_fixed_rank(rng, 6, 2)
            w = np.linalg.eigvalsh(mean_two(a, b, 0.5).dense())
            assert np.sum(w > 1e-10 * w[-1]) == 2

    def test_cut_locus(self):
        with pytest.raises(CutLocusError):
            mean_two(line_matrix(0.0), line_matrix(np.pi / 2), 0.5)

    def test_alpha_domain(self, rng):
        a = random_fixed_rank(rng, 4, 1)
        with pytest.raises(DomainError):
            mean_two(a, a, -0.1)


class TestMeanN:
    def test_identical_inputs(self, rng):
        a = random_fixed_rank(rng, 6, 2)
        m = mean_n([a, a, a, a])
        assert fro(m.dense() - a.dense()) < 1e-10

    def test_projectors_give_subspace_mean(self, rng):
        mats = [
            PsdFixedRank(u, np.eye(2))
            for u in (m.basis for m in clustered_fixed_rank(rng, 7, 2, 4))
        ]
        w = chordal_mean([m.basis for m in mats])
        m = mean_n(mats)
        assert fro(m.dense() - w @ w.T) < 1e-9
        w_k = karcher_mean_grassmann([m_.basis for m_ in mats])
        m_k = mean_n(mats, KARCHER_SUB_CFG)
        assert fro(m_k.dense() - w_k @ w_k.T) < 1e-9

    def test_same_span_commuting_shapes(self, rng):
        # shapes diagonal in the same basis: eigenvalue-wise geometric mean
        u = random_stiefel(rng, 6, 2)
        mats = [
            PsdFixedRank(u, np.diag(d))
            for d in ([1.0, 1.0], [8.0, 27.0], [64.0, 8.0])
        ]
        expected = u @ np.diag([8.0, 6.0]) @ u.T
        assert fro(mean_n(mats).dense() - expected) < 1e-8
        assert fro(mean_n(mats, ALM_CFG).dense() - expected) < 1e-8

    def test_two_matrix_pipeline_matches_direct_formula(self, rng):
        for _ in range(10):
            mats = clustered_fixed_rank(rng, 6, 2, 2, subspace_radius=0.5)
            direct = mean_two(mats[0], mats[1], 0.5).dense()
            piped = mean_n(mats).dense()
            assert fro(piped - direct) < 1e-7

    def test_common_range_reduces_to_shape_mean(self, rng):
        # all inputs share a range: the dense mean equals the cone mean of
        # the shapes expressed in one fixed basis of that range
        u = random_stiefel(rng, 7, 3)
        mats = [PsdFixedRank(u, random_spd(rng, 3, 0.5)) for _ in range(4)]
        m = mean_n(mats).dense()
        expected = u @ karcher_mean_spd([u.T @ m_.dense() @ u for m_ in mats]) @ u.T
        assert fro(m - expected) < 1e-8

    def test_weights_with_alm_rejected(self, rng):
        mats = clustered_fixed_rank(rng, 5, 2, 3)
        cfg = FixedRankMeanConfig(
            spd_config=SpdMeanConfig(method="alm"), weights=(0.5, 0.3, 0.2)
        )
        with pytest.raises(DomainError):
            mean_n(mats, cfg)

    def test_weighted_two_matrix_matches_mean_two(self, rng):
        # exact through the weighted Karcher subspace mean; the weighted
        # chordal subspace only agrees to third order in the angles
        mats = clustered_fixed_rank(rng, 6, 2, 2, subspace_radius=0.4)
        cfg = FixedRankMeanConfig(weights=(0.3, 0.7), subspace_method="karcher")
        m = mean_n(mats, cfg).dense()
        direct = mean_two(mats[0], mats[1], 0.7).dense()
        assert fro(m - direct) < 1e-7
        cfg_chordal = FixedRankMeanConfig(weights=(0.3, 0.7))
        approx = mean_n(mats, cfg_chordal).dense()
        assert fro(approx - direct) < 0.05

    def test_cut_locus_error(self):
        e = np.eye(3)
        mats = [
            PsdFixedRank(e[:, :1], np.array([[1.0]])),
            PsdFixedRank(e[:, :1], np.array([[2.0]])),
            PsdFixedRank(e[:, 2:3], np.array([[1.0]])),
        ]
        with pytest.raises(CutLocusError):
            mean_n(mats)

    def test_out_of_ball_error(self):
        ang = 75.0 * np.pi / 180.0
        mats = [line_matrix(0.0, n=3), line_matrix(ang, n=3)]
        with pytest.raises(OutOfBallError):
            mean_n(mats)
        # disabling the check lets the mean through
        cfg = FixedRankMeanConfig(ball_check=False)
        m = mean_n(mats, cfg)
        assert subspace_gap(m.basis, line_matrix(ang / 2.0, n=3).basis) < 1e-9

    def test_subspace_basis_invariance(self, rng):
        # replacing the mean-subspace basis W by W O must not move the result
        mats = clustered_fixed_rank(rng, 6, 2, 3)
        w = chordal_mean([m.basis for m in mats])
        weights = np.full(3, 1.0 / 3.0)
        cfg = SpdMeanConfig()
        base = _mean_in_subspace(mats, w, weights, cfg).dense()
        for _ in range(3):
            o = random_orthogonal(rng, 2)
            rotated = _mean_in_subspace(mats, w @ o, weights, cfg).dense()
            assert fro(rotated - base) < 1e-9

    def test_representation_independence_repeated_angles(self, rng):
        # both principal angles equal: the alignment SVD is non-unique, the
        # dense mean must not depend on the representatives regardless
        theta = 0.4
        u1 = np.eye(4)[:, :2]
        u2 = np.zeros((4, 2))
        u2[0, 0] = u2[1, 1] = np.cos(theta)
        u2[2, 0] = u2[3, 1] = np.sin(theta)
        mats = [
            PsdFixedRank(u1, random_spd(rng, 2)),
            PsdFixedRank(u2, random_spd(rng, 2)),
        ]
        base = mean_n(mats).dense()
        for _ in range(5):
            rotated = [m.rotate_representative(random_orthogonal(rng, 2)) for m in mats]
            assert fro(mean_n(rotated).dense() - base) < 1e-9

    def test_full_rank_reduces_to_cone_mean(self, rng):
        # p = n: the subspace step is trivial and the pipeline is the
        # ordinary cone mean
        mats = [random_fixed_rank(rng, 3, 3, spread=0.5) for _ in range(3)]
        m = mean_n(mats).dense()
        direct = karcher_mean_spd([a.dense() for a in mats])
        assert fro(m - direct) < 1e-8


class TestMetricInner:
    def make_tangent(self, rng, base, scale=1.0):
        delta = rng.standard_normal(base.basis.shape)
        delta -= base.basis @ (base.basis.T @ delta)
        d = symmetrize(rng.standard_normal((base.p, base.p)))
        return HorizontalTangent(delta * scale, d * scale)

    def test_zero_tangents(self, rng):
        base = random_fixed_rank(rng, 5, 2)
        zero = HorizontalTangent(np.zeros((5, 2)), np.zeros((2, 2)))
        assert metric_inner(base, zero, zero, 1.0) == 0.0

    def test_identity_shape_block(self, rng):
        base = PsdFixedRank(random_stiefel(rng, 5, 2), np.eye(2))
        v = HorizontalTangent(np.zeros((5, 2)), np.eye(2))
        assert abs(metric_inner(base, v, v, 1.0) - 2.0) < 1e-12

    def test_subspace_block_only(self, rng):
        base = random_fixed_rank(rng, 6, 2)
        delta = rng.standard_normal((6, 2))
        delta -= base.basis @ (base.basis.T @ delta)
        delta /= np.linalg.norm(delta)
        v = HorizontalTangent(delta, np.zeros((2, 2)))
        assert abs(metric_inner(base, v, v, 3.7) - 1.0) < 1e-12

    def test_symmetric_bilinear_positive(self, rng):
        base = random_fixed_rank(rng, 6, 2)
        v1 = self.make_tangent(rng, base)
        v2 = self.make_tangent(rng, base)
        k = 2.5
        g12 = metric_inner(base, v1, v2, k)
        g21 = metric_inner(base, v2, v1, k)
        assert abs(g12 - g21) < 1e-10
        combo = HorizontalTangent(
            2.0 * v1.delta + 3.0 * v2.delta, 2.0 * v1.d_shape + 3.0 * v2.d_shape
        )
        lhs = metric_inner(base, combo, v2, k)
        rhs = 2.0 * g12 + 3.0 * metric_inner(base, v2, v2, k)
        assert abs(lhs - rhs) < 1e-9 * max(abs(rhs), 1.0)
        assert metric_inner(base, v1, v1, k) > 0.0

    def test_ambient_rotation_invariance(self, rng):
        base = random_fixed_rank(rng, 6, 2)
        v1 = self.make_tangent(rng, base)
        v2 = self.make_tangent(rng, base)
        q = random_orthogonal(rng, 6)
        base_r = PsdFixedRank(q @ base.basis, base.shape, check=False)
        v1_r = HorizontalTangent(q @ v1.delta, v1.d_shape)
        v2_r = HorizontalTangent(q @ v2.delta, v2.d_shape)
        assert abs(
            metric_inner(base, v1, v2, 1.5) - metric_inner(base_r, v1_r, v2_r, 1.5)
        ) < 1e-10

    def test_rejects_non_horizontal(self, rng):
        base = random_fixed_rank(rng, 5, 2)
        bad = HorizontalTangent(base.basis.copy(), np.zeros((2, 2)))
        with pytest.raises(DomainError):
            metric_inner(base, bad, bad, 1.0)

    def test_rejects_asymmetric_shape_part(self, rng):
        with pytest.raises(Exception):
            HorizontalTangent(np.zeros((4, 2)), np.array([[0.0, 1.0], [0.0, 0.0]]))


class TestProperties:
    def test_random_triples_all_pass(self, rng):
        for trial in range(5):
            mats = clustered_fixed_rank(rng, 6, 2, 3)
            report = verify_properties(mats, rng=np.random.default_rng(trial))
            failures = report.failures()
            assert not failures, [f.name for f in failures]

    def test_commuting_check_applicable_and_passing(self, rng):
        u = random_stiefel(rng, 5, 2)
        q = random_orthogonal(rng, 2)
        mats = [
            PsdFixedRank(u, symmetrize(q @ np.diag(d) @ q.T))
            for d in ([1.0, 2.0], [4.0, 3.0], [2.0, 8.0])
        ]
        report = verify_properties(mats, rng=np.random.default_rng(0))
        by_name = {c.name: c for c in report.checks}
        assert by_name["commuting-consistency"].applicable
        assert by_name["commuting-consistency"].passed

    def test_monotonicity_with_alm_same_span(self, rng):
        u = random_stiefel(rng, 5, 2)
        mats = [PsdFixedRank(u, random_spd(rng, 2, 0.4)) for _ in range(3)]
        report = verify_properties(mats, ALM_CFG, rng=np.random.default_rng(1))
        by_name = {c.name: c for c in report.checks}
        assert by_name["monotonicity"].applicable
        assert by_name["monotonicity"].passed
        assert report.all_passed

    def test_decreasing_limit_decays(self, rng):
        # the response to a +I/k bump of every input decays like 1/k
        mats = clustered_fixed_rank(rng, 6, 2, 3)
        base = mean_n(mats).dense()

        def bumped_error(k):
            bumped = [
                PsdFixedRank(m.basis, symmetrize(m.shape + np.eye(2) / k))
                for m in mats
            ]
            return fro(mean_n(bumped).dense() - base)

        err_small, err_large = bumped_error(1e2), bumped_error(1e4)
        assert err_large <= 2.0 * err_small / 100.0
        assert err_large < 3.0 * np.sqrt(2.0) * 1e-4


class TestRangeIntersection:
    def test_two_matrix_block_shapes(self):
        # spans share exactly one direction (e1), which is an eigendirection
        # of both inputs; on that intersection the mean must reduce to the
        # scalar geometric mean of the restrictions
        e = np.eye(4)
        a1, b1 = 3.0, 1.5
        a2, b2 = 12.0, 0.5
        f1 = e[:, 1]
        f2 = (e[:, 1] + e[:, 2]) / np.sqrt(2.0)
        u1 = np.column_stack([e[:, 0], f1])
        u2 = np.column_stack([e[:, 0], f2])
        m1 = PsdFixedRank(u1, np.diag([a1, b1]))
        m2 = PsdFixedRank(u2, np.diag([a2, b2]))
        mean = mean_two(m1, m2, 0.5).dense()
        restriction = e[:, 0] @ mean @ e[:, 0]
        assert abs(restriction - np.sqrt(a1 * a2)) < 1e-6


class TestRobustnessToSmallRotations:
    def test_linear_decay(self, rng):
        for _ in range(5):
            a = random_fixed_rank(rng, 6, 2)
            k = rng.standard_normal((6, 6))
            k = k - k.T
            k /= np.linalg.norm(k)

            def deviation(eps):
                r = scipy.linalg.expm(eps * k)
                rotated = PsdFixedRank(r @ a.basis, a.shape, check=False)
                return fro(mean_two(a, rotated, 0.5).dense() - a.dense())

            assert deviation(1e-3) <= 2.0 * deviation(1e-2) / 10.0
