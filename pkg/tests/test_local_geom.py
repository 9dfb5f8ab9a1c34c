import numpy as np
import pytest

from infocoupling import (
    Channel,
    DimensionMismatch,
    Perturbation,
    ProbDist,
    ScaledPerturbation,
    SingularOutput,
    ZeroPerturbation,
    build_dtm,
    exact_mutual_information,
    local_capacity,
    push_forward,
    scale,
    strong_dpi_ratio,
    svd,
    verify_divergence_symmetry,
    verify_quadratic_approx,
)

from conftest import random_channel, random_direction, random_dist


def build_bsc(p=0.1):
    px = ProbDist(np.array([0.5, 0.5]))
    ch = Channel(np.array([[1 - p, p], [p, 1 - p]]))
    return build_dtm(ch, px)


class TestBuildDtm:
    def test_bsc_weights_cancel(self):
        d = build_bsc(0.1)
        assert np.allclose(d.matrix, [[0.9, 0.1], [0.1, 0.9]], atol=1e-15)

    def test_identity_channel_orthogonal(self):
        px = ProbDist(np.array([0.3, 0.7]))
        d = build_dtm(Channel(np.eye(2)), px)
        svals = svd(d).singular_values
        assert np.allclose(svals, [1.0, 1.0], atol=1e-12)

    def test_asymmetric_example(self):
        px = ProbDist(np.array([0.5, 0.5]))
        d = build_dtm(Channel(np.array([[1.0, 0.5], [0.0, 0.5]])), px)
        expected = np.array([[0.8164966, 0.4082483], [0.0, 0.7071068]])
        assert np.allclose(d.matrix, expected, atol=1e-7)
        assert svd(d).singular_values[0] == pytest.approx(1.0, abs=1e-12)

    def test_singular_output(self):
        ch = Channel(np.array([[1.0, 1.0], [0.0, 0.0]]))
        with pytest.raises(SingularOutput):
            build_dtm(ch, ProbDist(np.array([0.5, 0.5])))

    def test_dimension_mismatch(self):
        ch = Channel(np.eye(3))
        with pytest.raises(DimensionMismatch):
            build_dtm(ch, ProbDist(np.array([0.5, 0.5])))


class TestSvd:
    def test_bsc_values(self):
        svals = svd(build_bsc(0.1)).singular_values
        assert np.allclose(svals, [1.0, 0.8], atol=1e-12)

    def test_useless_bsc(self):
        svals = svd(build_bsc(0.5)).singular_values
        assert svals[1] == pytest.approx(0.0, abs=1e-12)

    def test_sign_convention_deterministic(self, rng):
        px = random_dist(rng, 4)
        ch = random_channel(rng, 4, 4)
        d = build_dtm(ch, px)
        s = svd(d)
        for j in range(4):
            col = s.right_vectors[:, j]
            assert col[int(np.argmax(np.abs(col)))] > 0

    def test_reconstruction(self, rng):
        for _ in range(20):
            nx, ny = int(rng.integers(2, 6)), int(rng.integers(2, 6))
            d = build_dtm(random_channel(rng, ny, nx), random_dist(rng, nx))
            s = svd(d)
            assert np.linalg.norm(s.reconstruct() - d.matrix) <= 1e-9

    def test_orthonormal_bases(self, rng):
        d = build_dtm(random_channel(rng, 3, 5), random_dist(rng, 5))
        s = svd(d)
        rv, lv = s.right_vectors, s.left_vectors
        assert np.max(np.abs(rv.T @ rv - np.eye(rv.shape[1]))) <= 1e-10
        assert np.max(np.abs(lv.T @ lv - np.eye(lv.shape[1]))) <= 1e-10

    def test_top_structure_random(self, rng):
        # Top singular value 1 and top right vector = sqrt(px), up to sign.
        for _ in range(100):
            nx, ny = int(rng.integers(2, 7)), int(rng.integers(2, 7))
            px = random_dist(rng, nx)
            d = build_dtm(random_channel(rng, ny, nx), px)
            s = svd(d)
            assert abs(s.singular_values[0] - 1.0) <= 1e-9
            top = s.right_vectors[:, 0]
            assert min(
                np.linalg.norm(top - px.sqrt()), np.linalg.norm(top + px.sqrt())
            ) <= 1e-9


class TestLocalCapacity:
    def test_bsc(self):
        cap = local_capacity(build_bsc(0.1))
        assert cap.sigma == pytest.approx(0.8, abs=1e-12)
        assert cap.multiplicity == 1
        assert not cap.locally_useless
        v = cap.direction.vec
        assert np.allclose(np.abs(v), [np.sqrt(0.5)] * 2, atol=1e-12)

    def test_perfect_channel(self):
        cap = local_capacity(build_bsc(0.0))
        assert cap.sigma == pytest.approx(1.0, abs=1e-12)

    def test_ternary_symmetric_multiplicity(self):
        px = ProbDist(np.full(3, 1 / 3))
        w = np.full((3, 3), 0.1) + 0.7 * np.eye(3)
        cap = local_capacity(build_dtm(Channel(w), px))
        assert cap.sigma == pytest.approx(0.7, abs=1e-12)
        assert cap.multiplicity == 2

    def test_useless_channel_flagged(self):
        cap = local_capacity(build_bsc(0.5))
        assert cap.sigma == 0.0
        assert cap.locally_useless

    def test_direction_is_valid_perturbation(self, rng):
        px = random_dist(rng, 5)
        d = build_dtm(random_channel(rng, 4, 5), px)
        cap = local_capacity(d)
        assert abs(float(cap.direction.vec @ px.sqrt())) <= 1e-10


class TestQuadraticApprox:
    def test_symmetric_binary_table(self):
        p = ProbDist(np.array([0.5, 0.5]))
        table = verify_quadratic_approx(p, [0.5, -0.5], [0.1, 0.05, 0.025, 0.0125])
        r = table.rows[0]
        # Frozen oracle: direct evaluation of the divergence sum.
        assert r.exact == pytest.approx(0.005025167926750721, abs=1e-14)
        assert r.quadratic == pytest.approx(0.005, abs=1e-15)
        assert r.residual == pytest.approx(2.5167926750721e-05, abs=1e-13)
        assert table.passed
        assert all(ratio <= 0.3 for ratio in table.ratios)

    def test_zero_eps_row(self):
        p = ProbDist(np.array([0.5, 0.5]))
        table = verify_quadratic_approx(p, [0.5, -0.5], [0.0])
        assert table.rows[0] == type(table.rows[0])(0.0, 0.0, 0.0, 0.0)

    def test_asymmetric_decay(self):
        p = ProbDist(np.array([0.7, 0.3]))
        table = verify_quadratic_approx(p, [0.3, -0.3], [0.1, 0.05, 0.025, 0.0125])
        assert table.rows[0].exact == pytest.approx(0.002233215328025392, abs=1e-14)
        assert table.passed
        # third-order decay: ratios sit near 1/8
        assert all(0.05 <= ratio <= 0.3 for ratio in table.ratios)

    def test_invalid_epsilon(self):
        from infocoupling import InvalidEpsilon

        p = ProbDist(np.array([0.9, 0.1]))
        with pytest.raises(InvalidEpsilon):
            verify_quadratic_approx(p, [0.5, -0.5], [0.5])

    def test_random_pairs_decay(self, rng):
        # Locally small perturbations (|J| <= 0.1 min p), where the cubic
        # term dominates the residual throughout the sweep.
        for _ in range(50):
            n = int(rng.integers(2, 6))
            p = random_dist(rng, n)
            j = random_direction(rng, p, margin=0.1)
            table = verify_quadratic_approx(p, j, [0.1, 0.05, 0.025, 0.0125])
            assert table.passed


class TestDivergenceSymmetry:
    def test_symmetric_case_fourth_order(self):
        # Symmetric P with antisymmetric J kills every odd term of the gap,
        # but the even eps^4 * sum(J^4/P^3)/6 term survives; frozen oracle
        # values from high-precision evaluation.
        p = ProbDist(np.array([0.5, 0.5]))
        table = verify_divergence_symmetry(p, [0.3, -0.3], [0.1, 0.05])
        assert table.rows[0].residual == pytest.approx(2.16623884979885e-06, abs=1e-15)
        assert table.rows[1].residual == pytest.approx(1.35097270348957e-07, abs=1e-15)
        assert table.passed
        assert table.ratios[0] == pytest.approx(1.0 / 16.0, rel=0.01)

    def test_asymmetric_gap_value(self):
        p = ProbDist(np.array([0.7, 0.3]))
        table = verify_divergence_symmetry(p, [0.3, -0.3], [0.05, 0.025, 0.0125])
        # Frozen oracle: |D(P||Q) - D(Q||P)| at eps=0.05.
        assert table.rows[0].residual == pytest.approx(5.453391113843e-06, abs=1e-15)
        assert table.passed
        assert all(ratio <= 0.3 for ratio in table.ratios)

    def test_zero_eps(self):
        p = ProbDist(np.array([0.7, 0.3]))
        table = verify_divergence_symmetry(p, [0.3, -0.3], [0.0])
        assert table.rows[0].residual == 0.0


class TestStrongDpi:
    def test_bsc_value(self):
        d = build_bsc(0.1)
        l = ScaledPerturbation(d.input_dist, np.array([1.0, -1.0]) / np.sqrt(2))
        assert strong_dpi_ratio(d, l) == pytest.approx(0.64, abs=1e-12)

    def test_equality_along_second_vector(self, rng):
        d = build_dtm(random_channel(rng, 4, 4), random_dist(rng, 4))
        cap = local_capacity(d)
        got = strong_dpi_ratio(d, cap.direction)
        assert got == pytest.approx(cap.efficiency, abs=1e-10)

    def test_zero_perturbation(self):
        d = build_bsc(0.1)
        with pytest.raises(ZeroPerturbation):
            strong_dpi_ratio(d, ScaledPerturbation(d.input_dist, np.zeros(2)))

    def test_random_directions_bounded(self, rng):
        d = build_dtm(random_channel(rng, 5, 4), random_dist(rng, 4))
        cap = local_capacity(d)
        bound = cap.efficiency + 1e-9
        root = d.input_dist.sqrt()
        for _ in range(1000):
            v = rng.standard_normal(4)
            v -= (v @ root) * root
            if np.linalg.norm(v) < 1e-12:
                continue
            l = ScaledPerturbation(d.input_dist, v)
            assert strong_dpi_ratio(d, l) <= bound

    def test_exact_information_counterpart(self, rng):
        # Exact I(U;Y) <= sigma^2 I(U;X) (1 + 10 eps) for the binary ensemble
        # along the second singular direction.
        d = build_bsc(0.1)
        cap = local_capacity(d)
        j = cap.direction.vec * d.input_dist.sqrt()
        for eps in (0.1, 0.05, 0.025):
            conds = [
                Perturbation(d.input_dist, sgn * j, eps).perturbed()
                for sgn in (+1.0, -1.0)
            ]
            ix = exact_mutual_information([0.5, 0.5], conds)
            pushed = [push_forward(d.channel, c) for c in conds]
            iy = exact_mutual_information([0.5, 0.5], pushed)
            assert iy <= cap.efficiency * ix * (1.0 + 10.0 * eps)
