import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infocoupling import (
    DimensionMismatch,
    InvalidEpsilon,
    NonPositiveEntry,
    NotNormalized,
    Perturbation,
    ProbDist,
    ScaledPerturbation,
    exact_mutual_information,
    kl_divergence,
    push_forward,
    scale,
    unscale,
    validate_dist,
    weighted_inner_product,
)
from infocoupling.prob_core import Channel

from conftest import random_dist, random_direction


# Frozen oracle values: direct high-precision evaluation of the defining sums.
KL_HALF_VS_3Q = 0.14384103622589046
KL_55_VS_HALF = 0.005008366846356848


def dist(*vals):
    return ProbDist(np.array(vals))


class TestValidateDist:
    def test_uniform_binary(self):
        d = validate_dist([0.5, 0.5])
        assert d.alphabet_size == 2

    def test_zero_entry_rejected(self):
        with pytest.raises(NonPositiveEntry):
            validate_dist([0.5, 0.5, 0.0])

    def test_not_normalized_rejected(self):
        with pytest.raises(NotNormalized):
            validate_dist([0.3, 0.3, 0.3])

    def test_never_renormalizes(self):
        d = validate_dist([0.25, 0.25, 0.25, 0.25 + 5e-10])
        assert d.probs[3] == 0.25 + 5e-10

    def test_empty_rejected(self):
        with pytest.raises(DimensionMismatch):
            validate_dist([])


class TestChannel:
    def test_column_stochastic_ok(self):
        ch = Channel(np.array([[1.0, 0.5], [0.0, 0.5]]))
        assert ch.input_size == 2 and ch.output_size == 2

    def test_bad_column_sum(self):
        with pytest.raises(NotNormalized):
            Channel(np.array([[0.9, 0.2], [0.2, 0.8]]))

    def test_negative_entry(self):
        with pytest.raises(NonPositiveEntry):
            Channel(np.array([[1.1, 0.5], [-0.1, 0.5]]))


class TestKlDivergence:
    def test_identity_is_zero(self):
        p = dist(0.2, 0.3, 0.5)
        assert kl_divergence(p, p) == 0.0

    def test_half_vs_three_quarters(self):
        assert kl_divergence(dist(0.5, 0.5), dist(0.75, 0.25)) == pytest.approx(
            KL_HALF_VS_3Q, abs=1e-12
        )

    def test_55_vs_half(self):
        assert kl_divergence(dist(0.55, 0.45), dist(0.5, 0.5)) == pytest.approx(
            KL_55_VS_HALF, abs=1e-12
        )

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            kl_divergence(dist(0.5, 0.5), dist(0.3, 0.3, 0.4))

    def test_nonnegative_random(self, rng):
        for _ in range(200):
            n = int(rng.integers(2, 7))
            p, q = random_dist(rng, n), random_dist(rng, n)
            assert kl_divergence(p, q) >= 0.0

    def test_zero_iff_equal(self, rng):
        for _ in range(50):
            p = random_dist(rng, 4)
            q = random_dist(rng, 4)
            if kl_divergence(p, q) == 0.0:
                assert np.allclose(p.probs, q.probs, atol=1e-12)


class TestPushForward:
    def test_identity_channel(self):
        p = dist(0.2, 0.8)
        out = push_forward(Channel(np.eye(2)), p)
        assert np.allclose(out.probs, p.probs)

    def test_bsc_symmetry(self, bsc):
        px, ch = bsc
        assert np.allclose(push_forward(ch, px).probs, [0.5, 0.5])

    def test_matrix_vector(self):
        ch = Channel(np.array([[1.0, 0.5], [0.0, 0.5]]))
        out = push_forward(ch, dist(0.5, 0.5))
        assert np.allclose(out.probs, [0.75, 0.25], atol=1e-15)

    def test_zero_output_rejected(self):
        ch = Channel(np.array([[1.0, 1.0], [0.0, 0.0]]))
        with pytest.raises(NonPositiveEntry):
            push_forward(ch, dist(0.5, 0.5))

    def test_mass_preserved_random(self, rng):
        from conftest import random_channel

        for _ in range(100):
            nx, ny = int(rng.integers(2, 6)), int(rng.integers(2, 6))
            out = push_forward(random_channel(rng, ny, nx), random_dist(rng, nx))
            assert abs(float(out.probs.sum()) - 1.0) <= 1e-12


class TestExactMutualInformation:
    def test_equal_conditionals_zero(self):
        c = dist(0.3, 0.7)
        assert exact_mutual_information([0.5, 0.5], [c, c]) == 0.0

    def test_binary_example(self):
        got = exact_mutual_information(
            [0.5, 0.5], [dist(0.55, 0.45), dist(0.45, 0.55)]
        )
        assert got == pytest.approx(KL_55_VS_HALF, abs=1e-12)

    def test_degenerate_u(self):
        assert exact_mutual_information([1.0], [dist(0.3, 0.7)]) == 0.0

    def test_label_permutation_invariant(self, rng):
        weights = np.array([0.2, 0.5, 0.3])
        conds = [random_dist(rng, 4) for _ in range(3)]
        base = exact_mutual_information(weights, conds)
        perm = [2, 0, 1]
        swapped = exact_mutual_information(weights[perm], [conds[i] for i in perm])
        assert swapped == pytest.approx(base, abs=1e-14)


class TestWeightedInnerProduct:
    def test_squared_norm(self):
        p = dist(0.5, 0.5)
        assert weighted_inner_product([0.5, -0.5], [0.5, -0.5], p) == pytest.approx(
            1.0, abs=1e-15
        )

    def test_orthogonal_by_construction(self, rng):
        p = random_dist(rng, 4)
        j1 = random_direction(rng, p)
        j2 = rng.standard_normal(4)
        j2 -= j2.mean()
        # Gram-Schmidt in the weighted geometry
        j2 = j2 - (weighted_inner_product(j1, j2, p) /
                   weighted_inner_product(j1, j1, p)) * j1
        assert weighted_inner_product(j1, j2, p) == pytest.approx(0.0, abs=1e-12)

    def test_zero_vector(self):
        p = dist(0.5, 0.5)
        assert weighted_inner_product([0.3, -0.3], [0.0, 0.0], p) == 0.0


class TestScaleUnscale:
    def test_example(self):
        p = dist(0.5, 0.5)
        l = scale(Perturbation(p, np.array([0.5, -0.5]), 0.1))
        assert np.allclose(l.vec, [0.70710678, -0.70710678], atol=1e-8)

    def test_zero(self):
        p = dist(0.5, 0.5)
        l = scale(Perturbation(p, np.zeros(2), 0.1))
        assert np.all(l.vec == 0.0)

    def test_round_trip_random(self, rng):
        for _ in range(100):
            p = random_dist(rng, 5)
            j = random_direction(rng, p)
            back = unscale(scale(Perturbation(p, j, 0.05)))
            assert np.max(np.abs(back - j)) <= 1e-12

    @settings(max_examples=50, deadline=None)
    @given(data=st.data())
    def test_norm_equivalence(self, data):
        n = data.draw(st.integers(2, 6))
        seed = data.draw(st.integers(0, 2**31))
        rng = np.random.default_rng(seed)
        p = random_dist(rng, n)
        j = random_direction(rng, p)
        weighted = weighted_inner_product(j, j, p)
        euclid = float(np.sum(scale(Perturbation(p, j, 0.1)).vec ** 2))
        assert weighted == pytest.approx(euclid, rel=1e-12, abs=1e-12)


class TestPerturbationValidity:
    def test_nonzero_sum_rejected(self):
        with pytest.raises(NotNormalized):
            Perturbation(dist(0.5, 0.5), np.array([0.5, -0.4]), 0.1)

    def test_off_simplex_rejected(self):
        with pytest.raises(InvalidEpsilon):
            Perturbation(dist(0.9, 0.1), np.array([0.5, -0.5]), 0.5)

    def test_scaled_orthogonality_enforced(self):
        with pytest.raises(NotNormalized):
            ScaledPerturbation(dist(0.5, 0.5), np.array([1.0, 0.0]))
