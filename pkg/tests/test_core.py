import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from distdetect.core import (
    BeliefError,
    DegenerateSupportError,
    DimensionError,
    SignalModel,
    StateSpace,
    UnknownSignalError,
    bayes_update,
    geometric_mix,
    kl_divergence,
    linear_mix,
    posterior_objective,
    simplex_grid,
    solve_posterior_bruteforce,
)

from conftest import random_belief, random_model

THIRD = np.full(3, 1 / 3)
UNIFORM = SignalModel(("s1", "s2"), [[0.5, 0.5]] * 3)


def beliefs(m):
    """Hypothesis strategy for beliefs with strictly positive entries."""
    return arrays(float, m, elements=st.floats(0.01, 1.0)).map(lambda x: x / x.sum())


class TestTypes:
    def test_state_space(self):
        s = StateSpace(["a", "b", "c"], 2)
        assert s.m == 3 and s.true_label == "c"
        with pytest.raises(BeliefError):
            StateSpace(["a"], 0)
        with pytest.raises(BeliefError):
            StateSpace(["a", "a"], 0)
        with pytest.raises(BeliefError):
            StateSpace(["a", "b"], 2)

    def test_signal_model_validation(self):
        with pytest.raises(BeliefError):
            SignalModel(("s1", "s2"), [[1.0, 0.0], [0.5, 0.5]])
        with pytest.raises(BeliefError):
            SignalModel(("s1", "s2"), [[0.6, 0.6], [0.5, 0.5]])
        with pytest.raises(DimensionError):
            SignalModel(("s1", "s2", "s3"), [[0.5, 0.5]])
        SignalModel(("s1", "s2"), [[1.0, 0.0], [0.5, 0.5]], allow_zero=True)

    def test_signal_model_is_immutable(self, type1):
        with pytest.raises(ValueError):
            type1.likelihood[0, 0] = 0.3


class TestBayesUpdate:
    def test_uniform_prior_type1_s1(self, type1):
        # exact rational evaluation of prior * likelihood / evidence
        lik = [Fraction(8, 10), Fraction(5, 10), Fraction(8, 10)]
        unnorm = [Fraction(1, 3) * x for x in lik]
        expected = [float(u / sum(unnorm)) for u in unnorm]
        assert expected == pytest.approx([8 / 21, 5 / 21, 8 / 21], abs=1e-15)
        np.testing.assert_allclose(bayes_update(THIRD, "s1", type1), expected, atol=1e-15)

    def test_degenerate_prior_is_fixed(self, type1, type2):
        for model in (type1, type2):
            for s in ("s1", "s2"):
                np.testing.assert_array_equal(bayes_update([0, 0, 1], s, model), [0, 0, 1])

    def test_uninformative_signal(self):
        p = np.array([0.2, 0.3, 0.5])
        np.testing.assert_allclose(bayes_update(p, "s2", UNIFORM), p, atol=1e-15)

    def test_errors(self, type1):
        with pytest.raises(UnknownSignalError):
            bayes_update(THIRD, "s3", type1)
        with pytest.raises(DimensionError):
            bayes_update([0.5, 0.5], "s1", type1)
        zero_lik = SignalModel(("s1", "s2"), [[1.0, 0.0], [0.0, 1.0]], allow_zero=True)
        with pytest.raises(DegenerateSupportError):
            bayes_update([1.0, 0.0], "s2", zero_lik)

    @given(p=beliefs(3), s=st.sampled_from(["s1", "s2"]))
    def test_output_normalized(self, p, s):
        from distdetect.scenarios import TYPE2
        out = bayes_update(p, s, TYPE2)
        assert np.all(out >= 0)
        assert abs(out.sum() - 1) <= 1e-12


class TestKL:
    def test_identity(self):
        assert kl_divergence([0.3, 0.7], [0.3, 0.7]) == 0

    def test_point_mass_vs_uniform(self):
        assert kl_divergence([1, 0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-15)

    def test_type2_theta1_vs_theta3(self):
        # 0.2 ln(0.2/0.8) + 0.8 ln(0.8/0.2) = 0.6 ln 4
        expected = 0.2 * math.log(0.25) + 0.8 * math.log(4)
        assert expected == pytest.approx(0.6 * math.log(4), abs=1e-15)
        assert kl_divergence([0.2, 0.8], [0.8, 0.2]) == pytest.approx(0.831777, abs=1e-6)
        assert kl_divergence([0.2, 0.8], [0.8, 0.2]) == pytest.approx(expected, abs=1e-15)

    def test_infinite_off_support(self):
        assert kl_divergence([0.5, 0.5], [1, 0]) == math.inf

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            kl_divergence([0.5, 0.5], THIRD)

    @given(p=beliefs(4), q=beliefs(4))
    def test_nonnegative(self, p, q):
        assert kl_divergence(p, q) >= 0
        assert kl_divergence(p, p) == 0


class TestObjective:
    def test_uniform_case(self):
        assert posterior_objective(THIRD, THIRD, "s1", UNIFORM) == pytest.approx(math.log(2), abs=1e-15)

    def test_infinite_when_candidate_leaves_prior_support(self, type1):
        assert posterior_objective([1, 0, 0], [0, 0.5, 0.5], "s1", type1) == math.inf

    def test_bayes_posterior_beats_every_grid_point(self, type1):
        post = bayes_update(THIRD, "s1", type1)
        best = posterior_objective(post, THIRD, "s1", type1)
        grid = simplex_grid(3, 0.05)
        vals = [posterior_objective(g, THIRD, "s1", type1) for g in grid]
        assert best <= min(vals) + 1e-15


class TestBruteForce:
    def test_grid_size_and_order(self):
        g = simplex_grid(3, 0.1)
        assert len(g) == 66
        np.testing.assert_allclose(g.sum(axis=1), 1)
        ints = [tuple(np.rint(r * 10).astype(int)) for r in g]
        assert ints == sorted(ints)

    def test_type1_s1(self, type1):
        analytic = bayes_update(THIRD, "s1", type1)
        found = solve_posterior_bruteforce(THIRD, "s1", type1, 0.01)
        assert np.abs(found - analytic).sum() <= 0.02
        gap = posterior_objective(found, THIRD, "s1", type1) - posterior_objective(analytic, THIRD, "s1", type1)
        assert 0 <= gap <= 0.01

    def test_degenerate_prior(self, type1):
        np.testing.assert_array_equal(solve_posterior_bruteforce([0, 0, 1], "s2", type1, 0.01), [0, 0, 1])

    def test_uniform_likelihood_returns_prior_grid_point(self):
        prior = np.array([0.2, 0.3, 0.5])
        np.testing.assert_allclose(solve_posterior_bruteforce(prior, "s1", UNIFORM, 0.01), prior, atol=1e-12)

    def test_limits(self, type1):
        with pytest.raises(BeliefError):
            solve_posterior_bruteforce(THIRD, "s1", type1, 0.2)
        big = SignalModel(("s1", "s2"), [[0.5, 0.5]] * 5)
        with pytest.raises(BeliefError):
            solve_posterior_bruteforce(np.full(5, 0.2), "s1", big, 0.1)
        with pytest.raises(BeliefError):
            simplex_grid(3, 0.03)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_variational_characterization(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(2, 4))
        model = random_model(rng, m)
        prior = random_belief(rng, m)
        post = bayes_update(prior, "s0", model)
        found = solve_posterior_bruteforce(prior, "s0", model, 0.01)
        gap = posterior_objective(found, prior, "s0", model) - posterior_objective(post, prior, "s0", model)
        assert -1e-12 <= gap <= 1e-2


class TestLinearMix:
    def test_identity(self):
        np.testing.assert_allclose(linear_mix([[0.2, 0.8]], [1.0]), [0.2, 0.8])

    def test_symmetric(self):
        np.testing.assert_allclose(linear_mix([[1, 0], [0, 1]], [0.5, 0.5]), [0.5, 0.5])

    def test_hand_value(self):
        # 0.25*0.8 + 0.75*0.4 = 0.5
        np.testing.assert_allclose(linear_mix([[0.8, 0.2], [0.4, 0.6]], [0.25, 0.75]), [0.5, 0.5], atol=1e-15)

    def test_errors(self):
        with pytest.raises(DimensionError):
            linear_mix([[0.5, 0.5]], [0.5, 0.5])
        with pytest.raises(BeliefError):
            linear_mix([[0.5, 0.5], [0.5, 0.5]], [0.5, 0.6])
        with pytest.raises(BeliefError):
            linear_mix([], [])


class TestGeometricMix:
    def test_equal_beliefs(self):
        p = [0.1, 0.6, 0.3]
        np.testing.assert_allclose(geometric_mix([p, p, p], [0.2, 0.5, 0.3]), p, atol=1e-15)

    def test_hand_value(self):
        # sqrt(0.8*0.2) = sqrt(0.2*0.8) = 0.4 in both entries
        np.testing.assert_allclose(geometric_mix([[0.8, 0.2], [0.2, 0.8]], [0.5, 0.5]), [0.5, 0.5], atol=1e-15)

    def test_zero_is_absorbing(self):
        np.testing.assert_array_equal(geometric_mix([[0, 1], [0.5, 0.5]], [0.5, 0.5]), [0, 1])

    def test_zero_weight_member_is_ignored(self):
        np.testing.assert_allclose(geometric_mix([[0, 1], [0.3, 0.7]], [0.0, 1.0]), [0.3, 0.7])

    def test_disjoint_support(self):
        with pytest.raises(DegenerateSupportError):
            geometric_mix([[1, 0], [0, 1]], [0.5, 0.5])

    def test_no_underflow_in_log_space(self):
        tiny = np.array([1e-300, 1e-300, 1 - 2e-300])
        small = np.array([1e-200, 1e-250, 1.0])
        small /= small.sum()
        out = geometric_mix([tiny, small], [0.5, 0.5])
        assert abs(out.sum() - 1) <= 1e-12
        assert out[0] > 0 and out[1] > 0

    @given(data=st.data())
    def test_log_space_matches_product_space(self, data):
        k = data.draw(st.integers(1, 5))
        bs = [data.draw(beliefs(3)) for _ in range(k)]
        w = data.draw(beliefs(k))
        naive = np.prod([b ** wj for b, wj in zip(bs, w)], axis=0)
        naive /= naive.sum()
        np.testing.assert_allclose(geometric_mix(bs, w), naive, rtol=0, atol=1e-12)

    @given(data=st.data())
    def test_permutation_equivariance(self, data):
        k = data.draw(st.integers(1, 4))
        bs = [data.draw(beliefs(4)) for _ in range(k)]
        w = data.draw(beliefs(k))
        perm = data.draw(st.permutations(range(4)))
        for mix in (geometric_mix, linear_mix):
            np.testing.assert_allclose(mix([b[list(perm)] for b in bs], w), mix(bs, w)[list(perm)], atol=1e-12)


class TestWeightedKLIdentity:
    """sum_j w_j D(pi||mu_j) - D(pi||g) is the same for every pi, g the unnormalized geometric mean."""

    @staticmethod
    def _kl_unnormalized(p, g):
        s = p > 0
        return float(np.sum(p[s] * np.log(p[s] / g[s])))

    def test_constant_offset_and_same_argmin(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            k = int(rng.integers(2, 5))
            mus = [random_belief(rng, 3) for _ in range(k)]
            w = rng.dirichlet(np.ones(k))
            g = np.prod([mu ** wj for mu, wj in zip(mus, w)], axis=0)
            grid = simplex_grid(3, 0.05)
            lhs = np.array([sum(wj * kl_divergence(p, mu) for wj, mu in zip(w, mus)) for p in grid])
            rhs = np.array([self._kl_unnormalized(p, g) for p in grid])
            diff = lhs - rhs
            assert np.ptp(diff) <= 1e-12
            assert int(np.argmin(lhs)) == int(np.argmin(rhs))
            # the normalized mean only shifts the constant
            gn = geometric_mix(mus, w)
            rhs_n = np.array([kl_divergence(p, gn) for p in grid])
            assert np.ptp(lhs - rhs_n) <= 1e-12
