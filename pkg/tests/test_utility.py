"""Member utilities, the logistic screening link and error rates."""
import math

import numpy as np
import pytest
from scipy.special import expit

from components.errors import DegenerateProbability, DimensionMismatch, InvalidOutcome, InvalidStructure
from components.utility import (
    Affine,
    Constant,
    ExpCara,
    Var,
    as_affine,
    error_rates,
    eval_utility,
    evaluate_many,
    log_screening_pair,
    screening_prob,
    utility_from_json,
    utility_from_log_pair,
    utility_from_prob,
    utility_to_json,
)


class TestEvaluation:
    def test_affine_scalar(self):
        u = Affine(5.0, (1.0,))
        assert eval_utility(u, 4.0) == 9.0
        assert eval_utility(u, [4.0]) == 9.0

    def test_affine_multivariate(self):
        u = Affine(1.0, (2.0, 3.0))
        assert u.value([1.0, -1.0]) == pytest.approx(0.0)
        np.testing.assert_allclose(u.values([[0.0, 0.0], [1.0, 1.0]]), [1.0, 6.0])

    def test_evaluate_many_matches_pointwise(self):
        u = 0.5 * Var(0) + Constant(2.0)
        xs = np.linspace(-3.0, 3.0, 13)
        np.testing.assert_allclose(evaluate_many(u, xs), [u.value(x) for x in xs])

    def test_dimension_mismatch(self):
        u = Affine(0.0, (1.0, 1.0))
        with pytest.raises(DimensionMismatch):
            u.value([1.0])

    def test_non_finite_outcome(self):
        with pytest.raises(InvalidOutcome):
            Affine(0.0, (1.0,)).value(float("nan"))

    def test_exp_cara_shape(self):
        u = ExpCara(10.0, 5.0)
        assert u.value(0.0) == pytest.approx(0.0)
        assert u.value(50.0) == pytest.approx(10.0 * (1.0 - math.exp(-10.0)))
        assert u.derivative(0.0) == pytest.approx(2.0)

    def test_operators_collapse_to_affine(self):
        u = 2.0 * Var(0) - 3.0 + Affine(1.0, (1.0,))
        a = as_affine(u)
        assert a.alpha == pytest.approx(-2.0)
        assert a.beta == pytest.approx((3.0,))

    def test_non_finite_parameter_rejected(self):
        with pytest.raises(InvalidStructure):
            Affine(float("inf"), (1.0,))


class TestScreeningLink:
    def test_half_at_zero_utility(self):
        assert screening_prob(Affine(0.0, (1.0,)), 0.0) == 0.5

    def test_logistic_values(self):
        u = Affine(0.0, (2.0,))
        for x in (-3.0, -0.5, 0.0, 1.0, 4.0):
            assert screening_prob(u, x) == pytest.approx(expit(2.0 * x), abs=1e-15)

    def test_logit_round_trip(self):
        # above u ~ 15, 1 - p drops below the spacing of doubles around 1
        rng = np.random.default_rng(42)
        for u in np.concatenate([rng.uniform(-30.0, 15.0, size=200), [-30.0, 15.0]]):
            x = rng.uniform(-5.0, 5.0)
            assert abs(utility_from_prob(screening_prob(Constant(u), x)) - u) < 1e-9

    def test_log_pair_round_trip_full_range(self):
        rng = np.random.default_rng(42)
        us = np.concatenate([rng.uniform(-30.0, 30.0, size=1000), [-30.0, 0.0, 30.0]])
        lp, lq = log_screening_pair(us)
        np.testing.assert_allclose(utility_from_log_pair(lp, lq), us, rtol=0.0, atol=1e-9)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
    def test_degenerate_probability(self, p):
        with pytest.raises(DegenerateProbability):
            utility_from_prob(p)

    def test_log_pair_tails(self):
        lp, lq = log_screening_pair([-800.0, 0.0, 800.0])
        assert lp[0] == pytest.approx(-800.0)
        assert lq[2] == pytest.approx(-800.0)
        assert lp[1] == pytest.approx(-math.log(2.0))

    def test_monte_carlo_acceptance(self):
        rng = np.random.default_rng(42)
        u = Affine(0.3, (1.0,))
        p = screening_prob(u, 0.2)
        n = 1_000_000
        hits = np.mean(u.value(0.2) + rng.logistic(0.0, 1.0, size=n) > 0.0)
        se = math.sqrt(p * (1.0 - p) / n)
        assert abs(hits - p) < 3.0 * se


class TestErrorRates:
    def test_symmetric_member(self):
        rates = error_rates(Affine(0.0, (1.0,)), (-10.0, 10.0))
        assert rates["omission"] == pytest.approx(rates["commission"], rel=1e-6)
        # (log 2) / 20 for a unit slope on a uniform [-10, 10] density
        assert rates["omission"] == pytest.approx(math.log(2.0) / 20.0, rel=1e-4)

    def test_steeper_member_errs_less(self):
        flat = error_rates(Affine(0.0, (0.5,)), (-10.0, 10.0))
        steep = error_rates(Affine(0.0, (2.0,)), (-10.0, 10.0))
        assert steep["omission"] < flat["omission"]
        assert steep["commission"] < flat["commission"]

    def test_positive_bias_trades_errors(self):
        rates = error_rates(Affine(2.0, (1.0,)), (-10.0, 10.0))
        assert rates["commission"] > rates["omission"]


class TestJson:
    def test_round_trip(self):
        u = Affine(1.0, (2.0,)) + 3.0 * ExpCara(10.0, 5.0)
        back = utility_from_json(utility_to_json(u))
        xs = np.linspace(-2.0, 2.0, 9)
        np.testing.assert_allclose(back.values(xs), u.values(xs))

    def test_unknown_kind(self):
        with pytest.raises(InvalidStructure):
            utility_from_json({"kind": "spline"})
