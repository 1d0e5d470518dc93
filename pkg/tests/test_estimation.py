from __future__ import annotations

import numpy as np
import pytest

from app.core.errors import DegenerateSampleError, InputError
from app.models.probe_array import ProbeArray
from app.schemas.params import NormalParams, NormexpParams
from app.services.distributions import normal_logpdf
from app.services.estimation import (
    kde_mode,
    loglik_normexp,
    loglik_normgam,
    normexp_mle,
    normexp_np,
    normexp_rma,
    normgam_init,
    normgam_mle,
)
from app.services.simulation import PARAMETER_SETS


class TestLoglik:
    def test_empty_regular_set_is_negative_control_likelihood(self, set1, rng):
        neg = rng.normal(53.0, 4.4, 50)
        arr = ProbeArray(regular=[], negative=neg)
        expected = float(np.sum(normal_logpdf(neg, NormalParams(mu=53.0, sigma=4.4))))
        assert loglik_normgam(set1, arr) == pytest.approx(expected, rel=1e-12)

    def test_truth_beats_shifted_location(self, set1, set1_array):
        shifted = set1.model_copy(update={"mu": set1.mu + 10 * set1.sigma})
        assert loglik_normgam(set1, set1_array) > loglik_normgam(shifted, set1_array)

    def test_shape_one_matches_normexp(self, set3_array):
        p = PARAMETER_SETS[3].params
        q = NormexpParams(mu=p.mu, sigma=p.sigma, alpha=p.theta)
        per_probe = abs(loglik_normgam(p, set3_array) - loglik_normexp(q, set3_array)) / set3_array.n_reg
        assert per_probe < 1e-4


class TestInit:
    def test_moment_identity(self, make_array):
        arr = make_array(1, n_reg=50_000, n_neg=5_000, seed=11)
        p0 = normgam_init(arr)
        assert p0.k * p0.theta == pytest.approx(0.12 * 1785.0, rel=0.05)

    def test_constant_negatives_raise(self):
        arr = ProbeArray(regular=np.linspace(60.0, 500.0, 200), negative=np.full(20, 50.0))
        with pytest.raises(DegenerateSampleError):
            normgam_init(arr)

    def test_signal_below_noise_falls_back_to_shape_one(self, rng):
        arr = ProbeArray(regular=rng.normal(40.0, 5.0, 500), negative=rng.normal(50.0, 5.0, 100))
        p0 = normgam_init(arr)
        assert p0.k == 1.0
        assert p0.theta == pytest.approx(p0.sigma)

    def test_low_variance_falls_back(self, rng):
        neg = rng.normal(50.0, 5.0, 2000)
        reg = rng.normal(52.0, 1.0, 500)
        p0 = normgam_init(ProbeArray(regular=reg, negative=neg))
        assert p0.k == 1.0
        assert p0.theta == pytest.approx(reg.mean() - neg.mean())

    def test_shift_moves_only_signal_terms(self, set1_array):
        shifted = ProbeArray(regular=set1_array.regular + 25.0, negative=set1_array.negative)
        a, b = normgam_init(set1_array), normgam_init(shifted)
        assert b.mu == a.mu
        assert b.sigma == a.sigma
        assert b.k * b.theta == pytest.approx(a.k * a.theta + 25.0)


class TestMomentEstimator:
    def test_hand_example(self):
        p = normexp_np(ProbeArray(regular=[150.0, 250.0], negative=[40.0, 60.0]))
        assert p.mu == 50.0
        assert p.sigma == pytest.approx(np.std([40.0, 60.0], ddof=1))
        assert p.alpha == 150.0

    def test_equal_means(self):
        with pytest.raises(DegenerateSampleError, match="signal mean below noise mean"):
            normexp_np(ProbeArray(regular=[40.0, 60.0], negative=[40.0, 60.0]))

    def test_recovers_alpha(self, make_array):
        arr = make_array(3, n_reg=20_000, n_neg=2_000, seed=5)
        assert normexp_np(arr).alpha == pytest.approx(226.0, rel=0.05)


class TestRma:
    def test_normal_sample(self, rng):
        p = normexp_rma(rng.normal(100.0, 5.0, 50_000))
        # the second mode is taken over the points below the first, so it sits low
        assert 100.0 - 0.4 * 5.0 < p.mu < 100.0 + 0.1 * 5.0
        assert p.sigma == pytest.approx(5.0, rel=0.15)
        assert p.alpha > 0

    def test_second_mode_sits_below_first(self, rng):
        x = rng.normal(100.0, 5.0, 50_000)
        assert normexp_rma(x).mu < kde_mode(x)

    def test_underestimates_high_expression(self, set1_array):
        p = normexp_rma(set1_array.regular)
        assert p.alpha < 0.5 * (set1_array.regular.mean() - p.mu)

    def test_repeated_value(self):
        with pytest.raises(DegenerateSampleError):
            normexp_rma(np.full(200, 7.0))

    def test_too_few_values(self):
        with pytest.raises(InputError):
            normexp_rma(np.arange(50.0))

    def test_kde_mode_of_normal(self, rng):
        assert kde_mode(rng.normal(3.0, 1.0, 100_000)) == pytest.approx(3.0, abs=0.3)


class TestNormexpMle:
    def test_recovers_set3(self, make_array):
        arr = make_array(3, n_reg=10_000, n_neg=1_000, seed=3)
        fit = normexp_mle(arr)
        assert fit.converged
        assert fit.params.mu == pytest.approx(43.5, rel=0.02)
        assert fit.params.sigma == pytest.approx(5.8, rel=0.1)
        assert fit.params.alpha == pytest.approx(226.0, rel=0.05)

    def test_dominates_moment_estimate(self, set3_array):
        fit = normexp_mle(set3_array)
        assert fit.loglik >= loglik_normexp(normexp_np(set3_array), set3_array)

    def test_location_equivariance(self, set3_array):
        a = normexp_mle(set3_array).params
        b = normexp_mle(set3_array.transformed(shift=100.0)).params
        assert b.mu == pytest.approx(a.mu + 100.0, rel=1e-4)
        assert b.sigma == pytest.approx(a.sigma, rel=5e-3)
        assert b.alpha == pytest.approx(a.alpha, rel=5e-3)

    def test_requires_enough_probes(self):
        arr = ProbeArray(regular=np.linspace(60.0, 500.0, 50), negative=np.linspace(40.0, 60.0, 20))
        with pytest.raises(InputError):
            normexp_mle(arr)


@pytest.mark.slow
class TestNormgamMle:
    def test_recovers_set1(self, make_array):
        arr = make_array(1, n_reg=25_000, n_neg=1_000, seed=21)
        fit = normgam_mle(arr)
        p = fit.params
        assert fit.loglik >= loglik_normgam(normgam_init(arr), arr)
        assert p.mu == pytest.approx(53.0, rel=0.01)
        assert p.sigma == pytest.approx(4.4, rel=0.05)
        assert p.k == pytest.approx(0.12, rel=0.1)
        assert p.theta == pytest.approx(1785.0, rel=0.2)

    def test_refit_is_a_fixed_point(self, set1_array):
        fit = normgam_mle(set1_array)
        again = normgam_mle(set1_array, start=fit.params)
        assert abs(again.loglik - fit.loglik) <= 1e-6 * abs(fit.loglik)

    def test_scale_equivariance(self, set1_array):
        a = normgam_mle(set1_array).params
        b = normgam_mle(set1_array.transformed(scale=2.0)).params
        assert b.mu == pytest.approx(2 * a.mu, rel=1e-3)
        assert b.sigma == pytest.approx(2 * a.sigma, rel=1e-3)
        assert b.k == pytest.approx(a.k, rel=1e-2)
        assert b.theta == pytest.approx(2 * a.theta, rel=1e-2)
