from __future__ import annotations

import math

import numpy as np
import pytest
from pydantic import ValidationError

from app.core.errors import InputError
from app.schemas.params import CorrectionMethod, CorrectionTag, NormexpParams
from app.services.convolution import build_density_grid
from app.services.correction import (
    conditional_expectation_oracle,
    correct,
    correct_normexp,
    correct_normgam,
    correct_subtract,
    correction_grids,
    make_method,
    normgam_conditional_expectation,
)
from app.services.simulation import PARAMETER_SETS


def _normexp(set_id: int) -> NormexpParams:
    p = PARAMETER_SETS[set_id].params
    return NormexpParams(mu=p.mu, sigma=p.sigma, alpha=p.theta)


class TestSubtract:
    def test_at_median_is_zero(self):
        assert correct_subtract(2.0, [1.0, 2.0, 3.0]) == 0.0

    def test_hand_example(self):
        assert correct_subtract(10.0, [1.0, 2.0, 3.0]) == 8.0

    def test_clipped_below_median(self):
        np.testing.assert_array_equal(correct_subtract(np.array([-5.0, 1.0, 2.5]), [1.0, 2.0, 3.0]), [0.0, 0.0, 0.5])

    def test_needs_negatives(self):
        with pytest.raises(InputError):
            correct_subtract(1.0, [])


class TestNormexp:
    def test_positive_and_increasing(self):
        q = _normexp(3)
        x = np.linspace(q.mu - 200 * q.sigma, q.mu + 50 * q.alpha, 1000)
        s = correct_normexp(x, q)
        assert np.all(s > 0)
        assert np.all(np.diff(s) > 0)

    def test_large_x_limit(self):
        q = _normexp(3)
        x = q.mu + q.sigma**2 / q.alpha + 40 * q.sigma
        assert correct_normexp(x, q) == pytest.approx(x - q.mu - q.sigma**2 / q.alpha, rel=1e-6)

    @pytest.mark.parametrize("set_id", [3, 5, 8])
    def test_matches_oracle(self, set_id):
        q = _normexp(set_id)

        def signal_pdf(s: float) -> float:
            return math.exp(-s / q.alpha) / q.alpha if s >= 0 else 0.0

        def noise_pdf(b: float) -> float:
            z = (b - q.mu) / q.sigma
            return math.exp(-0.5 * z * z) / (q.sigma * math.sqrt(2.0 * math.pi))

        for x in np.linspace(q.mu - 3 * q.sigma, q.mu + 5 * q.alpha, 10):
            d = float(x) - q.mu - q.sigma**2 / q.alpha
            points = (d - 12 * q.sigma, d, d + 12 * q.sigma)
            ref = conditional_expectation_oracle(float(x), signal_pdf, noise_pdf, points=points)
            assert correct_normexp(x, q) == pytest.approx(ref, rel=1e-6)


class TestNormgam:
    @pytest.mark.parametrize("set_id", [1, 3, 7])
    def test_matches_oracle(self, set_id):
        p = PARAMETER_SETS[set_id].params
        grids = correction_grids(p)
        for x in np.linspace(p.mu - 4 * p.sigma, p.mu + 10 * p.k * p.theta, 20):
            assert correct_normgam(x, p, grids) == pytest.approx(normgam_conditional_expectation(x, p), rel=1e-4)

    @pytest.mark.parametrize("set_id", [1, 7])
    def test_positive_and_increasing(self, set_id):
        p = PARAMETER_SETS[set_id].params
        x = np.linspace(p.mu - 7 * p.sigma, build_density_grid(p).spec.T, 1000)
        s = correct_normgam(x, p)
        assert np.all(s > 0)
        assert np.all(np.diff(s) > 0)

    @pytest.mark.parametrize("set_id", [3, 4, 5, 6])
    def test_shape_one_matches_normexp(self, set_id):
        q = _normexp(set_id)
        p = q.as_normal_gamma()
        x = np.linspace(p.mu - 5 * p.sigma, build_density_grid(p).spec.T, 200)
        np.testing.assert_allclose(correct_normgam(x, p), correct_normexp(x, q), rtol=1e-5)

    def test_grids_for_other_params(self, set1):
        other = PARAMETER_SETS[7].params
        with pytest.raises(InputError):
            correct_normgam(60.0, set1, correction_grids(other))

    def test_scalar_in_scalar_out(self, set1):
        assert isinstance(correct_normgam(60.0, set1), float)


class TestNormgamTails:
    @pytest.mark.parametrize("set_id", [1, 7])
    @pytest.mark.parametrize("sigmas", [40, 100])
    def test_far_left_matches_oracle(self, set_id, sigmas):
        p = PARAMETER_SETS[set_id].params
        x = p.mu - sigmas * p.sigma
        assert correct_normgam(x, p) == pytest.approx(normgam_conditional_expectation(x, p), rel=1e-4)

    def test_far_left_approaches_shape_over_rate(self, set1):
        x = -1e4
        rate = 1.0 / set1.theta + (set1.mu - x) / set1.sigma**2
        assert correct_normgam(x, set1) == pytest.approx(set1.k / rate, rel=1e-4)

    @pytest.mark.parametrize("set_id", [1, 7])
    def test_far_right_is_shifted_identity(self, set_id):
        p = PARAMETER_SETS[set_id].params
        x = 1e8
        assert correct_normgam(x, p) == pytest.approx(x - p.mu - p.sigma**2 / p.theta, rel=1e-7)

    @pytest.mark.parametrize("set_id", [1, 7])
    def test_non_decreasing_across_both_tails(self, set_id):
        p = PARAMETER_SETS[set_id].params
        top = build_density_grid(p).spec.upper
        x = np.concatenate(
            [
                np.linspace(p.mu - 300 * p.sigma, p.mu - 7 * p.sigma, 2000, endpoint=False),
                np.linspace(p.mu - 7 * p.sigma, top, 2000, endpoint=False),
                np.geomspace(top, 1e8, 500),
            ]
        )
        s = correct_normgam(x, p)
        assert np.all(np.isfinite(s))
        assert np.all(s > 0)
        assert np.all(np.diff(s) >= 0)


class TestMethods:
    def test_payload_must_match_tag(self, set1):
        with pytest.raises(ValidationError):
            CorrectionMethod(tag=CorrectionTag.NG_TRUE)
        with pytest.raises(ValidationError):
            CorrectionMethod(tag=CorrectionTag.SUBTRACT, normal_gamma=set1)

    def test_batch_api_matches_direct_calls(self, set1, set1_array):
        x = set1_array.regular[:300]
        q = _normexp(3)

        ng = correct(x, make_method(CorrectionTag.NG_TRUE, params=set1))
        np.testing.assert_allclose(ng, correct_normgam(x, set1), rtol=1e-15)

        ne = correct(x, make_method(CorrectionTag.NEXP_MLE, params=q))
        np.testing.assert_allclose(ne, correct_normexp(x, q), rtol=1e-15)

        sub = correct(x, make_method(CorrectionTag.SUBTRACT, negative=set1_array.negative))
        np.testing.assert_allclose(sub, correct_subtract(x, set1_array.negative), rtol=1e-15)

    def test_normexp_params_accepted_for_normal_gamma_tags(self):
        q = _normexp(3)
        method = make_method(CorrectionTag.NG_MLE, params=q)
        assert method.normal_gamma.k == 1.0
        assert method.normal_gamma.theta == q.alpha
