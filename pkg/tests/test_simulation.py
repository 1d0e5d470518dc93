from __future__ import annotations

import numpy as np
import pytest
from pydantic import ValidationError

from app.core.errors import InputError
from app.models.probe_array import ProbeArray
from app.schemas.params import NormalGammaParams
from app.schemas.simulation import SimulationSpec
from app.services.simulation import PARAMETER_SETS, build_empirical_pool, simulate, true_params


def _spec(**overrides) -> SimulationSpec:
    fields = dict(scenario="s1", parameter_set=1, n_reg=300, n_neg=30, n_arrays=4, seed=7)
    fields.update(overrides)
    return SimulationSpec(**fields)


class TestParameterSets:
    def test_nine_sets(self):
        assert sorted(PARAMETER_SETS) == list(range(1, 10))

    def test_normexp_sets_have_unit_shape(self):
        for set_id in (3, 4, 5, 6, 8, 9):
            assert PARAMETER_SETS[set_id].params.k == 1.0

    def test_explicit_params_win(self):
        p = NormalGammaParams(mu=50.0, sigma=4.0, k=0.5, theta=100.0)
        assert true_params(SimulationSpec(scenario="s1", params=p, seed=0)) == p


class TestSpecValidation:
    def test_mixture_weight_out_of_range(self):
        with pytest.raises(ValidationError):
            _spec(scenario="s2", p=1.25)

    def test_s2_needs_weight(self):
        with pytest.raises(ValidationError):
            _spec(scenario="s2")

    def test_weight_only_for_s2(self):
        with pytest.raises(ValidationError):
            _spec(p=0.5)

    def test_s4_needs_pool(self):
        with pytest.raises(ValidationError):
            _spec(scenario="s4")

    def test_differential_subset_needs_shared_signal(self):
        with pytest.raises(ValidationError):
            _spec(de_fraction=0.1)

    def test_exactly_one_truth(self):
        p = NormalGammaParams(mu=50.0, sigma=4.0, k=0.5, theta=100.0)
        with pytest.raises(ValidationError):
            _spec(params=p)
        with pytest.raises(ValidationError):
            _spec(parameter_set=None)


class TestSimulate:
    def test_deterministic(self):
        a, b = simulate(_spec(), threads=1), simulate(_spec(), threads=3)
        for x, y in zip(a.arrays, b.arrays):
            np.testing.assert_array_equal(x.regular, y.regular)
            np.testing.assert_array_equal(x.negative, y.negative)

    def test_seed_matters(self):
        a, b = simulate(_spec(seed=1)), simulate(_spec(seed=2))
        assert not np.array_equal(a.arrays[0].regular, b.arrays[0].regular)

    def test_s1_signal_per_array(self):
        batch = simulate(_spec())
        assert not batch.shared_signal
        assert batch.n_arrays == 4
        for i, arr in enumerate(batch.arrays):
            assert arr.n_reg == 300 and arr.n_neg == 30
            assert np.all(batch.signal_for(i) >= 0)
        assert not np.array_equal(batch.signal_for(0), batch.signal_for(1))

    def test_s3_shares_signal(self):
        batch = simulate(_spec(scenario="s3", parameter_set=7))
        assert batch.shared_signal
        assert len(batch.signals) == 1
        assert not np.array_equal(batch.arrays[0].regular, batch.arrays[1].regular)

    def test_zero_weight_mixture_matches_s1(self):
        s1 = simulate(_spec())
        s2 = simulate(_spec(scenario="s2", p=0.0))
        for x, y in zip(s1.arrays, s2.arrays):
            np.testing.assert_array_equal(x.regular, y.regular)
            np.testing.assert_array_equal(x.negative, y.negative)

    def test_full_weight_mixture_raises_noise_level(self):
        batch = simulate(_spec(scenario="s2", p=1.0, n_neg=2000))
        assert batch.arrays[0].negative.mean() == pytest.approx(58.0, rel=0.05)

    def test_s4_draws_noise_from_pool(self):
        pool = tuple(float(v) for v in np.linspace(40.0, 60.0, 21))
        batch = simulate(_spec(scenario="s4", pool=pool))
        assert set(np.unique(batch.arrays[0].negative)) <= set(pool)
        residual = batch.arrays[0].regular - batch.signals[0]
        assert np.all(np.isin(np.round(residual, 9), np.round(pool, 9)))

    def test_differential_subset(self):
        batch = simulate(_spec(scenario="s3", de_fraction=0.1, fold_change=3.0))
        assert batch.groups == (0, 0, 1, 1)
        assert int(batch.de_labels.sum()) == 30

        base, changed = batch.signal_for(0), batch.signal_for(3)
        de = batch.de_labels == 1
        np.testing.assert_allclose(changed[de], 3.0 * base[de])
        np.testing.assert_array_equal(changed[~de], base[~de])


class TestEmpiricalPool:
    def test_concatenates_normalized_negatives(self, rng):
        arrays = [ProbeArray(regular=np.ones(5), negative=rng.normal(50.0 + i, 4.0, 100)) for i in range(3)]
        pool = build_empirical_pool(arrays)
        assert pool.size == 300
        np.testing.assert_allclose(np.sort(pool[:100]), np.sort(pool[100:200]))

    def test_unequal_counts_interpolated_to_modal(self, rng):
        negs = [rng.normal(50.0, 4.0, n) for n in (100, 100, 80)]
        assert build_empirical_pool(negs).size == 300

    def test_needs_two_arrays(self, rng):
        with pytest.raises(InputError):
            build_empirical_pool([rng.normal(50.0, 4.0, 100)])
