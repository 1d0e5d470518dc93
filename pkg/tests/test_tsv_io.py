from __future__ import annotations

import numpy as np
import pytest

from app.core.errors import InputError
from app.models.probe_array import FitResult, ProbeArray
from app.schemas.params import NormexpParams
from app.schemas.simulation import SimulationSpec
from app.services.simulation import simulate
from app.services.tsv_io import (
    read_array,
    read_batch,
    read_detection_table,
    read_params,
    read_vector,
    write_array,
    write_batch,
    write_params,
    write_vector,
)


def _write(path, text: str):
    path.write_text(text, encoding="utf-8")
    return path


class TestArrays:
    def test_round_trip_is_exact(self, tmp_path, rng):
        arr = ProbeArray(
            regular=rng.gamma(0.12, 1785.0, 200) + rng.normal(53.0, 4.4, 200),
            negative=rng.normal(53.0, 4.4, 20),
            detection_pvalues=rng.integers(0, 21, 200) / 20,
            probe_ids=tuple(f"id{j}" for j in range(200)),
        )
        write_array(tmp_path / "a.tsv", arr, comments=["made in a test"])
        back = read_array(tmp_path / "a.tsv")

        np.testing.assert_array_equal(back.regular, arr.regular)
        np.testing.assert_array_equal(back.negative, arr.negative)
        np.testing.assert_array_equal(back.detection_pvalues, arr.detection_pvalues)
        assert back.probe_ids == arr.probe_ids

    def test_headerless_single_column(self, tmp_path):
        path = _write(tmp_path / "v.tsv", "# values\n1.5\n\n2.5\n")
        np.testing.assert_array_equal(read_vector(path), [1.5, 2.5])

    def test_bad_row_names_file_and_line(self, tmp_path):
        path = _write(tmp_path / "a.tsv", "probe_id\tregular\np1\t1.0\np2\tabc\n")
        with pytest.raises(InputError, match=r"a\.tsv:3: cannot parse"):
            read_array(path)

    @pytest.mark.parametrize("first_row", ["p1\t1.5e\t0.5", "7\tabc\t0.5"])
    def test_malformed_first_row_is_not_a_header(self, tmp_path, first_row):
        path = _write(tmp_path / "a.tsv", f"{first_row}\np2\t2.0\t0.1\n")
        with pytest.raises(InputError, match=r"a\.tsv:1: cannot parse"):
            read_array(path)

    def test_all_text_first_row_is_a_header(self, tmp_path):
        path = _write(tmp_path / "a.tsv", "# made by hand\nprobe_id\tregular\np1\t1.0\np2\t8\n")
        arr = read_array(path)
        np.testing.assert_array_equal(arr.regular, [1.0, 8.0])
        assert arr.probe_ids == ("p1", "p2")

    def test_written_vector_layout(self, tmp_path):
        write_vector(tmp_path / "v.tsv", [1.0, 8.0], "corrected", ids=["p1", "p2"], comments=["run 1"])
        assert (tmp_path / "v.tsv").read_text() == "# run 1\nprobe_id\tcorrected\np1\t1\np2\t8\n"

        write_vector(tmp_path / "bare.tsv", [0.5])
        assert (tmp_path / "bare.tsv").read_text() == "0.5\n"

    def test_non_finite_value(self, tmp_path):
        path = _write(tmp_path / "a.tsv", "p1\t1.0\np2\tnan\n")
        with pytest.raises(InputError, match=r":2: non-finite"):
            read_array(path)

    def test_pvalues_on_some_rows(self, tmp_path):
        path = _write(tmp_path / "a.tsv", "p1\t1.0\t0.5\np2\t2.0\n")
        with pytest.raises(InputError, match="some rows only"):
            read_array(path)

    def test_negatives_from_sentinel_or_file(self, tmp_path):
        inline = _write(tmp_path / "inline.tsv", "p1\t10.0\np2\t20.0\n>negative\nn1\t1.0\nn2\t2.0\n")
        np.testing.assert_array_equal(read_array(inline).negative, [1.0, 2.0])

        plain = _write(tmp_path / "plain.tsv", "p1\t10.0\np2\t20.0\n")
        negs = _write(tmp_path / "neg.tsv", "negative\n3.0\n4.0\n")
        np.testing.assert_array_equal(read_array(plain, negs).negative, [3.0, 4.0])

        with pytest.raises(InputError, match="drop --negatives"):
            read_array(inline, negs)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError, match="cannot read"):
            read_vector(tmp_path / "absent.tsv")

    def test_detection_table(self, tmp_path):
        path = _write(tmp_path / "d.tsv", "probe_id\tintensity\tp\np1\t5.0\t0.5\np2\t9.0\t0.0\n")
        table = read_detection_table(path, n_neg=2)
        np.testing.assert_array_equal(table.counts, [1, 0])

        write_vector(tmp_path / "v.tsv", [1.0, 2.0], "x")
        with pytest.raises(InputError, match="detection_pvalue"):
            read_detection_table(tmp_path / "v.tsv", n_neg=2)


class TestParams:
    def test_round_trip(self, tmp_path, set1):
        fit = FitResult(params=set1, loglik=-1234.5, iterations=17, converged=True, init_fallback=True)
        write_params(tmp_path / "p.txt", "normgam", fit)
        model, params = read_params(tmp_path / "p.txt")
        assert model == "normgam"
        assert params == set1
        assert "init_fallback=true" in (tmp_path / "p.txt").read_text()

    def test_normexp_keys(self, tmp_path):
        q = NormexpParams(mu=43.5, sigma=5.8, alpha=226.0)
        write_params(tmp_path / "p.txt", "normexp-np", q)
        assert read_params(tmp_path / "p.txt") == ("normexp-np", q)

    @pytest.mark.parametrize(
        "text,message",
        [
            ("model=normgam\nmu=1\nsigma=1\nk=1\ntheta=1\nalpha=2\n", "does not take alpha"),
            ("model=normexp-mle\nmu=1\nsigma=1\nk=1\ntheta=1\n", "does not take k, theta"),
            ("model=normgam\nmu=1\nsigma=1\n", "missing k, theta"),
            ("model=lognormal\nmu=1\n", "unknown model"),
            ("model=normgam\nmu\n", r":2: expected key=value"),
        ],
    )
    def test_malformed(self, tmp_path, text, message):
        with pytest.raises(InputError, match=message):
            read_params(_write(tmp_path / "p.txt", text))


class TestBatch:
    @pytest.fixture
    def batch(self):
        spec = SimulationSpec(scenario="s3", parameter_set=3, n_reg=50, n_neg=10, n_arrays=4, de_fraction=0.2, seed=9)
        return simulate(spec, threads=1)

    def test_round_trip(self, tmp_path, batch):
        write_batch(tmp_path, batch, {"scenario": "s3"}, threads=2)
        back, manifest = read_batch(tmp_path)

        assert manifest["scenario"] == "s3"
        assert back.truth == batch.truth
        assert back.groups == batch.groups
        np.testing.assert_array_equal(back.de_labels, batch.de_labels)
        for a, b in zip(back.arrays, batch.arrays):
            np.testing.assert_array_equal(a.regular, b.regular)
            np.testing.assert_array_equal(a.negative, b.negative)
        for i in range(batch.n_arrays):
            np.testing.assert_array_equal(back.signal_for(i), batch.signal_for(i))

    def test_missing_file_is_named(self, tmp_path, batch):
        write_batch(tmp_path, batch, {})
        (tmp_path / "negative_2.tsv").unlink()
        with pytest.raises(InputError, match="missing batch file: .*negative_2.tsv"):
            read_batch(tmp_path)
