import io
import json
import math
import zipfile

import numpy as np
import pytest
from scipy import stats as sps

from sbireport.results import ResultsTable, read_samples, t_interval

GOOD_CSV = """\
task,model,budget,seed,observation,c2st,wall_seconds,flags
two_moons,flow,1000,0,1,0.62,3.5,
two_moons,flow,1000,0,2,0.64,3.4,
two_moons,flow,1000,1,1,0.60,3.6,
two_moons,flow,10000,0,1,0.55,3.2,
gaussian_linear,hybrid,1000,0,1,0.42,4.0,low_acceptance:1e-4
"""


def write_csv(tmp_path, text):
    path = tmp_path / "results.csv"
    path.write_text(text)
    return path


class TestResultsTable:
    def test_parses_typed_rows(self, tmp_path):
        table = ResultsTable.from_csv(write_csv(tmp_path, GOOD_CSV))
        assert len(table.rows) == 5
        row = table.rows[0]
        assert (row.task, row.model, row.budget) == ("two_moons", "flow", 1000)
        assert isinstance(row.budget, int) and isinstance(row.c2st, float)
        assert table.tasks == ["gaussian_linear", "two_moons"]
        assert table.models == ["flow", "hybrid"]

    def test_rejects_unknown_column(self, tmp_path):
        bad = GOOD_CSV.replace("wall_seconds,flags", "wall_seconds,flags,extra")
        with pytest.raises(ValueError, match="unknown column"):
            ResultsTable.from_csv(write_csv(tmp_path, bad))

    def test_rejects_missing_column(self, tmp_path):
        lines = [",".join(ln.split(",")[:-1]) for ln in GOOD_CSV.splitlines()]
        with pytest.raises(ValueError, match="missing column"):
            ResultsTable.from_csv(write_csv(tmp_path, "\n".join(lines)))

    def test_rejects_empty_table(self, tmp_path):
        header_only = GOOD_CSV.splitlines()[0] + "\n"
        with pytest.raises(ValueError, match="no result rows"):
            ResultsTable.from_csv(write_csv(tmp_path, header_only))

    def test_seed_means_average_observations(self, tmp_path):
        table = ResultsTable.from_csv(write_csv(tmp_path, GOOD_CSV))
        means = table.seed_means("two_moons", "flow", 1000)
        assert means == {0: pytest.approx(0.63), 1: pytest.approx(0.60)}

    def test_accuracy_is_folded_above_chance(self, tmp_path):
        table = ResultsTable.from_csv(write_csv(tmp_path, GOOD_CSV))
        means = table.seed_means("gaussian_linear", "hybrid", 1000)
        assert means[0] == pytest.approx(0.58)  # max(0.42, 1 - 0.42)

    def test_budgets_are_sorted_per_curve(self, tmp_path):
        table = ResultsTable.from_csv(write_csv(tmp_path, GOOD_CSV))
        assert table.budgets("two_moons", "flow") == [1000, 10000]


class TestTInterval:
    def test_matches_hand_computation_on_three_seeds(self):
        values = [0.55, 0.60, 0.65]
        mean, lo, hi = t_interval(values)
        # hand computation: sd = 0.05, t(0.975, 2 dof) = 4.302653
        sd = np.std(values, ddof=1)
        assert sd == pytest.approx(0.05)
        half = 4.302653 * 0.05 / math.sqrt(3)
        assert mean == pytest.approx(0.60)
        assert lo == pytest.approx(0.60 - half, abs=1e-6)
        assert hi == pytest.approx(0.60 + half, abs=1e-6)
        assert hi - lo == pytest.approx(2 * sps.t.ppf(0.975, 2) * sd / math.sqrt(3))

    def test_single_value_collapses_to_a_point(self):
        assert t_interval([0.6]) == (0.6, 0.6, 0.6)


class TestReadSamples:
    def write_archive(self, path, header, samples):
        with zipfile.ZipFile(path, "w") as zf:
            zf.writestr("header.json", json.dumps(header))
            buf = io.BytesIO()
            np.save(buf, samples)
            zf.writestr("samples.npy", buf.getvalue())

    def test_round_trip(self, tmp_path):
        path = tmp_path / "ref.samples"
        samples = np.random.default_rng(0).standard_normal((50, 2))
        self.write_archive(path, {"kind": "samples", "task": "two_moons",
                                  "model": "reference", "observation": 1},
                           samples)
        header, got = read_samples(path)
        assert header["model"] == "reference"
        assert np.array_equal(got, samples)

    def test_rejects_non_sample_archives(self, tmp_path):
        path = tmp_path / "other.zip"
        self.write_archive(path, {"kind": "dataset"}, np.zeros((2, 2)))
        with pytest.raises(ValueError):
            read_samples(path)

    def test_rejects_garbage_files(self, tmp_path):
        path = tmp_path / "junk.samples"
        path.write_bytes(b"not a zip")
        with pytest.raises(ValueError):
            read_samples(path)
