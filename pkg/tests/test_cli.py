import csv
import subprocess
import sys

import numpy as np
import pytest

from musa.cli import main, read_window_csv
from musa.errors import ParseError
from musa.experiments import FIDELITY_HEADER, FidelityPlan, mean_ci, run_fidelity, summarize
from musa.netsim import SWEEP_HEADER


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def small_csv(tmp_path):
    path = tmp_path / "w.csv"
    rng = np.random.default_rng(0)
    x = rng.normal(10, 2, (8, 2))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["temp", "hum"])
        w.writerows([[repr(float(v)) for v in row] for row in x])
    return path, x


class TestReduce:
    def test_full_size_is_identity(self, small_csv, tmp_path):
        path, x = small_csv
        out = tmp_path / "r.csv"
        assert main(["reduce", str(path), "--n-prime", "8", "-o", str(out)]) == 0
        assert out.read_text() == path.read_text()
        assert (tmp_path / "r.csv.indices").read_text() == "retained_indices=0,1,2,3,4,5,6,7\n"

    def test_output_round_trips(self, small_csv, tmp_path):
        path, x = small_csv
        out = tmp_path / "r.csv"
        assert main(["reduce", str(path), "--n-prime", "3", "--technique", "robust_pca", "-o", str(out)]) == 0
        back = read_window_csv(out)
        idx = [int(i) for i in (tmp_path / "r.csv.indices").read_text().split("=")[1].split(",")]
        assert back.column_names == ("temp", "hum")
        assert np.array_equal(back.values, x[idx])

    def test_non_numeric_cell(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n3,oops\n")
        out = tmp_path / "r.csv"
        assert main(["reduce", str(bad), "--n-prime", "1", "-o", str(out)]) != 0
        err = capsys.readouterr().err
        assert "line 3" in err and "'b'" in err
        assert not out.exists()

    def test_parse_error_fields(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n3,oops\n")
        with pytest.raises(ParseError) as info:
            read_window_csv(bad)
        assert (info.value.line, info.value.column) == (3, "b")

    def test_ragged_row(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n3\n")
        with pytest.raises(ParseError):
            read_window_csv(bad)

    def test_generated_log2_robust(self, tmp_path):
        gen = tmp_path / "g.csv"
        out = tmp_path / "r.csv"
        assert main(["generate", "--n", "1024", "-o", str(gen)]) == 0
        assert main(["reduce", str(gen), "--level", "log2", "--technique", "robust_pca", "-o", str(out)]) == 0
        rows = read_rows(out)
        assert len(rows) == 11 and len(rows[0]) == 19

    def test_reduction_error_leaves_no_output(self, small_csv, tmp_path):
        path, _ = small_csv
        out = tmp_path / "r.csv"
        assert main(["reduce", str(path), "--n-prime", "9", "-o", str(out)]) != 0
        assert not out.exists()


class TestGenerate:
    def test_seed_env_and_flag(self, tmp_path, monkeypatch):
        a, b, c = (tmp_path / f"{k}.csv" for k in "abc")
        monkeypatch.setenv("MUSA_SEED", "5")
        main(["generate", "--n", "20", "-o", str(a)])
        main(["generate", "--n", "20", "--seed", "5", "-o", str(b)])
        main(["generate", "--n", "20", "--seed", "6", "-o", str(c)])
        assert a.read_text() == b.read_text() != c.read_text()

    def test_bad_env_seed(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MUSA_SEED", "abc")
        assert main(["generate", "--n", "20", "-o", str(tmp_path / "x.csv")]) != 0

    def test_reference_file(self, tmp_path):
        ref = tmp_path / "ref.txt"
        ref.write_text("2\n10 20\n1 0\n0 4\n")
        out = tmp_path / "g.csv"
        assert main(["generate", "--reference", str(ref), "--n", "50", "--family", "student_t", "-o", str(out)]) == 0
        assert read_rows(out)[0] == ["x1", "x2"]


class TestFidelity:
    def test_smoke_and_determinism(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["fidelity", "--replications", "1", "--distributions", "gaussian", "--levels", "half"]
        assert main(args + ["-o", str(a)]) == 0
        assert main(args + ["-o", str(b)]) == 0
        assert a.read_text() == b.read_text()
        rows = read_rows(a)
        assert tuple(rows[0]) == FIDELITY_HEADER
        assert len(rows) == 4
        assert all(np.isfinite(float(r[4])) for r in rows[1:])

    def test_config_file(self, tmp_path):
        cfg = tmp_path / "f.cfg"
        cfg.write_text("# quick run\nreplications = 2\ndistributions = skew_gaussian\ntechniques = pca\n")
        out = tmp_path / "f.csv"
        assert main(["fidelity", "--config", str(cfg), "-o", str(out)]) == 0
        rows = read_rows(out)
        assert [r[0] for r in rows[1:]] == ["skew_gaussian"] * 2
        assert all(r[7] == "2" for r in rows[1:])

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "f.cfg"
        cfg.write_text("replication = 2\n")
        assert main(["fidelity", "--config", str(cfg), "-o", str(tmp_path / "f.csv")]) != 0

    def test_full_grid_row_count(self):
        plan = FidelityPlan(sizes=(720, 1440, 2160, 2880, 3600), replications=1)
        assert len(plan.families) * len(plan.sizes) * len(plan.techniques) * len(plan.levels) == 90

    def test_parallel_matches_serial(self):
        kw = dict(families=["student_t"], techniques=["pca", "ica"], replications=4)
        serial = summarize(run_fidelity(FidelityPlan(**kw)))
        parallel = summarize(run_fidelity(FidelityPlan(jobs=2, **kw)))
        assert serial == parallel

    def test_failures_counted(self):
        from musa.datagen import Reference

        # singular covariance: ICA cannot whiten, PCA still runs
        ref = Reference(np.array([5.0, 5.0]), np.array([[1.0, 1.0], [1.0, 1.0]]))
        rows = summarize(run_fidelity(FidelityPlan(families=["gaussian"], replications=2, reference=ref)))
        by = {(r.technique.value, r.level.value): r for r in rows}
        assert by[("ica", "half")].failures == 2 and by[("ica", "half")].replications == 0
        assert by[("pca", "half")].failures == 0

    def test_mean_ci(self):
        assert mean_ci([2.0]) == (2.0, 0.0)
        m, ci = mean_ci([1.0, 2.0, 3.0])
        assert m == 2.0 and ci == pytest.approx(1.96 / np.sqrt(3))


class TestSimulate:
    def test_three_csvs(self, tmp_path):
        out = tmp_path / "sim"
        assert main(["simulate", "--replications", "2", "-o", str(out)]) == 0
        for name in ("data_size", "num_nodes", "num_sources"):
            rows = read_rows(out / f"{name}.csv")
            assert tuple(rows[0]) == SWEEP_HEADER
            assert len(rows) == 1 + 4 * 3
            by_value = {}
            for r in rows[1:]:
                by_value.setdefault(r[0], {})[r[1]] = float(r[2])
            for e in by_value.values():
                assert e["none"] >= e["half"] >= e["log2"]

    def test_zero_sources_row(self, tmp_path):
        out = tmp_path / "s.csv"
        args = ["simulate", "--axis", "num_sources", "--values", "0", "--reductions", "none", "--replications", "1"]
        assert main(args + ["-o", str(out)]) == 0
        row = read_rows(out)[1]
        assert float(row[2]) == 0.0 and row[6] == "0"

    def test_config_and_event_log(self, tmp_path):
        cfg = tmp_path / "s.cfg"
        cfg.write_text("num_nodes = 32\nnum_sources = 2\nreplications = 1\n")
        out = tmp_path / "s.csv"
        logs = tmp_path / "events"
        args = ["simulate", "--config", str(cfg), "--axis", "data_size", "--values", "256", "--reductions", "log2"]
        assert main(args + ["--event-log", str(logs), "-o", str(out)]) == 0
        files = list(logs.iterdir())
        assert [f.name for f in files] == ["events_data_size_256_log2_seed0.csv"]
        events = read_rows(files[0])
        energy = sum(float(r[4]) + float(r[5]) for r in events[1:])
        assert energy == pytest.approx(float(read_rows(out)[1][2]), rel=1e-12)

    def test_flag_overrides_config(self, tmp_path):
        cfg = tmp_path / "s.cfg"
        cfg.write_text("num_sources = 2\n")
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        base = ["simulate", "--config", str(cfg), "--axis", "data_size", "--values", "256", "--replications", "1"]
        main(base + ["-o", str(a)])
        main(base + ["--num-sources", "4", "-o", str(b)])
        assert int(read_rows(b)[1][6]) == 2 * int(read_rows(a)[1][6])


def test_console_entry_point(tmp_path):
    out = tmp_path / "g.csv"
    proc = subprocess.run(
        [sys.executable, "-m", "musa.cli", "generate", "--n", "5", "-o", str(out)], capture_output=True, text=True
    )
    assert proc.returncode == 0, proc.stderr
    assert len(read_rows(out)) == 6
