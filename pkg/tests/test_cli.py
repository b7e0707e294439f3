"""CLI exit-code contract, file formats, manifests, and atomicity."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from otmatch.errors import DataError
from otmatch.estimators import MatchedSample
from otmatch.io import atomic_write, parse_matched_csv, write_matched_csv

HEADER = "wage,x_C,x_M,y_C,y_M"


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "otmatch.cli", *args],
        capture_output=True,
        text=True,
    )


def stderr_payload(proc):
    return json.loads(proc.stderr.strip().splitlines()[-1])


@pytest.fixture(scope="module")
def sample_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "sample.csv"
    proc = run_cli(
        "simulate", "--preset", "table3", "--n", "200", "--seed", "3",
        "--output", str(path),
    )
    assert proc.returncode == 0, proc.stderr
    return path


class TestIoDirect:
    def test_roundtrip_bitwise(self, tmp_path):
        rng = np.random.default_rng(0)
        sample = MatchedSample(
            rng.normal(size=5), rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
        )
        path = tmp_path / "s.csv"
        write_matched_csv(path, sample)
        back = parse_matched_csv(path)
        np.testing.assert_array_equal(back.w, sample.w)
        np.testing.assert_array_equal(back.X, sample.X)
        np.testing.assert_array_equal(back.Y, sample.Y)

    def test_bad_cell_names_row_and_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(f"{HEADER}\n1.0,0.1,abc,0.3,0.4\n")
        with pytest.raises(DataError, match="row 2.*x_M"):
            parse_matched_csv(path)

    def test_nan_rejected(self, tmp_path):
        path = tmp_path / "nan.csv"
        path.write_text(f"{HEADER}\n1.0,0.1,0.2,nan,0.4\n")
        with pytest.raises(DataError, match="row 2.*y_C"):
            parse_matched_csv(path)

    def test_wrong_header(self, tmp_path):
        path = tmp_path / "hdr.csv"
        path.write_text("wage,xc,xm,yc,ym\n1,2,3,4,5\n")
        with pytest.raises(DataError, match="header"):
            parse_matched_csv(path)

    def test_wrong_field_count(self, tmp_path):
        path = tmp_path / "fields.csv"
        path.write_text(f"{HEADER}\n1.0,2.0,3.0\n")
        with pytest.raises(DataError, match="row 2"):
            parse_matched_csv(path)

    def test_atomic_write_no_partial_file(self, tmp_path):
        target = tmp_path / "out.csv"
        with pytest.raises(RuntimeError):
            with atomic_write(target) as fh:
                fh.write("partial")
                raise RuntimeError("boom")
        assert not target.exists()
        assert list(tmp_path.iterdir()) == []


class TestSimulate:
    def test_output_and_manifest(self, tmp_path):
        out = tmp_path / "sim.csv"
        man = tmp_path / "manifest.json"
        proc = run_cli(
            "simulate", "--preset", "table3", "--n", "50", "--seed", "7",
            "--output", str(out), "--manifest", str(man),
        )
        assert proc.returncode == 0, proc.stderr
        lines = out.read_text().strip().split("\n")
        assert lines[0] == HEADER
        assert len(lines) == 51
        manifest = json.loads(man.read_text())
        assert manifest["command"] == "simulate"
        assert manifest["config"]["seed"] == 7
        assert "otmatch" in manifest["versions"]
        assert "numpy" in manifest["versions"]
        assert manifest["wall_time_seconds"] >= 0

    def test_byte_identical_rerun(self, tmp_path):
        outs = []
        for k in range(2):
            out = tmp_path / f"sim{k}.csv"
            proc = run_cli(
                "simulate", "--preset", "table5", "--n", "40", "--seed", "11",
                "--output", str(out),
            )
            assert proc.returncode == 0, proc.stderr
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_unknown_preset_is_usage_error(self, tmp_path):
        proc = run_cli(
            "simulate", "--preset", "table9", "--seed", "0",
            "--output", str(tmp_path / "x.csv"),
        )
        assert proc.returncode == 1
        assert stderr_payload(proc)["error"] == "usage"


class TestSolveOt:
    def test_coupling_csv(self, sample_csv, tmp_path):
        out = tmp_path / "coupling.csv"
        proc = run_cli(
            "solve-ot", "--input", str(sample_csv), "--output", str(out),
        )
        assert proc.returncode == 0, proc.stderr
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "worker_index,job_index,wage_dual,profit_dual"
        assert len(lines) == 201
        jobs = sorted(int(ln.split(",")[1]) for ln in lines[1:])
        assert jobs == list(range(200))


class TestEstimate:
    def test_sls_report(self, sample_csv, tmp_path):
        out = tmp_path / "report.json"
        proc = run_cli(
            "estimate", "--input", str(sample_csv), "--method", "sls",
            "--no-se", "--output", str(out),
        )
        assert proc.returncode == 0, proc.stderr
        report = json.loads(out.read_text())
        assert report["method"] == "sls"
        assert "theta" in report and "sieve" in report

    def test_ml_report(self, sample_csv, tmp_path):
        out = tmp_path / "ml.json"
        proc = run_cli(
            "estimate", "--input", str(sample_csv), "--method", "ml",
            "--output", str(out),
        )
        assert proc.returncode == 0, proc.stderr
        report = json.loads(out.read_text())
        assert report["method"] == "ml"
        assert np.isfinite(report["loglik"])

    def test_missing_input_is_usage_error(self, tmp_path):
        proc = run_cli(
            "estimate", "--input", str(tmp_path / "nope.csv"),
            "--output", str(tmp_path / "r.json"),
        )
        assert proc.returncode == 1
        assert stderr_payload(proc)["error"] == "usage"

    def test_malformed_input_is_data_error(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text(f"{HEADER}\n1.0,0.1,abc,0.3,0.4\n")
        out = tmp_path / "r.json"
        proc = run_cli("estimate", "--input", str(bad), "--output", str(out))
        assert proc.returncode == 2
        payload = stderr_payload(proc)
        assert payload["error"] == "data"
        assert "row 2" in payload["message"] and "x_M" in payload["message"]
        assert not out.exists()

    def test_too_small_sample_is_data_error(self, tmp_path):
        small = tmp_path / "small.csv"
        rows = [HEADER] + [f"{i}.0,0.{i},0.{i + 1},0.{i},0.{i + 1}" for i in range(5)]
        small.write_text("\n".join(rows) + "\n")
        proc = run_cli(
            "estimate", "--input", str(small), "--output", str(tmp_path / "r.json")
        )
        assert proc.returncode == 2
        assert stderr_payload(proc)["error"] == "data"


class TestMc:
    def test_table_layout(self, tmp_path):
        out = tmp_path / "mc.csv"
        proc = run_cli(
            "mc", "--preset", "table3", "--n", "300", "--reps", "2", "--seed", "21",
            "--estimators", "sls", "--output", str(out),
        )
        assert proc.returncode == 0, proc.stderr
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "parameter,statistic,sls"
        assert len(lines) == 9
        assert lines[1].startswith("alpha_CC,Bias,")
        assert lines[8].startswith("beta_M,RMSE,")


class TestDiagnose:
    def test_mardia_numerical_failure_exit_3(self, tmp_path):
        # duplicate skill columns make the covariance exactly singular
        path = tmp_path / "singular.csv"
        rng = np.random.default_rng(0)
        rows = [HEADER]
        for _ in range(30):
            w, x, y1, y2 = (float(v) for v in rng.normal(size=4))
            rows.append(f"{w!r},{x!r},{x!r},{y1!r},{y2!r}")
        path.write_text("\n".join(rows) + "\n")
        out = tmp_path / "mardia.csv"
        proc = run_cli(
            "diagnose", "mardia", "--input", str(path), "--columns", "x",
            "--output", str(out),
        )
        assert proc.returncode == 3
        assert stderr_payload(proc)["error"] == "numerical"
        assert not out.exists()

    def test_mardia_and_summary(self, sample_csv, tmp_path):
        out = tmp_path / "mardia.csv"
        proc = run_cli(
            "diagnose", "mardia", "--input", str(sample_csv), "--columns", "xy",
            "--output", str(out),
        )
        assert proc.returncode == 0, proc.stderr
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "statistic,value,pvalue"
        # p-values printed with 4 decimals
        assert len(lines[1].split(",")[2].split(".")[1]) == 4

        out2 = tmp_path / "summary.json"
        proc = run_cli(
            "diagnose", "summary", "--input", str(sample_csv), "--output", str(out2)
        )
        assert proc.returncode == 0, proc.stderr
        stats = json.loads(out2.read_text())
        assert set(stats) == {"wage", "x_C", "x_M", "y_C", "y_M", "rho_x", "rho_y"}


class TestSweep:
    def test_grid_runs(self, tmp_path):
        out = tmp_path / "sweep.csv"
        proc = run_cli(
            "sweep", "--preset", "appendixC", "--n", "40", "--seed", "2",
            "--grid", "0.5,0.2;1.0,1.0", "--output", str(out),
        )
        assert proc.returncode == 0, proc.stderr
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "alpha_CC,alpha_MM,skewness,variance"
        assert len(lines) == 3

    def test_malformed_grid(self, tmp_path):
        proc = run_cli(
            "sweep", "--seed", "2", "--grid", "0.5;0.2,bad",
            "--output", str(tmp_path / "s.csv"),
        )
        assert proc.returncode == 1
        payload = stderr_payload(proc)
        assert payload["error"] == "usage"
        assert "grid" in payload["message"]


class TestDecompose:
    def test_end_to_end(self, sample_csv, tmp_path):
        report = tmp_path / "r0.json"
        proc = run_cli(
            "estimate", "--input", str(sample_csv), "--method", "sls",
            "--no-se", "--output", str(report),
        )
        assert proc.returncode == 0, proc.stderr
        out = tmp_path / "curve.csv"
        proc = run_cli(
            "decompose",
            "--report-t0", str(report), "--report-t1", str(report),
            "--sample-t0", str(sample_csv), "--sample-t1", str(sample_csv),
            "--mode", "DistributionOnly", "--output", str(out),
        )
        assert proc.returncode == 0, proc.stderr
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "percentile,relative_growth"
        assert len(lines) == 100
        values = np.array([float(ln.split(",")[1]) for ln in lines[1:]])
        np.testing.assert_allclose(values, 0.0, atol=1e-9)
