"""Benchmark commands and the CLI surface."""

import json
import subprocess
import sys

import numpy as np
import pytest

from ctmsim.bench import (EVAL_COLUMNS, cmd_fd, cmd_speed, evaluate,
                          format_rows, summarize)
from ctmsim.cli import main


class TestFd:
    @pytest.fixture(scope="class")
    def result(self):
        return cmd_fd(levels=40)

    def test_both_branches_linear(self, result):
        assert result.r2_free >= 0.999
        assert result.r2_congested >= 0.999

    def test_slopes(self, result):
        assert result.slope_free == pytest.approx(13.89, rel=0.01)
        assert result.slope_congested == pytest.approx(-5.56, rel=0.01)

    def test_zero_demand_gives_origin_point(self, result):
        k0, q0, branch = result.points[0]
        assert branch == "free"
        assert k0 == pytest.approx(0.0, abs=1e-12)
        assert q0 == pytest.approx(0.0, abs=1e-12)

    def test_level_count_validated(self):
        with pytest.raises(ValueError):
            cmd_fd(levels=1)


class TestEval:
    def test_row_schema(self):
        rows = evaluate("single-intersection-v0", "fixed", seconds=120,
                        seeds=[0, 1])
        assert len(rows) == 2
        assert all(set(r) == set(EVAL_COLUMNS) for r in rows)
        assert [r["seed"] for r in rows] == [0, 1]

    def test_seeded_reproducibility(self):
        a = evaluate("single-intersection-v0", "maxpressure", seconds=300,
                     seeds=[4], mesoscopic=True)
        b = evaluate("single-intersection-v0", "maxpressure", seconds=300,
                     seeds=[4], mesoscopic=True)
        assert a[0]["throughput"] == b[0]["throughput"]
        assert a[0]["queue"] == b[0]["queue"]

    def test_summary(self):
        rows = evaluate("single-intersection-v0", "fixed", seconds=120,
                        seeds=[0, 1, 2], mesoscopic=True)
        s = summarize(rows)
        assert set(s) == {"throughput", "delay", "queue"}
        assert s["throughput"]["std"] >= 0

    def test_formats(self):
        rows = evaluate("single-intersection-v0", "fixed", seconds=60,
                        seeds=[0])
        csv = format_rows(rows, EVAL_COLUMNS, "csv")
        assert csv.splitlines()[0] == ",".join(EVAL_COLUMNS)
        js = json.loads(format_rows(rows, EVAL_COLUMNS, "json"))
        assert js[0]["controller"] == "fixed"


class TestSpeed:
    def test_row_contents(self):
        rows = cmd_speed(["single-intersection-v0"], steps=2000)
        row = rows[0]
        assert row["cells"] == 24
        assert row["intersections"] == 1
        assert row["steps_per_s"] > 0
        assert row["speedup"] == pytest.approx(row["steps_per_s"], rel=1e-6)


class TestCli:
    def test_eval_csv(self, capsys):
        rc = main(["eval", "--scenario", "single-intersection-v0",
                   "--controller", "fixed", "--seconds", "60",
                   "--format", "csv"])
        assert rc == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0].startswith("scenario,controller,seed")

    def test_unknown_scenario_fails_nonzero(self, capsys):
        rc = main(["eval", "--scenario", "nope-v0", "--controller", "fixed"])
        assert rc != 0
        assert "error" in capsys.readouterr().err

    def test_unknown_controller_fails_nonzero(self, capsys):
        rc = main(["eval", "--scenario", "single-intersection-v0",
                   "--controller", "nope"])
        assert rc != 0

    def test_record_and_fd(self, tmp_path, capsys):
        out = tmp_path / "trace.jsonl"
        rc = main(["record", "--scenario", "single-intersection-v0",
                   "--controller", "fixed", "--seconds", "5",
                   "--out", str(out)])
        assert rc == 0 and out.exists()
        assert "5 frames" in capsys.readouterr().out
        rc = main(["fd", "--levels", "8", "--format", "json",
                   "--points-out", str(tmp_path / "pts.csv")])
        assert rc == 0
        report = json.loads(capsys.readouterr().out)
        assert report["r2_free"] >= 0.999
        assert (tmp_path / "pts.csv").read_text().startswith("density,flow")

    def test_out_file(self, tmp_path):
        out = tmp_path / "report.csv"
        rc = main(["speed", "--scenario", "single-intersection-v0",
                   "--steps", "500", "--format", "csv", "--out", str(out)])
        assert rc == 0
        assert out.read_text().startswith("scenario,")

    def test_scenarios_listing(self, capsys):
        assert main(["scenarios"]) == 0
        assert "grid-4x4-v0" in capsys.readouterr().out

    def test_entrypoint_runs(self):
        proc = subprocess.run(
            [sys.executable, "-m", "ctmsim.cli", "scenarios"],
            capture_output=True, text=True, timeout=120)
        assert proc.returncode == 0
        assert "single-intersection-v0" in proc.stdout
