"""
End-to-end runs of the command-line interface.
Every command writes into a temporary directory and is checked through
its exit code and the files it leaves behind.
"""
import json
from pathlib import Path

import pytest

from invdens.cli import main
from invdens.core.export import read_frame

CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"


def _run(tmp_path, *args):
    return main(["--out", str(tmp_path), "--no-timestamp", *args])


class TestPlanCommand:
    """Test the closed-form planning command"""

    def test_plan_writes_key_values(self, tmp_path, capsys):
        """Test the default design: alpha = 2, tau = 1, delta = 2^-7, n = 2^14"""
        assert _run(tmp_path, "plan") == 0
        lines = (tmp_path / "plan.txt").read_text().splitlines()
        assert lines[0] == "p_star=6"
        assert "regime=LF" in lines
        assert any(line.startswith("variance_inflation=") for line in lines)
        assert "p_star=6" in capsys.readouterr().out
        profile = read_frame(tmp_path / "risk_profile.csv")
        assert profile["p"].tolist() == list(range(1, 13))

    def test_flags_override_config(self, tmp_path):
        assert _run(tmp_path, "plan", "--tau", "0.0", "--p-mode", "numeric") == 0
        assert (tmp_path / "plan.txt").read_text().splitlines()[0] == "p_star=1"


class TestSimulateAndEstimate:
    """Test the single-path commands"""

    def test_simulate_with_override(self, tmp_path, capsys):
        assert _run(tmp_path, "--set", "scheme.n=256", "simulate") == 0
        frame = read_frame(tmp_path / "series.csv")
        assert len(frame) == 257
        assert list(frame.columns) == ["t", "x_1", "y_1"]
        assert capsys.readouterr().out.strip().endswith("series.csv")

    def test_estimate_is_reproducible(self, tmp_path):
        """Test that two runs with the same seed write identical bytes"""
        first, second = tmp_path / "a", tmp_path / "b"
        assert _run(first, "--set", "scheme.n=2048", "--seed", "5", "estimate", "--debias") == 0
        assert _run(second, "--set", "scheme.n=2048", "--seed", "5", "estimate", "--debias") == 0
        assert (first / "density.csv").read_bytes() == (second / "density.csv").read_bytes()
        frame = read_frame(first / "density.csv")
        assert list(frame.columns) == ["x_1", "nu_hat", "mu_hat", "target"]

    def test_config_file(self, tmp_path):
        args = ["--config", str(CONFIG_DIR / "table2.toml"), "--set", "scheme.n=512", "simulate"]
        assert _run(tmp_path, *args) == 0
        assert len(read_frame(tmp_path / "series.csv")) == 513


class TestErrors:
    """Test exit codes"""

    def test_missing_config(self, tmp_path, capsys):
        assert _run(tmp_path, "--config", str(tmp_path / "absent.toml"), "plan") == 2
        error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert error["error"]["code"] == "CONFIG_ERROR"

    def test_invalid_override(self, tmp_path):
        assert _run(tmp_path, "--set", "scheme.bogus=1", "simulate") == 2
        assert _run(tmp_path, "--set", "scheme.n", "simulate") == 2

    def test_table2_needs_large_n(self, tmp_path):
        """Test that block size 4096 above n = 1024 is a configuration error"""
        assert _run(tmp_path, "--set", "scheme.n=1024", "bench", "table2") == 2
        assert not (tmp_path / "table2.csv").exists()

    def test_invalid_workers(self, tmp_path):
        assert _run(tmp_path, "--workers", "0", "plan") == 2

    def test_adapt_needs_three_dimensions(self, tmp_path):
        assert _run(tmp_path, "--set", "model.dimension=1", "adapt") == 2


class TestBench:
    """Test a reduced bench run"""

    ARGS = ("--set", "scheme.n=2048", "--set", "replications=3")

    def test_table1_outputs(self, tmp_path):
        assert _run(tmp_path, *self.ARGS, "bench", "table1") == 0
        frame = read_frame(tmp_path / "table1.csv")
        assert frame["estimator"].tolist() == ["preaveraged", "debiased"]
        manifest = json.loads((tmp_path / "bench_table1_manifest.json").read_text())
        assert "generated_at" not in manifest
        assert manifest["command"] == "bench table1"
        assert manifest["config"]["replications"] == 3

    def test_worker_count_does_not_change_bytes(self, tmp_path):
        serial, parallel = tmp_path / "serial", tmp_path / "parallel"
        assert _run(serial, "--workers", "1", *self.ARGS, "bench", "table1") == 0
        assert _run(parallel, "--workers", "2", *self.ARGS, "bench", "table1") == 0
        assert (serial / "table1.csv").read_bytes() == (parallel / "table1.csv").read_bytes()


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert capsys.readouterr().out.startswith("invdens ")
