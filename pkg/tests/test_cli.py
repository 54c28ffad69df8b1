from __future__ import annotations

import functools
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from pfid import cli
from pfid.config import OUTPUT_ENV, load_config
from pfid.errors import ConfigError
from pfid.harness import step_cost_scaling

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def variant(tmp_path: Path, name: str, *edits: tuple[str, str]) -> Path:
    text = (CONFIGS / name).read_text()
    for old, new in edits:
        assert old in text, old
        text = text.replace(old, new)
    path = tmp_path / f"cfg_{abs(hash(edits))}.ini"
    path.write_text(text)
    return path


@pytest.fixture(autouse=True)
def no_env_override(monkeypatch):
    monkeypatch.delenv(OUTPUT_ENV, raising=False)


class TestConfig:
    def test_examples_load(self):
        cfg = load_config(CONFIGS / "example1.ini")
        assert cfg.spec.estimator.kind == "rpfi" and cfg.spec.runs == 300
        assert load_config(CONFIGS / "example2.ini").spec.inputs.mode == "iid_uniform"

    def test_unknown_key_has_line(self, tmp_path):
        path = variant(tmp_path, "example2.ini", ("p0 = 1\n", "p0 = 1\nalpha_k_typo = 3\n"))
        with pytest.raises(ConfigError) as info:
            load_config(path)
        assert "alpha_k_typo" in str(info.value)
        lines = path.read_text().splitlines()
        assert lines[info.value.line - 1].startswith("alpha_k_typo")

    def test_bad_number_has_line(self, tmp_path):
        path = variant(tmp_path, "example1.ini", ("runs = 300", "runs = many"))
        with pytest.raises(ConfigError) as info:
            load_config(path)
        assert path.read_text().splitlines()[info.value.line - 1] == "runs = many"

    def test_duplicate_key(self, tmp_path):
        path = variant(tmp_path, "example1.ini", ("beta = 0.02", "beta = 0.02\nbeta = 0.03"))
        with pytest.raises(ConfigError) as info:
            load_config(path)
        assert info.value.line is not None

    def test_missing_section(self, tmp_path):
        path = variant(tmp_path, "example1.ini", ("[experiment]", "[experimentz]"))
        with pytest.raises(ConfigError, match="experimentz"):
            load_config(path)

    def test_missing_inputs_file(self, tmp_path):
        path = variant(tmp_path, "example2.ini", ("mode = iid_uniform\nlo = 1\nhi = 3", "mode = explicit\nfile = nope.csv"))
        with pytest.raises(ConfigError, match="nope.csv"):
            load_config(path)

    def test_explicit_inputs_file(self, tmp_path):
        (tmp_path / "in.csv").write_text("phi_1\n1.5\n2.5\n")
        path = variant(tmp_path, "example2.ini", ("mode = iid_uniform\nlo = 1\nhi = 3", "mode = explicit\nfile = in.csv"),
                       ("horizon = 10000", "horizon = 2"))
        assert load_config(path).spec.input_sequence().tolist() == [[1.5], [2.5]]

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        path = variant(tmp_path, "example1.ini", ("dir = ../results/example1", f"dir = {blocker}/sub"))
        with pytest.raises(ConfigError):
            load_config(path)

    def test_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
        assert load_config(CONFIGS / "example1.ini").output_dir == tmp_path / "env"


class TestSimulate:
    def test_example2_runs(self, tmp_path):
        code = cli.main(["simulate", "--config", str(CONFIGS / "example2.ini"), "--runs", "20",
                         "--horizon", "200", "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "results.csv").read_text().splitlines()[0] == "k,mse,stderr,cr_trace,efficiency_ratio"

    def test_overrides_in_metadata(self, tmp_path):
        assert cli.main(["simulate", "--config", str(CONFIGS / "example2.ini"), "--runs", "1", "--horizon", "10",
                         "--out", str(tmp_path)]) == 0
        rows = [json.loads(x) for x in (tmp_path / "runs.jsonl").read_text().splitlines()]
        assert len(rows) == 1 and rows[0]["horizon"] == 10

    def test_unknown_key_exit(self, tmp_path, capsys):
        path = variant(tmp_path, "example2.ini", ("p0 = 1\n", "p0 = 1\nalpha_k_typo = 3\n"))
        assert cli.main(["simulate", "--config", str(path)]) == 2
        assert "alpha_k_typo" in capsys.readouterr().err

    def test_repeatable_bytes(self, tmp_path):
        args = ["simulate", "--config", str(CONFIGS / "example1.ini"), "--runs", "6", "--horizon", "500", "--seed", "3"]
        assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
        assert cli.main(args + ["--out", str(tmp_path / "b"), "--workers", "2"]) == 0
        assert (tmp_path / "a/results.csv").read_bytes() == (tmp_path / "b/results.csv").read_bytes()

    def test_assumption_violation_exit(self, tmp_path):
        path = variant(tmp_path, "example1.ini", ("theta = 0.1, 0.5, 0.9", "theta = 2, 0, 0"),
                       ("theta_bar = 1.7320508075688772", "theta_bar = 1"))
        assert cli.main(["simulate", "--config", str(path), "--out", str(tmp_path)]) == 3

    def test_bad_override(self):
        assert cli.main(["simulate", "--config", str(CONFIGS / "example1.ini"), "--runs", "0"]) == 2


class TestCheck:
    def test_example1_passes(self, capsys):
        assert cli.main(["check", "--config", str(CONFIGS / "example1.ini")]) == 0
        assert "delta^2 = 1.000000" in capsys.readouterr().out

    def test_parameter_bound(self, tmp_path, capsys):
        path = variant(tmp_path, "example1.ini", ("theta = 0.1, 0.5, 0.9", "theta = 2, 0, 0"),
                       ("theta_bar = 1.7320508075688772", "theta_bar = 1"))
        assert cli.main(["check", "--config", str(path)]) == 3
        assert "FAIL parameter bound" in capsys.readouterr().out

    def test_rank_deficient(self, tmp_path, capsys):
        path = variant(tmp_path, "example1.ini", ("vectors = 2 0 1; 1 2 0; 0 1 2", "vectors = 1 0 0; 0 1 0; 1 1 0"))
        assert cli.main(["check", "--config", str(path)]) == 3
        assert "FAIL persistent excitation" in capsys.readouterr().out

    def test_input_bound(self, tmp_path, capsys):
        path = variant(tmp_path, "example1.ini", ("phi_bar = 2.23606797749979", "phi_bar = 2"))
        assert cli.main(["check", "--config", str(path)]) == 3
        assert "input bound" in capsys.readouterr().out


class TestReproduce:
    def test_example1(self, tmp_path):
        assert cli.main(["reproduce", "1", "--runs", "4", "--horizon", "3000", "--out", str(tmp_path)]) == 0
        assert {"trajectory.csv", "mse_rpfi.csv", "runs_mse_rpfi.jsonl", "metadata.json"} <= {p.name for p in tmp_path.iterdir()}
        meta = json.loads((tmp_path / "metadata.json").read_text())
        assert meta["pinned"]["theta"] == {"value": [0.1, 0.5, 0.9], "source": "published example"}

    def test_example2(self, tmp_path):
        assert cli.main(["reproduce", "2", "--runs", "4", "--horizon", "100", "--out", str(tmp_path)]) == 0
        for kind in ("impf", "rpfi", "projection_baseline"):
            assert (tmp_path / f"efficiency_{kind}.csv").exists()

    def test_example3(self, tmp_path, monkeypatch):
        monkeypatch.setattr(cli, "TIMING_CAP", 3000)
        monkeypatch.setattr(cli, "TIMING_THRESHOLD", 0.05)
        assert cli.main(["reproduce", "3", "--runs", "4", "--horizon", "300", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "variance_vs_cr.csv").exists()
        lines = (tmp_path / "timing.csv").read_text().splitlines()
        assert lines[0] == "estimator,repeat_1,repeat_2,repeat_3,average" and len(lines) == 4

    def test_env_output_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "envout"))
        assert cli.main(["reproduce", "2", "--runs", "2", "--horizon", "20"]) == 0
        assert (tmp_path / "envout" / "metadata.json").exists()


def test_bench(tmp_path, monkeypatch):
    monkeypatch.setattr(cli, "step_cost_scaling", functools.partial(step_cost_scaling, batch=8, steps=5, repeats=1))
    assert cli.main(["bench", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "scaling.csv").read_text().splitlines()[0] == "n,rpfi_seconds_per_step,impf_seconds_per_step"


def test_console_script_installed():
    proc = subprocess.run([sys.executable, "-m", "pfid.cli", "--help"], capture_output=True, text=True,
                          env={**os.environ})
    assert proc.returncode == 0 and "reproduce" in proc.stdout
