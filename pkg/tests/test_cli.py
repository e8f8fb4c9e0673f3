import json
import subprocess
import sys

import pytest

from ivaegan.cli import main
from ivaegan.report import read_csv

FAST = ["--set", "syn_samples_per_class=30", "--set", "hidden=16", "--set", "n_pre=2", "--set", "n_r=2",
        "--set", "n_g=2", "--set", "n_clf=3", "--set", "n_syn=20", "--set", "ape_n_fit=200",
        "--set", "ape_mc=500", "--set", "cpe_n_anchor=20"]


def run(cmd, out, *extra):
    return main([cmd, "--out", str(out), *FAST, *extra])


def _error_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    return json.loads(err[-1])


def test_all_then_reports(tmp_path, capsys):
    assert run("all", tmp_path) == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["status"] == "ok" and 0.0 <= summary["T1"] <= 1.0
    for name in ("dataset.ivgn", "ver.ivgn", "regressor.ivgn", "generator.ivgn", "eval.json", "confusion.csv",
                 "confusion.png", "per_class.png", "ver_traces.csv", "ver_traces.png", "config.txt"):
        assert (tmp_path / name).exists(), name
    ev = json.loads((tmp_path / "eval.json").read_text())
    fp = ev["fingerprint"]
    assert ev["seed"] == 0 and len(fp) > 0
    assert (tmp_path / "confusion.csv").read_text().startswith(f"# fingerprint={fp} seed=0")

    assert run("ape", tmp_path) == 0
    rows = read_csv(tmp_path / "ape.csv")
    assert {r["source"] for r in rows} == {"generator", "oracle"}
    assert (tmp_path / "ape.png").exists()

    assert run("chain", tmp_path, "--grid", "uniform,gt") == 0
    assert len(read_csv(tmp_path / "chain.csv")) == 4 and (tmp_path / "chain.png").exists()

    assert run("sweep", tmp_path, "--kind", "lambda_u2", "--set", "sweep_lambda_u2=0,0.09") == 0
    assert [float(r["lambda_u2"]) for r in read_csv(tmp_path / "sweep_lambda_u2.csv")] == [0.0, 0.09]
    assert run("sweep", tmp_path, "--priors", "gt,uniform") == 0
    rows = read_csv(tmp_path / "sweep_prior.csv")
    assert rows[0]["prior"] == "gt" and float(rows[0]["PB"]) == 0.0
    assert (tmp_path / "sweep_prior.png").exists()


def test_all_is_deterministic(tmp_path):
    assert run("all", tmp_path / "a") == 0
    assert run("all", tmp_path / "b") == 0
    for name in ("eval.json", "confusion.csv", "dataset.ivgn", "generator.ivgn"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_missing_upstream_exits_3(tmp_path, capsys):
    assert run("train-regressor", tmp_path) == 3
    err = _error_line(capsys)
    assert err["status"] == "error" and err["kind"] == "DependencyError"


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["synth-data", "--out", str(tmp_path), "--set", "no_such_key=1"]) == 2
    assert "no_such_key" in _error_line(capsys)["message"]
    assert main(["synth-data", "--out", str(tmp_path), "--set", "n_g=-4"]) == 2
    assert main(["synth-data", "--out", str(tmp_path), "--config", str(tmp_path / "missing.txt")]) == 2


def test_import_csv(tmp_path, capsys):
    samples = tmp_path / "s.csv"
    sem = tmp_path / "a.csv"
    samples.write_text("".join(f"{i % 3 + 0.1 * i},{-i},{i % 3}\n" for i in range(12)))
    sem.write_text("0,1,0\n1,0,1\n2,1,1\n")
    out = tmp_path / "run"
    assert main(["import-csv", "--out", str(out), "--samples", str(samples), "--semantics", str(sem),
                 "--unseen", "2"]) == 0
    assert (out / "dataset.ivgn").exists()


def test_console_script(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ivaegan.cli", "synth-data", "--out", str(tmp_path), *FAST],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["status"] == "ok"


@pytest.mark.parametrize("cmd", ["pretrain", "evaluate", "ape"])
def test_each_stage_needs_dataset(tmp_path, cmd):
    assert run(cmd, tmp_path) == 3
