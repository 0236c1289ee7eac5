"""Command-line interface: config resolution, commands, manifests."""

import json
import os
import subprocess

import click
import numpy as np
import pytest
from click.testing import CliRunner

from iswerm_lab import checks, cli
from iswerm_lab.data import load_jsonl, validate_dataset

ENV_SPEC = {"kind": "discrete", "support": [[0.0], [1.0]],
            "probs": [0.5, 0.5], "mu": [[0.0, 1.0], [1.0, 0.0]],
            "noise_sd": 0.5}


def write_config(tmp_path, extra=None, name="cfg.json"):
    cfg = {"env": ENV_SPEC}
    if extra:
        cfg.update(extra)
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def invoke(args):
    return CliRunner().invoke(cli.main, args, catch_exceptions=False)


# ---------------------------------------------------------------------------
# config machinery
# ---------------------------------------------------------------------------


def test_explain_config_lists_schema():
    res = invoke(["--explain-config"])
    assert res.exit_code == 0
    assert "rate_sweep.betas" in res.output
    assert "REQUIRED" in res.output


def test_resolve_config_defaults_and_validation():
    cfg = cli.resolve_config({})
    assert cfg["schedule"]["beta"] == pytest.approx(1 / 3)
    assert cfg["env"] is None  # REQUIRED sentinel resolves to None
    with pytest.raises(click.ClickException, match="unknown config key"):
        cli.resolve_config({"turbo": True})
    with pytest.raises(click.ClickException, match="expected an integer"):
        cli.resolve_config({"seed": "zero"})
    with pytest.raises(click.ClickException, match="expected a list"):
        cli.resolve_config({"rate_sweep": {"betas": 0.5}})
    with pytest.raises(click.ClickException, match="expected an object"):
        cli.resolve_config({"env": "linear"})


def test_config_hash_key_order_invariant():
    a = cli.config_hash({"b": 1, "a": {"y": 2, "x": 3}})
    b = cli.config_hash({"a": {"x": 3, "y": 2}, "b": 1})
    assert a == b
    assert a != cli.config_hash({"a": {"x": 3, "y": 2}, "b": 2})


def test_bad_config_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{nope")
    res = CliRunner().invoke(cli.main, ["--config", str(p), "--out-dir",
                                        str(tmp_path), "collect"])
    assert res.exit_code != 0
    assert "bad config JSON" in res.output


def test_collect_requires_env(tmp_path):
    res = CliRunner().invoke(cli.main, ["--out-dir", str(tmp_path), "collect"])
    assert res.exit_code != 0
    assert "'env' spec" in res.output


# ---------------------------------------------------------------------------
# collect / train / learn-policy / evaluate round trip
# ---------------------------------------------------------------------------


def test_collect_writes_valid_dataset(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "run"
    res = invoke(["--config", cfg, "--out-dir", str(out), "--seed", "5",
                  "collect", "-T", "300"])
    assert res.exit_code == 0, res.output
    ds = load_jsonl(str(out / "data.jsonl"))
    assert ds.T == 300 and validate_dataset(ds) == []
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "collect"
    assert manifest["seeds"]["master_seed"] == 5
    assert "data.jsonl" in manifest["artifacts"]
    assert manifest["config_hash"] == cli.config_hash(manifest["config"])


def test_train_then_evaluate(tmp_path):
    cfg = write_config(tmp_path)
    out = str(tmp_path / "run")
    invoke(["--config", cfg, "--out-dir", out, "collect", "-T", "400"])
    res = invoke(["--config", cfg, "--out-dir", out, "train",
                  "--data", os.path.join(out, "data.jsonl"),
                  "--model", "wls", "--scheme", "iswerm"])
    assert res.exit_code == 0, res.output
    blob = json.loads((tmp_path / "run" / "model.json").read_text())
    assert blob["scheme"] == "iswerm" and blob["model"]["kind"] == "linear"

    res = invoke(["--config", cfg, "--out-dir", out, "evaluate",
                  "--model", os.path.join(out, "model.json"),
                  "--n-test", "5000"])
    assert res.exit_code == 0, res.output
    ev = json.loads((tmp_path / "run" / "eval.json").read_text())
    assert ev["risk_mc"] > 0 and ev["excess_risk_exact"] is True
    # wls on the 2-context env is well-specified: excess risk is small
    assert 0 <= ev["excess_risk"] < 0.5


def test_learn_policy_tree_class(tmp_path):
    cfg = write_config(tmp_path)
    out = str(tmp_path / "run")
    invoke(["--config", cfg, "--out-dir", out, "collect", "-T", "500"])
    res = invoke(["--config", cfg, "--out-dir", out, "learn-policy",
                  "--data", os.path.join(out, "data.jsonl"),
                  "--class", "tree:1"])
    assert res.exit_code == 0, res.output
    blob = json.loads((tmp_path / "run" / "policy.json").read_text())
    assert blob["class_size"] > 0 and "policy" in blob


def test_evaluate_needs_exactly_one_artifact(tmp_path):
    cfg = write_config(tmp_path)
    res = CliRunner().invoke(cli.main, ["--config", cfg, "--out-dir",
                                        str(tmp_path), "evaluate"])
    assert res.exit_code != 0
    assert "exactly one" in res.output


# ---------------------------------------------------------------------------
# theory-check
# ---------------------------------------------------------------------------


def test_theory_check_lemma2_passes(tmp_path):
    cfg = write_config(tmp_path, {"theory": {"n_f": 200}})
    res = invoke(["--config", cfg, "--out-dir", str(tmp_path / "t"),
                  "theory-check", "--suite", "lemma2"])
    assert res.exit_code == 0, res.output
    report = json.loads((tmp_path / "t" / "report.json").read_text())
    assert all(r["passed"] for r in report)
    assert res.output.count("[PASS]") == len(report)


def test_theory_check_unbiasedness_includes_negative_control(tmp_path):
    cfg = write_config(tmp_path)
    res = invoke(["--config", cfg, "--out-dir", str(tmp_path / "t"),
                  "theory-check", "--suite", "unbiasedness"])
    assert res.exit_code == 0, res.output
    report = json.loads((tmp_path / "t" / "report.json").read_text())
    names = [r["name"] for r in report]
    assert "is_unbiasedness_negative_control" in names
    assert all(r["passed"] for r in report)


def test_theory_check_fails_nonzero(tmp_path, monkeypatch):
    def fake_suite(suite, cfg, seed):
        return [checks.CheckReport(name="forced", passed=False,
                                   statistic=2.0, threshold=1.0)]

    monkeypatch.setattr(cli, "run_theory_suite", fake_suite)
    cfg = write_config(tmp_path)
    res = CliRunner().invoke(cli.main, ["--config", cfg, "--out-dir",
                                        str(tmp_path / "t"), "theory-check",
                                        "--suite", "lemma2"])
    assert res.exit_code == 1
    assert "[FAIL] forced" in res.output


# ---------------------------------------------------------------------------
# rate-sweep and bandit-bench smoke
# ---------------------------------------------------------------------------


def test_rate_sweep_smoke(tmp_path):
    cfg = write_config(tmp_path, {"rate_sweep": {
        "betas": [0.0], "T_grid": [64, 128, 256], "n_reps": 3,
        "n_boot": 20,
        "policy_class": {"kind": "all_assignments", "fixed": {}}}})
    out = tmp_path / "rs"
    res = invoke(["--config", cfg, "--out-dir", str(out), "rate-sweep"])
    assert res.exit_code == 0, res.output
    with open(out / "rates.csv") as fh:
        lines = fh.read().splitlines()
    assert lines[0] == "beta,slope,lo,hi,target,on_target"
    assert len(lines) == 2
    dat = np.loadtxt(out / "regret_beta_0.dat")
    assert dat.shape == (3, 3)


def test_bandit_bench_smoke_and_manifest_rerun(tmp_path):
    cfg = write_config(tmp_path, {"bench": {
        "T": 256, "T_test": 200, "n_reps": 2,
        "schemes": ["unweighted", "iswerm"], "models": ["wls"]}})
    out1, out2 = tmp_path / "b1", tmp_path / "b2"
    res = invoke(["--config", cfg, "--out-dir", str(out1), "bandit-bench"])
    assert res.exit_code == 0, res.output
    for name in ("bench_reps.csv", "bench_agg.csv", "bench_pairwise.csv",
                 "bench_wls.dat", "plot_bench.py", "manifest.json"):
        assert (out1 / name).exists(), name
    with open(out1 / "bench_pairwise.csv") as fh:
        rows = fh.read().splitlines()
    assert any(",baseline" in r for r in rows[1:])

    res = invoke(["--from-manifest", str(out1 / "manifest.json"),
                  "--out-dir", str(out2), "bandit-bench"])
    assert res.exit_code == 0, res.output
    m1 = json.loads((out1 / "manifest.json").read_text())
    m2 = json.loads((out2 / "manifest.json").read_text())
    assert m1["config_hash"] == m2["config_hash"]
    for name in m1["artifacts"]:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


def test_from_manifest_wrong_command(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "c"
    invoke(["--config", cfg, "--out-dir", str(out), "collect", "-T", "64"])
    res = CliRunner().invoke(cli.main, [
        "--from-manifest", str(out / "manifest.json"),
        "--out-dir", str(tmp_path / "d"), "theory-check"])
    assert res.exit_code != 0
    assert "records command" in res.output


# ---------------------------------------------------------------------------
# ingest command and installed entry point
# ---------------------------------------------------------------------------


def test_ingest_command(tmp_path):
    csv_path = tmp_path / "toy.csv"
    csv_path.write_text("x1,x2,label\n1,4,a\n2,5,b\n3,6,a\n")
    out = tmp_path / "ing"
    res = invoke(["--out-dir", str(out), "ingest", "--data", str(csv_path),
                  "--label-col", "label"])
    assert res.exit_code == 0, res.output
    blob = np.load(out / "table.npz")
    assert blob["features"].shape == (3, 2)
    assert blob["labels"].tolist() == [0, 1, 0]
    summary = json.loads((out / "table_summary.json").read_text())
    assert summary["num_classes"] == 2


def test_installed_entry_point_runs():
    proc = subprocess.run(["iswerm-lab", "--version"], capture_output=True,
                          text=True)
    assert proc.returncode == 0
    assert "iswerm-lab" in proc.stdout or proc.stdout.strip()
