"""Command-line orchestration: collection, training, evaluation, benchmarks.

Every command resolves its effective configuration (schema defaults <-
config file <- command-line flags), runs, writes its artifacts under
``--out-dir``, and finishes with a ``manifest.json`` recording the resolved
config, its hash, the seeds, every artifact path, and per-stage wall-clock.
Re-running a command with ``--from-manifest`` reproduces the artifacts
byte-for-byte (the manifest itself differs only in timings).

Exit status is nonzero iff a stage errored or a theory check failed.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time

import click
import numpy as np

from . import __version__, checks, envs, evaluate, ingest, learners, weights
from ._kernels import BACKEND
from .collect import ExplorationSchedule, GreedySpec, collect
from .data import ReferenceWeight, load_jsonl, save_jsonl, validate_dataset
from .evaluate import ExperimentConfig, _make_gstar, replicate_experiment
from .seeding import stage_rng

# ---------------------------------------------------------------------------
# Config schema
# ---------------------------------------------------------------------------
#
# Each leaf is (type, default, help).  Types: int, float, str, bool, dict
# (opaque, validated downstream), list[int], list[float], list[str].
# A default of REQUIRED means commands that need the key fail without it.

REQUIRED = object()

SCHEMA: dict = {
    "seed": ("int", 0, "master seed; every stage derives child streams from it"),
    "threads": ("int", 1, "worker pool size (ISWERM_LAB_THREADS is the fallback)"),
    "env": ("dict", REQUIRED,
            "environment spec: {kind: linear|quadratic|discrete|classification, ...}"),
    "schedule": {
        "beta": ("float", 1.0 / 3.0, "exploration decay: eps_t = t^(-beta)"),
        "floor": ("float", 0.0, "lower bound on eps_t"),
    },
    "collect": {
        "T": ("int", 1000, "number of logged rounds"),
        "greedy_model": ("str", "linear", "greedy model: linear|tree"),
        "greedy_refit": ("str", "every", "refit cadence: every|doubling"),
    },
    "train": {
        "scheme": ("str", "iswerm", "weight scheme (see `iswerm-lab train --help`)"),
        "model": ("str", "ridge", "outcome model: wls|ridge|lasso|cart"),
        "gstar": ("str", "one", "reference weight: one|uniform|dirac:<arm>"),
        "ridge_lambda": ("float", 0.0, "fixed ridge penalty for model=wls"),
        "lambda_grid": ("list[float]", [0.0001, 0.001, 0.01, 0.1, 1.0],
                        "CV grid for ridge/lasso"),
        "cv_folds": ("int", 4, "contiguous-block CV folds"),
        "max_depth": ("int", 6, "CART depth limit"),
        "min_leaf_weight": ("float", 1.0, "CART minimum leaf weight"),
    },
    "policy": {
        "scheme": ("str", "iswerm", "weight scheme for policy ERM"),
        "gstar": ("str", "one", "reference weight for policy value"),
        "policy_class": ("str", "tree:1",
                         "policy class: tree:<depth> or finite:<json file>"),
        "n_quantiles": ("int", 16, "threshold grid size per feature (tree class)"),
    },
    "evaluate": {
        "n_test": ("int", 100000, "fresh test rounds for Monte Carlo risk"),
        "gstar": ("str", "uniform", "reference weight for reported risk"),
    },
    "bench": {
        "T": ("int", 2000, "rounds per replication"),
        "T_test": ("int", 1000, "fresh test rounds per replication"),
        "n_reps": ("int", 8, "replications"),
        "schemes": ("list[str]", list(weights.SCHEMES), "weight schemes to compare"),
        "models": ("list[str]", ["ridge", "lasso", "cart"], "outcome models"),
        "gstar": ("str", "uniform", "reference weight (uniform = plain test MSE)"),
    },
    "rate_sweep": {
        "betas": ("list[float]", [0.0, 1.0 / 3.0], "exploration exponents"),
        "T_grid": ("list[int]", [512, 1024, 2048, 4096, 8192], "horizons"),
        "n_reps": ("int", 50, "replications per (beta, T)"),
        "scheme": ("str", "iswerm", "weight scheme for the policy learner"),
        "policy_class": ("dict", {"kind": "tree", "depth": 1, "n_quantiles": 8},
                         "policy class spec: {kind: tree|all_assignments|file, ...}"),
        "n_boot": ("int", 500, "bootstrap draws for the slope CI"),
        "drop_smallest": ("bool", True, "exclude smallest T from the slope fit"),
        "slope_tol": ("float", 0.15, "report |slope - target| <= tol as on-target"),
    },
    "theory": {
        "suites": ("list[str]", ["unbiasedness", "lemma2", "lemma3", "supscaling"],
                   "which validator suites `--suite all` runs"),
        "n_f": ("int", 1000, "sampled functions per variance-bound env"),
        "n_policies": ("int", 500, "sampled stochastic policies per margin env"),
        "n_logging": ("int", 20, "random logging sequences for unbiasedness"),
        "sup_T_grid": ("list[int]", [256, 512, 1024, 2048, 4096],
                       "horizons for the process-scaling fit"),
        "sup_n_reps": ("int", 100, "replications per horizon"),
        "sup_betas": ("list[float]", [0.0, 1.0 / 3.0], "exploration exponents"),
        "slope_tol": ("float", 0.1, "tolerance on the fitted process slope"),
    },
}


def _iter_schema(schema=None, prefix=""):
    schema = SCHEMA if schema is None else schema
    for key, val in schema.items():
        path = f"{prefix}{key}"
        if isinstance(val, dict):
            yield from _iter_schema(val, path + ".")
        else:
            yield path, val


def explain_config() -> str:
    lines = ["Configuration file (JSON). Keys, types, and defaults:", ""]
    for path, (typ, default, help_text) in _iter_schema():
        d = "REQUIRED" if default is REQUIRED else json.dumps(default)
        lines.append(f"  {path:28s} {typ:12s} default={d}")
        lines.append(f"  {'':28s} {help_text}")
    lines.append("")
    lines.append("Command-line flags override config values; config values "
                 "override defaults.")
    return "\n".join(lines)


def _check_type(path: str, typ: str, value):
    def fail(expected):
        raise click.ClickException(
            f"config key {path!r}: expected {expected}, got {value!r}")

    if typ == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            fail("an integer")
    elif typ == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            fail("a number")
        value = float(value)
    elif typ == "str":
        if not isinstance(value, str):
            fail("a string")
    elif typ == "bool":
        if not isinstance(value, bool):
            fail("a boolean")
    elif typ == "dict":
        if not isinstance(value, dict):
            fail("an object")
    elif typ.startswith("list["):
        inner = typ[5:-1]
        if not isinstance(value, list):
            fail("a list")
        value = [_check_type(f"{path}[{i}]", inner, v)
                 for i, v in enumerate(value)]
    else:  # pragma: no cover - schema author error
        raise RuntimeError(f"bad schema type {typ}")
    return value


def resolve_config(user: dict, schema=None, prefix="") -> dict:
    """Validate a config dict against the schema and fill defaults.

    Unknown keys are rejected; REQUIRED keys resolve to None here and are
    enforced by the commands that need them.
    """
    schema = SCHEMA if schema is None else schema
    if not isinstance(user, dict):
        raise click.ClickException(f"config section {prefix or '<root>'} "
                                   f"must be an object")
    for key in user:
        if key not in schema:
            raise click.ClickException(f"unknown config key: {prefix}{key}")
    out = {}
    for key, spec in schema.items():
        path = f"{prefix}{key}"
        if isinstance(spec, dict):
            out[key] = resolve_config(user.get(key, {}), spec, path + ".")
        else:
            typ, default, _ = spec
            if key in user:
                out[key] = _check_type(path, typ, user[key])
            else:
                out[key] = None if default is REQUIRED else default
    return out


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Run context and manifest
# ---------------------------------------------------------------------------


class Run:
    """Shared state for one CLI invocation: config, out-dir, timers."""

    def __init__(self, command: str, ctx_obj: dict, overrides: dict):
        self.command = command
        self.out_dir = ctx_obj["out_dir"]
        os.makedirs(self.out_dir, exist_ok=True)
        manifest_path = ctx_obj.get("from_manifest")
        if manifest_path:
            with open(manifest_path, encoding="utf-8") as handle:
                manifest = json.load(handle)
            if manifest.get("command") != command:
                raise click.ClickException(
                    f"manifest records command {manifest.get('command')!r}, "
                    f"not {command!r}")
            self.config = resolve_config(manifest["config"])
        else:
            user = {}
            if ctx_obj.get("config_path"):
                with open(ctx_obj["config_path"], encoding="utf-8") as handle:
                    try:
                        user = json.load(handle)
                    except json.JSONDecodeError as exc:
                        raise click.ClickException(f"bad config JSON: {exc}")
            self.config = resolve_config(user)
            if ctx_obj.get("seed") is not None:
                self.config["seed"] = ctx_obj["seed"]
            for dotted, value in overrides.items():
                if value is None:
                    continue
                node = self.config
                *head, leaf = dotted.split(".")
                for part in head:
                    node = node[part]
                node[leaf] = value
        if ctx_obj.get("threads") is not None:
            self.config["threads"] = ctx_obj["threads"]
        elif os.environ.get("ISWERM_LAB_THREADS"):
            self.config["threads"] = int(os.environ["ISWERM_LAB_THREADS"])
        self.artifacts: list[str] = []
        self.wall_clock: dict[str, float] = {}

    @property
    def seed(self) -> int:
        return int(self.config["seed"])

    @property
    def threads(self) -> int:
        return int(self.config["threads"])

    def path(self, name: str) -> str:
        p = os.path.join(self.out_dir, name)
        self.artifacts.append(p)
        return p

    def stage(self, name: str):
        run = self

        class _Timer:
            def __enter__(self):
                self.t0 = time.perf_counter()
                return self

            def __exit__(self, *exc):
                run.wall_clock[name] = run.wall_clock.get(name, 0.0) + \
                    time.perf_counter() - self.t0
                return False

        return _Timer()

    def env(self):
        if self.config["env"] is None:
            raise click.ClickException(
                "this command needs an 'env' spec in the config file")
        return envs.build_env(self.config["env"])

    def finish(self) -> str:
        manifest = {
            "tool_version": __version__,
            "kernel_backend": BACKEND,
            "command": self.command,
            "config": self.config,
            "config_hash": config_hash(self.config),
            "seeds": {"master_seed": self.seed},
            "artifacts": [os.path.basename(p) for p in self.artifacts],
            "wall_clock_sec": {k: round(v, 6)
                               for k, v in self.wall_clock.items()},
        }
        path = os.path.join(self.out_dir, "manifest.json")
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(manifest, handle, indent=2, sort_keys=True)
            handle.write("\n")
        return path


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(obj, handle, indent=2, sort_keys=True)
        handle.write("\n")


# ---------------------------------------------------------------------------
# Group and global options
# ---------------------------------------------------------------------------


def _explain_cb(ctx, param, value):
    if value:
        click.echo(explain_config())
        ctx.exit(0)


@click.group()
@click.option("--seed", type=int, default=None, help="Master seed (overrides config).")
@click.option("--threads", type=int, default=None,
              help="Worker pool size (fallback: ISWERM_LAB_THREADS, then 1).")
@click.option("--out-dir", type=click.Path(file_okay=False), default=".",
              show_default=True, help="Directory for artifacts and manifest.")
@click.option("--config", "config_path",
              type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON config file (see --explain-config).")
@click.option("--from-manifest", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Re-run with the exact config of a previous "
              "run's manifest.json.")
@click.option("--explain-config", is_flag=True, callback=_explain_cb,
              expose_value=False, is_eager=True,
              help="Print the config schema with defaults and exit.")
@click.version_option(version=__version__)
@click.pass_context
def main(ctx, seed, threads, out_dir, config_path, from_manifest):
    """Importance-sampling-weighted ERM on adaptively collected bandit data."""
    ctx.obj = {"seed": seed, "threads": threads, "out_dir": out_dir,
               "config_path": config_path, "from_manifest": from_manifest}


# ---------------------------------------------------------------------------
# collect
# ---------------------------------------------------------------------------


@main.command("collect")
@click.option("-T", "--rounds", "T", type=int, default=None,
              help="Number of logged rounds.")
@click.option("--beta", type=float, default=None, help="Exploration exponent.")
@click.option("--floor", type=float, default=None, help="Exploration floor.")
@click.option("--greedy-model", type=click.Choice(["linear", "tree"]),
              default=None)
@click.option("--greedy-refit", type=click.Choice(["every", "doubling"]),
              default=None)
@click.option("--out", "out_name", default="data.jsonl", show_default=True,
              help="Dataset file name inside --out-dir.")
@click.pass_context
def cmd_collect(ctx, T, beta, floor, greedy_model, greedy_refit, out_name):
    """Run one eps-greedy collection pass and write the logged dataset."""
    run = Run("collect", ctx.obj, {
        "collect.T": T, "schedule.beta": beta, "schedule.floor": floor,
        "collect.greedy_model": greedy_model,
        "collect.greedy_refit": greedy_refit,
    })
    env = run.env()
    sched = ExplorationSchedule(beta=run.config["schedule"]["beta"],
                                floor=run.config["schedule"]["floor"])
    greedy = GreedySpec(model=run.config["collect"]["greedy_model"],
                        refit=run.config["collect"]["greedy_refit"])
    with run.stage("collect"):
        ds = collect(env, sched, run.config["collect"]["T"],
                     stage_rng(run.seed, 0, "collect"), greedy=greedy)
    problems = validate_dataset(ds)
    if problems:
        raise click.ClickException("collected dataset failed validation: "
                                   + "; ".join(problems[:5]))
    path = run.path(out_name)
    save_jsonl(ds, path)
    run.finish()
    click.echo(f"wrote {ds.T} rounds (K={ds.K}, d={ds.d}, beta={ds.beta}) "
               f"to {path}")


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


@main.command("train")
@click.option("--data", "data_path", type=click.Path(exists=True),
              required=True, help="Logged dataset (JSONL).")
@click.option("--scheme", type=click.Choice(weights.SCHEMES), default=None)
@click.option("--model", type=click.Choice(["wls", "ridge", "lasso", "cart"]),
              default=None)
@click.option("--gstar", default=None, help="one | uniform | dirac:<arm>")
@click.option("--cv-folds", type=int, default=None)
@click.option("--lambda-grid", default=None,
              help="Comma-separated penalty grid, e.g. 0.001,0.01,0.1")
@click.option("--ridge-lambda", type=float, default=None)
@click.option("--max-depth", type=int, default=None)
@click.option("--min-leaf-weight", type=float, default=None)
@click.option("--out", "out_name", default="model.json", show_default=True)
@click.pass_context
def cmd_train(ctx, data_path, scheme, model, gstar, cv_folds, lambda_grid,
              ridge_lambda, max_depth, min_leaf_weight, out_name):
    """Fit a weighted outcome model on a logged dataset."""
    grid = None
    if lambda_grid is not None:
        grid = [float(v) for v in lambda_grid.split(",") if v.strip()]
    run = Run("train", ctx.obj, {
        "train.scheme": scheme, "train.model": model, "train.gstar": gstar,
        "train.cv_folds": cv_folds, "train.lambda_grid": grid,
        "train.ridge_lambda": ridge_lambda, "train.max_depth": max_depth,
        "train.min_leaf_weight": min_leaf_weight,
    })
    tcfg = run.config["train"]
    with run.stage("load"):
        ds = load_jsonl(data_path)
        problems = validate_dataset(ds)
        if problems:
            raise click.ClickException("dataset failed validation: "
                                       + "; ".join(problems[:5]))
    with run.stage("fit"):
        w = weights.compute_weights(tcfg["scheme"], ds, _make_gstar(tcfg["gstar"]))
        exp_cfg = ExperimentConfig(
            env={"kind": "discrete", "support": [[0.0]], "probs": [1.0],
                 "mu": [[0.0] * ds.K]},  # placeholder; only options are read
            beta=ds.beta, T_grid=(ds.T,), n_reps=1, master_seed=run.seed,
            model=tcfg["model"], lambda_grid=tuple(tcfg["lambda_grid"]),
            cv_folds=tcfg["cv_folds"], ridge_lambda=tcfg["ridge_lambda"],
            max_depth=tcfg["max_depth"],
            min_leaf_weight=tcfg["min_leaf_weight"])
        fitted = evaluate.fit_outcome_model(ds, w, tcfg["model"], exp_cfg)
    payload = {"model": learners.model_to_dict(fitted),
               "scheme": tcfg["scheme"], "gstar": tcfg["gstar"],
               "data": os.path.basename(data_path),
               "T": ds.T, "K": ds.K, "d": ds.d, "beta": ds.beta}
    path = run.path(out_name)
    _write_json(path, payload)
    run.finish()
    click.echo(f"fitted {tcfg['model']} with scheme {tcfg['scheme']} "
               f"on {ds.T} rounds -> {path}")


# ---------------------------------------------------------------------------
# learn-policy
# ---------------------------------------------------------------------------


def _build_policy_class(spec: str, ds, n_quantiles: int):
    if spec.startswith("tree:"):
        depth = int(spec.split(":", 1)[1])
        return learners.TreePolicyClass.from_data(ds.X, ds.K, depth=depth,
                                                  n_quantiles=n_quantiles)
    if spec.startswith("finite:"):
        path = spec.split(":", 1)[1]
        with open(path, encoding="utf-8") as handle:
            blob = json.load(handle)
        anchors = np.asarray(blob["anchors"], dtype=np.float64)
        members = tuple(
            learners.TablePolicy.from_arrays(anchors, arms)
            for arms in blob["policies"]
        )
        return learners.FinitePolicyClass(members=members)
    raise click.ClickException(
        f"policy class must be tree:<depth> or finite:<file>, got {spec!r}")


@main.command("learn-policy")
@click.option("--data", "data_path", type=click.Path(exists=True),
              required=True, help="Logged dataset (JSONL).")
@click.option("--scheme", type=click.Choice(weights.SCHEMES), default=None)
@click.option("--class", "class_spec", default=None,
              help="tree:<depth> or finite:<json file>")
@click.option("--gstar", default=None)
@click.option("--n-quantiles", type=int, default=None)
@click.option("--out", "out_name", default="policy.json", show_default=True)
@click.pass_context
def cmd_learn_policy(ctx, data_path, scheme, class_spec, gstar, n_quantiles,
                     out_name):
    """Exhaustive weighted policy search over a finite class."""
    run = Run("learn-policy", ctx.obj, {
        "policy.scheme": scheme, "policy.policy_class": class_spec,
        "policy.gstar": gstar, "policy.n_quantiles": n_quantiles,
    })
    pcfg = run.config["policy"]
    with run.stage("load"):
        ds = load_jsonl(data_path)
    with run.stage("search"):
        w = weights.compute_weights(pcfg["scheme"], ds,
                                    _make_gstar(pcfg["gstar"]))
        pclass = _build_policy_class(pcfg["policy_class"], ds,
                                     pcfg["n_quantiles"])
        fit = learners.fit_policy_iswerm(ds, w, pclass)
    payload = {"policy": learners.model_to_dict(fit.policy),
               "index": fit.index, "risk": fit.risk,
               "class": pcfg["policy_class"], "class_size": len(pclass),
               "scheme": pcfg["scheme"]}
    path = run.path(out_name)
    _write_json(path, payload)
    run.finish()
    click.echo(f"searched {len(pclass)} policies; best risk {fit.risk:.6g} "
               f"-> {path}")


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


@main.command("evaluate")
@click.option("--model", "model_path", type=click.Path(exists=True),
              default=None, help="model.json from `train`")
@click.option("--policy", "policy_path", type=click.Path(exists=True),
              default=None, help="policy.json from `learn-policy`")
@click.option("--n-test", type=int, default=None)
@click.option("--gstar", default=None)
@click.option("--out", "out_name", default="eval.json", show_default=True)
@click.pass_context
def cmd_evaluate(ctx, model_path, policy_path, n_test, gstar, out_name):
    """Reference risk (and exact excess risk where possible) of an artifact."""
    if (model_path is None) == (policy_path is None):
        raise click.ClickException("pass exactly one of --model / --policy")
    run = Run("evaluate", ctx.obj, {
        "evaluate.n_test": n_test, "evaluate.gstar": gstar,
    })
    env = run.env()
    ecfg = run.config["evaluate"]
    src = model_path or policy_path
    with open(src, encoding="utf-8") as handle:
        blob = json.load(handle)
    obj = learners.model_from_dict(blob["model" if model_path else "policy"])
    gs = _make_gstar(ecfg["gstar"])
    with run.stage("evaluate"):
        mc = evaluate.reference_risk_mc(obj, env, gs, ecfg["n_test"],
                                        stage_rng(run.seed, 0, "evaluate"))
        result = {"risk_mc": mc.value, "risk_mc_se": mc.se,
                  "n_test": ecfg["n_test"], "gstar": ecfg["gstar"],
                  "artifact": os.path.basename(src)}
        try:
            ex = evaluate.excess_risk(obj, env, gs)
            result["excess_risk"] = ex.value
            result["excess_risk_exact"] = ex.exact
            if ex.se is not None:
                result["excess_risk_se"] = ex.se
        except (TypeError, ValueError):
            pass  # environment without a usable exact/MC route
    path = run.path(out_name)
    _write_json(path, result)
    run.finish()
    click.echo(f"reference risk {mc.value:.6g} (se {mc.se:.2g}) -> {path}")


# ---------------------------------------------------------------------------
# bandit-bench
# ---------------------------------------------------------------------------


def _one_se_verdict(mean_a, se_a, mean_b, se_b) -> str:
    """1-SE comparison of scheme A against baseline B (lower loss = better)."""
    if mean_a + se_a < mean_b - se_b:
        return "clearly_better"
    if mean_a - se_a > mean_b + se_b:
        return "clearly_worse"
    return "indistinguishable"


@main.command("bandit-bench")
@click.option("-T", "--rounds", "T", type=int, default=None)
@click.option("--n-reps", type=int, default=None)
@click.option("--t-test", type=int, default=None)
@click.option("--beta", type=float, default=None)
@click.pass_context
def cmd_bandit_bench(ctx, T, n_reps, t_test, beta):
    """Scheme x model benchmark: collect, train all, score fresh rounds.

    Emits per-rep and aggregated MSE tables plus a pairwise table that
    classifies every scheme against ISWERM with the 1-SE rule.
    """
    run = Run("bandit-bench", ctx.obj, {
        "bench.T": T, "bench.n_reps": n_reps, "bench.T_test": t_test,
        "schedule.beta": beta,
    })
    if run.config["env"] is None:
        raise click.ClickException("bandit-bench needs an 'env' config entry")
    bcfg = run.config["bench"]
    records, aggregate = [], []
    for model in bcfg["models"]:
        exp = ExperimentConfig(
            env=run.config["env"], beta=run.config["schedule"]["beta"],
            floor=run.config["schedule"]["floor"],
            T_grid=(bcfg["T"],), n_reps=bcfg["n_reps"],
            master_seed=run.seed, T_test=bcfg["T_test"],
            schemes=tuple(bcfg["schemes"]), model=model, gstar=bcfg["gstar"],
            lambda_grid=tuple(run.config["train"]["lambda_grid"]),
            cv_folds=run.config["train"]["cv_folds"],
            max_depth=run.config["train"]["max_depth"],
            min_leaf_weight=run.config["train"]["min_leaf_weight"])
        with run.stage(f"bench:{model}"):
            res = replicate_experiment(exp, threads=run.threads)
        records.extend(res.records)
        aggregate.extend(res.aggregate)

    evaluate.write_rep_csv(run.path("bench_reps.csv"), records)
    evaluate.write_agg_csv(run.path("bench_agg.csv"), aggregate)

    # Pairwise classification vs ISWERM per model (1-SE rule).
    pair_path = run.path("bench_pairwise.csv")
    with open(pair_path, "w", encoding="utf-8", newline="") as handle:
        out = csv.writer(handle)
        out.writerow(["model", "scheme", "mean", "se", "vs_iswerm"])
        for model in bcfg["models"]:
            rows = {r[0]: r for r in aggregate if r[1] == model}
            if "iswerm" not in rows:
                continue
            _, _, _, _, base_mean, base_se = rows["iswerm"]
            base_se = base_se or 0.0
            for scheme in bcfg["schemes"]:
                _, _, _, _, mean, se = rows[scheme]
                se = se or 0.0
                verdict = ("baseline" if scheme == "iswerm" else
                           _one_se_verdict(mean, se, base_mean, base_se))
                out.writerow([model, scheme, repr(mean), repr(se), verdict])

    # Plot data: one file per model, x = scheme index (annotated in header).
    data_files = []
    for model in bcfg["models"]:
        rows = [r for r in aggregate if r[1] == model]
        name = f"bench_{model}.dat"
        pth = run.path(name)
        with open(pth, "w", encoding="utf-8") as handle:
            handle.write("# scheme_index mean se | schemes: "
                         + ",".join(r[0] for r in rows) + "\n")
            for i, r in enumerate(rows):
                handle.write(f"{i} {r[4]!r} {(r[5] or 0.0)!r}\n")
        data_files.append(name)
    evaluate.write_plot_script(run.path("plot_bench.py"), data_files,
                               xlabel="scheme", ylabel="test MSE")
    run.finish()
    click.echo(f"bench complete: {len(bcfg['schemes'])} schemes x "
               f"{len(bcfg['models'])} models x {bcfg['n_reps']} reps")


# ---------------------------------------------------------------------------
# rate-sweep
# ---------------------------------------------------------------------------


def _rate_policy_class(spec: dict, env, rng):
    kind = spec.get("kind", "tree")
    if kind == "all_assignments":
        if not isinstance(env, envs.DiscreteEnv):
            raise click.ClickException("all_assignments needs a discrete env")
        fixed = {int(k): int(v) for k, v in spec.get("fixed", {}).items()}
        return learners.FinitePolicyClass.all_assignments(env.support, env.K,
                                                          fixed=fixed)
    if kind == "tree":
        probe = env.presample(max(int(spec.get("probe", 512)), 2), rng)
        return learners.TreePolicyClass.from_data(
            probe.X, env.K, depth=int(spec.get("depth", 1)),
            n_quantiles=int(spec.get("n_quantiles", 8)))
    if kind == "file":
        with open(spec["path"], encoding="utf-8") as handle:
            blob = json.load(handle)
        anchors = np.asarray(blob["anchors"], dtype=np.float64)
        return learners.FinitePolicyClass(members=tuple(
            learners.TablePolicy.from_arrays(anchors, arms)
            for arms in blob["policies"]))
    raise click.ClickException(f"unknown policy class kind {kind!r}")


@main.command("rate-sweep")
@click.option("--n-reps", type=int, default=None)
@click.pass_context
def cmd_rate_sweep(ctx, n_reps):
    """Fit empirical policy-regret exponents across exploration schedules."""
    run = Run("rate-sweep", ctx.obj, {"rate_sweep.n_reps": n_reps})
    env = run.env()
    rcfg = run.config["rate_sweep"]
    if not rcfg["T_grid"]:
        raise click.ClickException("rate_sweep.T_grid must not be empty")
    gstar = ReferenceWeight.constant_one()
    pclass = _rate_policy_class(rcfg["policy_class"], env,
                                stage_rng(run.seed, 0, "class-probe"))

    rate_rows = []
    for beta in rcfg["betas"]:
        sched = ExplorationSchedule(beta=beta)
        regrets = {T: np.empty(rcfg["n_reps"]) for T in rcfg["T_grid"]}
        with run.stage(f"sweep:beta={beta}"):
            for rep in range(rcfg["n_reps"]):
                for T in rcfg["T_grid"]:
                    ds = collect(env, sched, T,
                                 stage_rng(run.seed, rep,
                                           f"collect:beta={beta}:T={T}"))
                    w = weights.compute_weights(rcfg["scheme"], ds, gstar)
                    fit = learners.fit_policy_iswerm(ds, w, pclass)
                    regrets[T][rep] = evaluate.excess_risk(fit.policy, env,
                                                          gstar).value
        means = np.array([regrets[T].mean() for T in rcfg["T_grid"]])
        floor_val = np.finfo(float).tiny
        rate = evaluate.fit_rate(
            np.asarray(rcfg["T_grid"], dtype=float),
            np.maximum(means, floor_val), n_boot=rcfg["n_boot"],
            seed=run.seed, rep_losses=[regrets[T] for T in rcfg["T_grid"]],
            drop_smallest=rcfg["drop_smallest"])
        target = -(1.0 - beta) / 2.0
        rate_rows.append((beta, rate, target))
        name = f"regret_beta_{beta:g}.dat"
        evaluate.write_plot_data(
            run.path(name), rcfg["T_grid"], means,
            [regrets[T].std(ddof=1) / math.sqrt(rcfg["n_reps"])
             if rcfg["n_reps"] > 1 else 0.0 for T in rcfg["T_grid"]])

    path = run.path("rates.csv")
    with open(path, "w", encoding="utf-8", newline="") as handle:
        out = csv.writer(handle)
        out.writerow(["beta", "slope", "lo", "hi", "target", "on_target"])
        for beta, rate, target in rate_rows:
            on = abs(rate.slope - target) <= rcfg["slope_tol"]
            out.writerow([repr(beta), repr(rate.slope), repr(rate.lo),
                          repr(rate.hi), repr(target), on])
    evaluate.write_plot_script(
        run.path("plot_rates.py"),
        [f"regret_beta_{b:g}.dat" for b in rcfg["betas"]],
        xlabel="T", ylabel="expected regret")
    run.finish()
    for beta, rate, target in rate_rows:
        click.echo(f"beta={beta:g}: slope {rate.slope:+.3f} "
                   f"[{rate.lo:+.3f}, {rate.hi:+.3f}], target {target:+.3f}")


# ---------------------------------------------------------------------------
# theory-check
# ---------------------------------------------------------------------------


def _random_discrete_env(rng, S=3, K=3, noiseless=False,
                         scale=1.0) -> envs.DiscreteEnv:
    probs = rng.dirichlet(np.ones(S))
    support = rng.uniform(-1, 1, size=(S, 1))
    mu = rng.uniform(-scale, scale, size=(S, K))
    sd = 0.0 if noiseless else rng.uniform(0.1, 0.5, size=(S, K))
    return envs.DiscreteEnv(support, probs, mu, noise_sd=sd)


def _margin_env(nu: float, S: int = 8, K: int = 3,
                M: float = 1.0) -> envs.DiscreteEnv:
    """Finite env whose gap distribution matches a margin exponent exactly.

    Uniform contexts with gaps ``M (i/S)^(1/nu)`` give Pr{gap <= u} =
    (u/M)^nu at every atom (kappa = 1); for nu = inf all gaps equal M/2.
    The best arm's mean is 0 everywhere, as the margin chain requires.
    """
    support = np.arange(1, S + 1, dtype=np.float64)[:, None]
    probs = np.full(S, 1.0 / S)
    mu = np.zeros((S, K))
    for i in range(S):
        gap = M / 2.0 if math.isinf(nu) else M * ((i + 1) / S) ** (1.0 / nu)
        mu[i, 1] = gap
        for a in range(2, K):
            mu[i, a] = min(M, gap * (1.0 + 0.5 * (a - 1)))
    return envs.DiscreteEnv(support, probs, mu, noise_sd=0.0)


def run_theory_suite(suite: str, cfg: dict, seed: int) -> list[checks.CheckReport]:
    """Run one named validator suite and return its reports."""
    tcfg = cfg["theory"]
    reports: list[checks.CheckReport] = []
    gstar = ReferenceWeight.constant_one()

    if suite == "unbiasedness":
        rng = np.random.default_rng([seed, 101])
        env = _random_discrete_env(rng)
        f_table = rng.uniform(-1, 1, size=(env.S, env.K))
        g_seq = []
        for _ in range(tcfg["n_logging"]):
            raw = rng.random((env.S, env.K)) + 0.05
            g_seq.append(raw / raw.sum(axis=1, keepdims=True))
        reports.append(checks.check_is_unbiasedness(env, g_seq, f_table, gstar))
        corrupted = [g * 1.1 for g in g_seq]
        neg = checks.check_is_unbiasedness(env, g_seq, f_table, gstar,
                                           recorded_g_seq=corrupted)
        reports.append(checks.CheckReport(
            name="is_unbiasedness_negative_control",
            passed=not neg.passed, statistic=neg.statistic,
            threshold=neg.threshold,
            details={"note": "corrupted propensities must break the identity"}))
    elif suite == "lemma2":
        for i in range(3):
            rng = np.random.default_rng([seed, 202, i])
            env = _random_discrete_env(rng, S=4, K=3, noiseless=True,
                                       scale=1.0 + i)
            reports.append(checks.check_square_loss_variance_bound(
                env, gstar, n_f=tcfg["n_f"], seed=[seed, 203, i]))
        reports.append(checks.check_lipschitz_square_loss(
            M=4.0, n_samples=100_000, seed=[seed, 204]))
    elif suite == "lemma3":
        for nu in (1.0, 2.0, math.inf):
            env = _margin_env(nu)
            reports.append(checks.check_margin_variance_bound(
                env, nu, n_policies=tcfg["n_policies"],
                seed=[seed, 301, int(0 if math.isinf(nu) else nu)]))
    elif suite == "supscaling":
        rng = np.random.default_rng([seed, 401])
        env = _random_discrete_env(rng, S=4, K=3, noiseless=False)
        B = 1.0
        half = rng.uniform(-B, B, size=(4, env.S, env.K))
        xi = np.concatenate([half, -half], axis=0)
        reports.extend(checks.sup_process_scaling(
            env, xi, B, gstar, tcfg["sup_betas"], tcfg["sup_T_grid"],
            tcfg["sup_n_reps"], seed, slope_tol=tcfg["slope_tol"]))
    else:
        raise click.ClickException(f"unknown suite {suite!r}")
    return reports


@main.command("theory-check")
@click.option("--suite",
              type=click.Choice(["unbiasedness", "lemma2", "lemma3",
                                 "supscaling", "all"]),
              default="all", show_default=True)
@click.option("--out", "out_name", default="report.json", show_default=True)
@click.pass_context
def cmd_theory_check(ctx, suite, out_name):
    """Run the exact/Monte-Carlo validators; exit nonzero on any failure."""
    run = Run("theory-check", ctx.obj, {})
    suites = (run.config["theory"]["suites"] if suite == "all" else [suite])
    reports: list[checks.CheckReport] = []
    for name in suites:
        with run.stage(f"suite:{name}"):
            reports.extend(run_theory_suite(name, run.config, run.seed))
    path = run.path(out_name)
    _write_json(path, [r.to_dict() for r in reports])
    run.finish()
    failed = [r for r in reports if not r.passed]
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        click.echo(f"[{status}] {r.name}: statistic {r.statistic:.6g} "
                   f"(threshold {r.threshold:.6g})")
    if failed:
        raise SystemExit(1)


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------


@main.command("ingest")
@click.option("--data", "data_path", type=click.Path(exists=True),
              required=True, help="CSV file with a header row.")
@click.option("--label-col", required=True, help="Label column name.")
@click.option("--no-standardize", is_flag=True, default=False)
@click.option("--keep-missing", is_flag=True, default=False,
              help="Error on unparsable rows instead of dropping them.")
@click.option("--out", "out_name", default="table.npz", show_default=True)
@click.pass_context
def cmd_ingest(ctx, data_path, label_col, no_standardize, keep_missing,
               out_name):
    """Load a classification CSV into the bandit-conversion table format."""
    run = Run("ingest", ctx.obj, {})
    with run.stage("ingest"):
        table = ingest.load_csv_classification(
            data_path, label_col, drop_missing=not keep_missing,
            standardize=not no_standardize)
    path = run.path(out_name)
    np.savez(path, features=table.features, labels=table.labels,
             column_names=np.array(table.column_names))
    summary = {"n": table.n, "d": table.d, "num_classes": table.num_classes,
               "columns": list(table.column_names),
               "source": os.path.basename(data_path)}
    _write_json(run.path(out_name.rsplit(".", 1)[0] + "_summary.json"), summary)
    run.finish()
    click.echo(f"ingested {table.n} rows, {table.d} features, "
               f"{table.num_classes} classes -> {path}")


if __name__ == "__main__":
    main()
