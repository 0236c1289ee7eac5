"""Risk measurement, replicated experiment sweeps, and rate fitting.

The evaluation target is the reference risk: the expected loss when
contexts come fresh from the environment and actions are drawn uniformly,
re-scaled by the reference density.  For discrete environments and for
linear models on the linear environment the excess risk is computed
exactly; everything else falls back to Monte Carlo with a reported
standard error.
"""

from __future__ import annotations

import concurrent.futures
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import learners, weights
from .collect import ExplorationSchedule, GreedySpec, collect
from .data import LoggedDataset, ReferenceWeight
from .envs import DiscreteEnv, LinearEnv, QuadraticEnv, build_env
from .seeding import stage_rng

__all__ = [
    "RiskEstimate",
    "reference_risk_mc",
    "ExcessRisk",
    "excess_risk",
    "RateFit",
    "fit_rate",
    "ExperimentConfig",
    "RepRecord",
    "ExperimentResult",
    "fit_outcome_model",
    "replicate_experiment",
    "write_rep_csv",
    "write_agg_csv",
    "write_plot_data",
    "write_plot_script",
]


def _make_gstar(kind) -> ReferenceWeight:
    if isinstance(kind, ReferenceWeight):
        return kind
    if kind == "one":
        return ReferenceWeight.constant_one()
    if kind == "uniform":
        return ReferenceWeight.uniform()
    if isinstance(kind, str) and kind.startswith("dirac:"):
        return ReferenceWeight.dirac(int(kind.split(":", 1)[1]))
    raise ValueError(f"unknown reference weight: {kind!r}")


# ---------------------------------------------------------------------------
# Reference-risk estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RiskEstimate:
    value: float
    se: float


def _is_policy(obj) -> bool:
    return hasattr(obj, "assign")


def reference_risk_mc(model_or_policy, env, gstar, n_test: int,
                      seed) -> RiskEstimate:
    """Monte Carlo reference risk from fresh uniform-action test rounds.

    Draws ``n_test`` rounds with contexts from the environment and actions
    uniform over arms, then importance-rescales by ``K * g*(a)``: squared
    error for outcome models, ``y * 1{h(x) = a}`` for policies (giving the
    policy's expected outcome under the reference).  Returns the sample
    mean and its standard error.
    """
    if n_test < 2:
        raise ValueError("n_test must be >= 2")
    gstar = _make_gstar(gstar)
    rng = np.random.default_rng(seed)
    plan = env.presample(n_test, rng)
    K = env.K
    a = rng.integers(0, K, size=n_test)
    z = rng.standard_normal(n_test)
    rows = np.arange(n_test)
    y = plan.mu[rows, a] + plan.sd[rows, a] * z
    ga = gstar.arm_values(K)[a]
    if _is_policy(model_or_policy):
        match = (model_or_policy.assign(plan.X) == a)
        vals = y * match * K * ga
    else:
        pred = model_or_policy.predict_pairs(plan.X, a)
        vals = (y - pred) ** 2 * K * ga
    return RiskEstimate(value=float(vals.mean()),
                        se=float(vals.std(ddof=1) / math.sqrt(n_test)))


@dataclass(frozen=True)
class ExcessRisk:
    value: float
    se: float | None  # None when the value is an exact finite sum
    exact: bool


def excess_risk(model_or_policy, env, gstar, n_test: int = 100_000,
                seed=0) -> ExcessRisk:
    """Excess reference risk against the exact optimum.

    Exact routes: any model or policy on a discrete environment (finite
    sums over the support), and linear models on the linear environment
    (closed-form second moments of the uniform cube).  Other known-mu
    environments use Monte Carlo over fresh contexts with arm sums taken
    exactly, so every per-draw term is non-negative and the estimate is
    never negative.

    Outcome models are compared against ``f = mu`` (squared loss); policies
    against the per-context best arm (cost convention).
    """
    gstar = _make_gstar(gstar)
    if _is_policy(model_or_policy):
        if isinstance(env, DiscreteEnv):
            assign = model_or_policy.assign(env.support)
            return ExcessRisk(env.policy_regret_table(assign), None, True)
        rng = np.random.default_rng(seed)
        plan = env.presample(n_test, rng)
        assign = model_or_policy.assign(plan.X)
        gaps = plan.mu[np.arange(n_test), assign] - plan.mu.min(axis=1)
        return ExcessRisk(float(gaps.mean()),
                          float(gaps.std(ddof=1) / math.sqrt(n_test)), False)

    if isinstance(env, DiscreteEnv):
        pred = model_or_policy.predict_all_arms(env.support)
        return ExcessRisk(env.excess_reference_risk_table(pred, gstar), None,
                          True)
    if (isinstance(env, LinearEnv) and not isinstance(env, QuadraticEnv)
            and isinstance(model_or_policy, learners.LinearModel)
            and model_or_policy.feature_map.mode == "linear_interacted"):
        d, K = env.d, env.K
        block = d + 1
        coef = model_or_policy.coef
        m2 = env.feature_second_moment()
        ga = gstar.arm_values(K)
        total = 0.0
        for a in range(K):
            fitted = coef[:block] + coef[(a + 1) * block:(a + 2) * block]
            delta = fitted - env.theta[a]
            total += ga[a] * float(delta @ m2 @ delta)
        return ExcessRisk(total, None, True)
    # Known-mu Monte Carlo fallback: arm sums exact, contexts sampled.
    rng = np.random.default_rng(seed)
    plan = env.presample(n_test, rng)
    pred = model_or_policy.predict_all_arms(plan.X)
    ga = gstar.arm_values(env.K)
    per_ctx = ((plan.mu - pred) ** 2) @ ga
    return ExcessRisk(float(per_ctx.mean()),
                      float(per_ctx.std(ddof=1) / math.sqrt(n_test)), False)


# ---------------------------------------------------------------------------
# Rate fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    """Fitted log-log convergence rate with a bootstrap CI."""

    slope: float
    intercept: float
    level: float
    lo: float
    hi: float
    n_boot: int


def fit_rate(T_values, losses, n_boot: int = 1000, level: float = 0.95,
             seed=0, rep_losses=None, drop_smallest: bool = True) -> RateFit:
    """OLS of log(loss) on log(T); the slope is the empirical exponent.

    ``rep_losses`` (optional, one array of per-replication losses per T)
    switches the bootstrap to resampling replications within each T;
    otherwise (T, loss) pairs are resampled.  The smallest T is excluded by
    default because warm-start rounds distort small-horizon scaling.
    """
    T_values = np.asarray(T_values, dtype=np.float64)
    losses = np.asarray(losses, dtype=np.float64)
    if T_values.shape != losses.shape or T_values.ndim != 1:
        raise ValueError("T_values and losses must be matching 1-D arrays")
    if len(np.unique(T_values)) < 3:
        raise ValueError("need at least 3 distinct T values")
    if np.any(losses <= 0):
        raise ValueError("losses must be positive to fit a log-log rate")

    order = np.argsort(T_values, kind="stable")
    T_values = T_values[order]
    losses = losses[order]
    if rep_losses is not None:
        if len(rep_losses) != len(T_values):
            raise ValueError("rep_losses must align with T_values")
        rep_losses = [np.asarray(rep_losses[i], dtype=np.float64)
                      for i in order]
    keep = slice(None)
    if drop_smallest:
        keep = T_values > T_values.min()
        if rep_losses is not None:
            rep_losses = [rl for rl, k in zip(rep_losses, keep) if k]
    Tk, Lk = T_values[keep], losses[keep]
    logT, logL = np.log(Tk), np.log(Lk)
    slope, intercept = np.polyfit(logT, logL, 1)

    rng = np.random.default_rng(seed)
    boots = []
    for _ in range(n_boot):
        if rep_losses is not None:
            means = np.array([
                rl[rng.integers(0, len(rl), size=len(rl))].mean()
                for rl in rep_losses
            ])
            if np.any(means <= 0):
                continue
            s, _ = np.polyfit(logT, np.log(means), 1)
        else:
            idx = rng.integers(0, len(Tk), size=len(Tk))
            if len(np.unique(Tk[idx])) < 2:
                continue
            s, _ = np.polyfit(logT[idx], logL[idx], 1)
        boots.append(s)
    if boots:
        lo, hi = np.quantile(boots, [(1 - level) / 2, 1 - (1 - level) / 2])
    else:
        lo = hi = slope
    return RateFit(slope=float(slope), intercept=float(intercept), level=level,
                   lo=float(min(lo, slope)), hi=float(max(hi, slope)),
                   n_boot=n_boot)


# ---------------------------------------------------------------------------
# Replicated experiments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """One replicated sweep: collect, weight, fit, evaluate on fresh rounds."""

    env: dict
    beta: float
    T_grid: tuple[int, ...]
    n_reps: int
    master_seed: int
    T_test: int = 1000
    floor: float = 0.0
    schemes: tuple[str, ...] = ("unweighted", "iswerm")
    model: str = "wls"
    gstar: str = "uniform"
    ridge_lambda: float = 0.0
    lambda_grid: tuple[float, ...] = (0.0001, 0.001, 0.01, 0.1, 1.0)
    cv_folds: int = 4
    max_depth: int = 6
    min_leaf_weight: float = 1.0
    greedy_model: str = "linear"
    greedy_refit: str = "every"

    def __post_init__(self) -> None:
        grid = tuple(int(t) for t in self.T_grid)
        if any(b >= a for a, b in zip(grid[1:], grid[:-1])):
            raise ValueError("T grid must be strictly increasing")
        if self.n_reps < 1:
            raise ValueError("n_reps must be >= 1")
        if self.model not in ("wls", "ridge", "lasso", "cart"):
            raise ValueError(f"unknown model kind: {self.model!r}")
        for s in self.schemes:
            if s not in weights.SCHEMES:
                raise ValueError(f"unknown scheme: {s!r}")
        object.__setattr__(self, "T_grid", grid)
        object.__setattr__(self, "schemes", tuple(self.schemes))
        object.__setattr__(self, "lambda_grid",
                           tuple(float(v) for v in self.lambda_grid))


@dataclass(frozen=True)
class RepRecord:
    scheme: str
    model: str
    beta: float
    T: int
    rep: int
    loss: float


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    records: tuple[RepRecord, ...]
    aggregate: tuple = field(default=())
    # aggregate rows: (scheme, model, beta, T, mean, se-or-None)

    def rep_losses(self, scheme: str, T: int) -> np.ndarray:
        return np.array([r.loss for r in self.records
                         if r.scheme == scheme and r.T == T])


def fit_outcome_model(ds: LoggedDataset, w: np.ndarray, model: str,
                      config: ExperimentConfig):
    """Fit one outcome model kind on a weighted logged dataset."""
    if model == "cart":
        fmap = learners.FeatureMap("tree_concat", ds.d, ds.K)
        phi = fmap.design_matrix(ds.X, ds.A)
        tree = learners.fit_cart(phi, ds.Y, w, max_depth=config.max_depth,
                                 min_leaf_weight=config.min_leaf_weight)
        return learners.TreeOutcomeModel(tree=tree, feature_map=fmap)
    fmap = learners.FeatureMap("linear_interacted", ds.d, ds.K)
    phi = fmap.design_matrix(ds.X, ds.A)
    if model == "wls":
        coef = learners.fit_wls(phi, ds.Y, w, ridge_lambda=config.ridge_lambda)
    elif model == "ridge":
        coef = learners.cv_select_lambda("ridge", phi, ds.Y, w,
                                         config.lambda_grid,
                                         folds=config.cv_folds).coef
    else:  # lasso
        coef = learners.cv_select_lambda("lasso", phi, ds.Y, w,
                                         config.lambda_grid,
                                         folds=config.cv_folds).coef
    return learners.LinearModel(coef=coef, feature_map=fmap)


def _run_rep(config: ExperimentConfig, rep: int) -> list[RepRecord]:
    env = build_env(config.env)
    schedule = ExplorationSchedule(beta=config.beta, floor=config.floor)
    greedy = GreedySpec(model=config.greedy_model, refit=config.greedy_refit)
    gstar = _make_gstar(config.gstar)
    ga = gstar.arm_values(env.K)
    out: list[RepRecord] = []
    for T in config.T_grid:
        ds = collect(env, schedule, T,
                     stage_rng(config.master_seed, rep, f"collect:T={T}"),
                     greedy=greedy)
        # One shared test draw per (rep, T) so schemes face identical data.
        rng_t = stage_rng(config.master_seed, rep, f"test:T={T}")
        plan = env.presample(config.T_test, rng_t)
        a_t = rng_t.integers(0, env.K, size=config.T_test)
        z_t = rng_t.standard_normal(config.T_test)
        rows = np.arange(config.T_test)
        y_t = plan.mu[rows, a_t] + plan.sd[rows, a_t] * z_t
        scale = env.K * ga[a_t]
        for scheme in config.schemes:
            w = weights.compute_weights(scheme, ds, gstar)
            model = fit_outcome_model(ds, w, config.model, config)
            pred = model.predict_pairs(plan.X, a_t)
            loss = float(np.mean((y_t - pred) ** 2 * scale))
            out.append(RepRecord(scheme=scheme, model=config.model,
                                 beta=config.beta, T=T, rep=rep, loss=loss))
    return out


def replicate_experiment(config: ExperimentConfig,
                         threads: int = 1) -> ExperimentResult:
    """Run every (replication, T, scheme) cell and aggregate mean and SE.

    Replications are independent jobs keyed by their seed triple, so the
    result is the same whether they run serially or in a process pool.
    """
    reps = range(config.n_reps)
    if threads > 1 and config.n_reps > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as ex:
            chunks = list(ex.map(_run_rep, [config] * config.n_reps, reps))
    else:
        chunks = [_run_rep(config, r) for r in reps]
    records = tuple(rec for chunk in chunks for rec in chunk)

    agg = []
    for scheme in config.schemes:
        for T in config.T_grid:
            losses = np.array([r.loss for r in records
                               if r.scheme == scheme and r.T == T])
            mean = float(losses.mean())
            se = (float(losses.std(ddof=1) / math.sqrt(len(losses)))
                  if len(losses) > 1 else None)
            agg.append((scheme, config.model, config.beta, T, mean, se))
    return ExperimentResult(config=config, records=records,
                            aggregate=tuple(agg))


# ---------------------------------------------------------------------------
# Tables and plot data
# ---------------------------------------------------------------------------


def write_rep_csv(path: str, records) -> None:
    """Per-replication table: scheme,model,beta,T,rep,loss."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        out = csv.writer(handle)
        out.writerow(["scheme", "model", "beta", "T", "rep", "loss"])
        for r in records:
            out.writerow([r.scheme, r.model, repr(r.beta), r.T, r.rep,
                          repr(r.loss)])


def write_agg_csv(path: str, aggregate) -> None:
    """Aggregated table: scheme,model,beta,T,mean,se (se empty for 1 rep)."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        out = csv.writer(handle)
        out.writerow(["scheme", "model", "beta", "T", "mean", "se"])
        for scheme, model, beta, T, mean, se in aggregate:
            out.writerow([scheme, model, repr(beta), T, repr(mean),
                          "" if se is None else repr(se)])


def write_plot_data(path: str, x, y, yerr=None) -> None:
    """Whitespace-separated x / y / yerr columns for external plotting."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("# x y yerr\n")
        for i in range(len(x)):
            e = 0.0 if yerr is None else float(np.asarray(yerr)[i])
            handle.write(f"{x[i].item()!r} {y[i].item()!r} {e!r}\n")


def write_plot_script(path: str, data_files: list[str],
                      xlabel: str = "T", ylabel: str = "loss") -> None:
    """Emit a small self-contained script that renders the plot-data files."""
    lines = [
        "#!/usr/bin/env python3",
        '"""Render plot-data files (x y yerr) emitted next to this script."""',
        "import sys",
        "",
        "try:",
        "    import matplotlib.pyplot as plt",
        "except ImportError:",
        "    sys.exit('matplotlib is required to render these files')",
        "import numpy as np",
        "",
        f"files = {data_files!r}",
        "for name in files:",
        "    d = np.loadtxt(name)",
        "    d = d.reshape(-1, 3)",
        "    plt.errorbar(d[:, 0], d[:, 1], yerr=d[:, 2], label=name,",
        "                 marker='o', capsize=3)",
        "plt.xscale('log'); plt.yscale('log')",
        f"plt.xlabel({xlabel!r}); plt.ylabel({ylabel!r})",
        "plt.legend(); plt.tight_layout()",
        "plt.savefig('plot.png', dpi=150)",
        "print('wrote plot.png')",
        "",
    ]
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines))
