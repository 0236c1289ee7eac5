"""Exact and Monte Carlo validators for the estimator's core identities.

Discrete environments make both sides of every identity a finite sum, so
pass/fail decisions carry no Monte Carlo error; sampling only decides which
instances get checked.  The one statistical check (the scaling of the
adaptive empirical process) validates a fitted log-log slope, never
absolute constants.

All checks return a :class:`CheckReport`; a report fails exactly when its
statistic violates its threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .data import ReferenceWeight
from .envs import DiscreteEnv
from .evaluate import fit_rate
from .seeding import stage_rng

__all__ = [
    "CheckReport",
    "check_is_unbiasedness",
    "check_square_loss_variance_bound",
    "check_lipschitz_square_loss",
    "check_margin_variance_bound",
    "sup_process_scaling",
]


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one validator run."""

    name: str
    passed: bool
    statistic: float
    threshold: float
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "statistic": float(self.statistic),
            "threshold": float(self.threshold),
            "details": {k: (v.__dict__ if hasattr(v, "__dict__") else v)
                        for k, v in self.details.items()},
        }


def _cell_loss(env: DiscreteEnv, f_table: np.ndarray) -> np.ndarray:
    """Exact per-cell expected squared loss E[(Y - f)^2] = (mu-f)^2 + sd^2."""
    return (env.mu - f_table) ** 2 + env.noise_sd ** 2


def check_is_unbiasedness(env: DiscreteEnv, g_seq, f_table,
                          gstar: ReferenceWeight,
                          recorded_g_seq=None,
                          tol: float = 1e-12) -> CheckReport:
    """Conditional unbiasedness of the importance-weighted loss.

    For each round's logging policy ``g_t`` (an (S, K) table of action
    probabilities per context), the weighted loss has conditional mean

        sum_s p_s sum_a g_t(a|s) * (g*(a) / g_t(a|s)) * E[loss(f, (s,a))]
        = sum_s p_s sum_a g*(a) * E[loss(f, (s,a))],

    independent of ``g_t``.  The left side is computed through the same
    ratio the weight schemes use, from ``recorded_g_seq`` if given (pass a
    perturbed copy as a negative control: the identity must then fail).
    Passes iff the worst absolute difference over rounds is below ``tol``.
    """
    if not isinstance(env, DiscreteEnv):
        raise TypeError("unbiasedness check needs a discrete environment")
    g_seq = list(g_seq)
    f_table = np.asarray(f_table, dtype=np.float64)
    loss = _cell_loss(env, f_table)
    ga = gstar.arm_values(env.K)
    rhs = float(env.probs @ (loss @ ga))
    if recorded_g_seq is None:
        recorded_g_seq = g_seq
    worst = 0.0
    for g_t, rec_t in zip(g_seq, recorded_g_seq):
        g_t = np.asarray(g_t, dtype=np.float64)
        rec_t = np.asarray(rec_t, dtype=np.float64)
        if np.any(g_t <= 0) or np.any(rec_t <= 0):
            raise ValueError("logging policies must be strictly positive")
        ratio = ga[None, :] / rec_t
        lhs = float(env.probs @ ((g_t * ratio * loss) @ np.ones(env.K)))
        worst = max(worst, abs(lhs - rhs))
    return CheckReport(name="is_unbiasedness", passed=worst < tol,
                       statistic=worst, threshold=tol,
                       details={"rounds": len(g_seq), "rhs": rhs})


def check_square_loss_variance_bound(env: DiscreteEnv,
                                     gstar: ReferenceWeight,
                                     n_f: int = 1000, seed=0,
                                     f1_table=None,
                                     tol: float = 1e-9) -> CheckReport:
    """Variance bound for squared loss against the population minimizer.

    For each sampled f (cell values in the box [-sqrt(M), sqrt(M)] with
    M the squared outcome scale), verifies exactly that

        || loss(f) - loss(f1) ||_{2, g*}  <=  4 sqrt(M) (R*(f) - R*(f1))^(1/2)

    where f1 is the population minimizer over the (convex) box class —
    f1 = mu unless overridden.  The environment must be noiseless so
    outcomes stay inside [-sqrt(M), sqrt(M)].  Passes iff the worst
    LHS/RHS ratio is at most 1 + tol.  A custom ``f1_table`` that is not
    the minimizer is detected (some f attains lower exact risk) and fails
    the check.
    """
    if not isinstance(env, DiscreteEnv):
        raise TypeError("variance-bound check needs a discrete environment")
    if np.any(env.noise_sd != 0):
        raise ValueError("variance-bound check requires a noiseless "
                         "environment (outcomes must stay in range)")
    root_m = env.outcome_scale
    M = root_m ** 2
    if f1_table is None:
        f1_table = env.mu
    f1_table = np.asarray(f1_table, dtype=np.float64)
    ga = gstar.arm_values(env.K)
    loss1 = _cell_loss(env, f1_table)
    risk1 = float(env.probs @ (loss1 @ ga))

    rng = np.random.default_rng(seed)
    worst = 0.0
    minimizer_ok = True
    for _ in range(n_f):
        f = rng.uniform(-root_m, root_m, size=(env.S, env.K))
        lossf = _cell_loss(env, f)
        riskf = float(env.probs @ (lossf @ ga))
        excess = riskf - risk1
        if excess < 0:
            minimizer_ok = False
            break
        diff2 = float(env.probs @ (((lossf - loss1) ** 2) @ ga))
        lhs = math.sqrt(diff2)
        rhs = 4.0 * root_m * math.sqrt(excess)
        ratio = 0.0 if lhs == 0.0 else (math.inf if rhs == 0.0 else lhs / rhs)
        worst = max(worst, ratio)
    passed = minimizer_ok and worst <= 1.0 + tol
    details = {"n_f": n_f, "M": M, "f1_is_minimizer": minimizer_ok}
    return CheckReport(name="square_loss_variance_bound", passed=passed,
                       statistic=worst, threshold=1.0 + tol, details=details)


def check_lipschitz_square_loss(M: float, n_samples: int = 100_000,
                                seed=0) -> CheckReport:
    """Lipschitz property of squared loss on the bounded range.

    Samples triples (y, f, f') in [-sqrt(M), sqrt(M)]^3 and verifies
    |(y-f)^2 - (y-f')^2| <= 4 sqrt(M) |f - f'|.  The constant 4 sqrt(M) is
    the one the downstream rate analysis uses (a factor-4 slack above the
    tight 2 sqrt(M) + 2 sqrt(M) bound at the corners).
    """
    root_m = math.sqrt(M)
    rng = np.random.default_rng(seed)
    y, f, fp = rng.uniform(-root_m, root_m, size=(3, n_samples))
    lhs = np.abs((y - f) ** 2 - (y - fp) ** 2)
    rhs = 4.0 * root_m * np.abs(f - fp)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = np.where(lhs == 0.0, 0.0, lhs / np.maximum(rhs, 1e-300))
    worst = float(np.max(ratios))
    return CheckReport(name="lipschitz_square_loss", passed=worst <= 1.0,
                       statistic=worst, threshold=1.0,
                       details={"n_samples": n_samples, "M": M})


def _margin_kappa(env: DiscreteEnv, nu: float) -> tuple[float, float, np.ndarray]:
    """Exact margin constant by direct scan of the finite gap distribution.

    The gap of context s is ``min_{a != a*} mu[s, a] - mu[s, a*]``.  Returns
    the smallest kappa such that Pr{gap <= u} <= (kappa * u / M)^nu for all
    u > 0 (checked at the gap atoms, which is sufficient for a step CDF),
    along with M and the per-context gaps.
    """
    order = np.sort(env.mu, axis=1)
    gaps = order[:, 1] - order[:, 0]
    M = env.outcome_scale
    kappa = 0.0
    for g in np.unique(gaps):
        prob = float(env.probs[gaps <= g].sum())
        kappa = max(kappa, M * prob ** (1.0 / nu) / g)
    return kappa, M, gaps


def check_margin_variance_bound(env: DiscreteEnv, nu: float,
                                n_policies: int = 500, seed=0,
                                kappa: float | None = None,
                                tol: float = 1e-12) -> CheckReport:
    """Margin chain for policy learning, with explicit constants.

    Preconditions (validated, not assumed): each context has a unique best
    arm, the best arm's mean outcome is 0, and the environment is noiseless
    — exactly the regime where both asserted inequalities are theorems with
    the stated constants.

    For each random stochastic policy f (a row-stochastic (S, K) table),
    with q = Pr{A != A*} and e = E[mu(X, A) - mu(X, A*)], asserts

        q <= nu^(-nu/(nu+1)) (nu+1) ((kappa / M) e)^(nu/(nu+1))      (finite nu)
        q <= e / min_gap                                             (nu = inf)

    where kappa is measured exactly from the gap distribution unless
    supplied, and additionally

        || loss(f) - loss(f*) ||^2_{2, g*=1}  <=  M^2 q

    for the policy loss ``loss(f, (s, a)) = mu[s, a] * f(a | s)``.  Passes
    iff no sampled policy violates either inequality beyond ``tol``.
    """
    if not isinstance(env, DiscreteEnv):
        raise TypeError("margin check needs a discrete environment")
    if np.any(env.noise_sd != 0):
        raise ValueError("margin check requires a noiseless environment")
    a_star = np.argmin(env.mu, axis=1)
    order = np.sort(env.mu, axis=1)
    if np.any(order[:, 0] == order[:, 1]):
        raise ValueError("margin check requires a unique best arm per context")
    if np.any(env.mu[np.arange(env.S), a_star] != 0.0):
        raise ValueError("margin check requires the best arm's mean to be 0")

    if math.isinf(nu):
        kap, M, gaps = 0.0, env.outcome_scale, None
        ordv = np.sort(env.mu, axis=1)
        min_gap = float((ordv[:, 1] - ordv[:, 0]).min())
    else:
        measured, M, _ = _margin_kappa(env, nu)
        kap = measured if kappa is None else kappa
        min_gap = None

    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_loss_ratio = 0.0
    for _ in range(n_policies):
        raw = rng.random((env.S, env.K))
        f = raw / raw.sum(axis=1, keepdims=True)
        p_star = f[np.arange(env.S), a_star]
        q = float(env.probs @ (1.0 - p_star))
        gap_to_star = env.mu - env.mu[np.arange(env.S), a_star][:, None]
        e = float(env.probs @ np.sum(f * gap_to_star, axis=1))
        if math.isinf(nu):
            bound = e / min_gap
        else:
            alpha = nu / (nu + 1.0)
            bound = nu ** (-alpha) * (nu + 1.0) * ((kap / M) * e) ** alpha
        if bound > 0:
            worst = max(worst, q / bound)
        elif q > 0:
            worst = math.inf
        # Loss-difference norm vs M^2 q, with loss(f*) = 0 by the mean-0
        # precondition and g* = 1 per arm.
        loss_sq = float(env.probs @ np.sum((env.mu * f) ** 2, axis=1))
        rhs = M * M * q
        if rhs > 0:
            worst_loss_ratio = max(worst_loss_ratio, loss_sq / rhs)
        elif loss_sq > 0:
            worst_loss_ratio = math.inf
    stat = max(worst, worst_loss_ratio)
    return CheckReport(
        name=f"margin_variance_bound_nu={nu}",
        passed=stat <= 1.0 + tol, statistic=stat, threshold=1.0 + tol,
        details={"kappa": kap, "M": M, "n_policies": n_policies,
                 "worst_margin_ratio": worst,
                 "worst_loss_ratio": worst_loss_ratio})


def sup_process_scaling(env: DiscreteEnv, xi_tables: np.ndarray, B: float,
                        gstar: ReferenceWeight, betas, T_grid, n_reps: int,
                        master_seed: int, slope_tol: float = 0.1,
                        n_boot: int = 200) -> list[CheckReport]:
    """Scaling of the importance-weighted adaptive empirical process.

    Simulates eps-greedy collection on a discrete environment (tabular
    greedy model) and, for each function table xi_f bounded by B, tracks

        M_T(f) = (1/T) sum_t [ (g*(A_t)/g_t(A_t)) xi_f(S_t, A_t) - c_f ]

    with the exact reference mean c_f.  For each beta, fits the log-log
    slope of E[max_f M_T(f)] against T and passes iff it is within
    ``slope_tol`` of -(1 - beta)/2.  Include each table's negation in the
    class so the max is almost surely positive.
    """
    xi_tables = np.asarray(xi_tables, dtype=np.float64)
    if np.max(np.abs(xi_tables)) > B + 1e-12:
        raise ValueError("some function table exceeds the stated bound B")
    ga = gstar.arm_values(env.K)
    cref = np.array([float(env.probs @ (tab @ ga)) for tab in xi_tables])
    reports = []
    for beta in betas:
        eps_by_T = {T: np.maximum(np.arange(1, T + 1, dtype=np.float64)
                                  ** (-beta), 0.0) for T in T_grid}
        sups = {T: np.empty(n_reps) for T in T_grid}
        for rep in range(n_reps):
            for T in T_grid:
                rng = stage_rng(master_seed, rep, f"sup:beta={beta}:T={T}")
                s_idx = env.draw_states(T, rng)
                u_act = rng.random(T)
                z = rng.standard_normal(T)
                m = _kernels.sup_process_rounds(s_idx, env.mu, env.noise_sd,
                                                eps_by_T[T], u_act, z,
                                                xi_tables, cref, ga)
                sups[T][rep] = m.max()
        mean_sup = np.array([sups[T].mean() for T in T_grid])
        rate = fit_rate(np.asarray(T_grid, dtype=float), mean_sup,
                        n_boot=n_boot, seed=master_seed,
                        rep_losses=[sups[T] for T in T_grid])
        target = -(1.0 - beta) / 2.0
        err = abs(rate.slope - target)
        reports.append(CheckReport(
            name=f"sup_process_scaling_beta={beta}",
            passed=err <= slope_tol, statistic=rate.slope,
            threshold=slope_tol,
            details={"target": target, "abs_error": err, "rate": rate,
                     "mean_sup": mean_sup.tolist(),
                     "T_grid": list(map(int, T_grid))}))
    return reports
