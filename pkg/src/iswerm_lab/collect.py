"""Adaptive data collection with eps-greedy logging policies.

The logging policy explores with probability ``eps_t = max(t^(-beta),
floor)`` and otherwise plays the greedy arm of a model fit on all earlier
rounds.  Propensities and exploration rates are recorded exactly, so
importance weights downstream are exact, not estimated.

The common configuration (linear greedy model, refit every round) runs
through a compiled kernel; tree greedy models and doubling-epoch refits run
through a general Python loop.  Both consume the same pre-drawn randomness,
so a configuration's output is a pure function of (environment, schedule,
greedy spec, T, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels, learners
from .data import LoggedDataset, ReferenceWeight
from .envs import RoundPlan

__all__ = [
    "ExplorationSchedule",
    "GreedySpec",
    "ExplorationBound",
    "exploration_bound",
    "collect",
]


@dataclass(frozen=True)
class ExplorationSchedule:
    """Polynomially decaying exploration rate ``eps_t = max(t^(-beta), floor)``.

    ``beta = 0`` is pure uniform exploration; larger beta explores less.
    ``floor`` (default 0) keeps eps_t bounded away from zero if desired.
    """

    beta: float
    floor: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.beta < 1.0):
            raise ValueError("beta must be in [0, 1)")
        if not (0.0 <= self.floor <= 1.0):
            raise ValueError("floor must be in [0, 1]")

    def epsilon_at(self, t: int) -> float:
        """Exploration rate at 1-based round ``t``."""
        if t < 1:
            raise ValueError("t is 1-based")
        return max(float(t) ** (-self.beta), self.floor)

    def epsilons(self, T: int) -> np.ndarray:
        """Vector of eps_t for t = 1..T."""
        t = np.arange(1, T + 1, dtype=np.float64)
        return np.maximum(t ** (-self.beta), self.floor)


@dataclass(frozen=True)
class GreedySpec:
    """How the collector's greedy model is fit.

    ``model`` is ``"linear"`` (per-arm least squares on (1, x), ridge jitter
    1e-8) or ``"tree"`` (per-arm depth-limited regression tree).  ``refit``
    is ``"every"`` (refit each round) or ``"doubling"`` (refit at rounds
    1, 2, 4, 8, ...).
    """

    model: str = "linear"
    refit: str = "every"
    tree_depth: int = 3
    tree_min_leaf_weight: float = 1.0

    def __post_init__(self) -> None:
        if self.model not in ("linear", "tree"):
            raise ValueError(f"unknown greedy model: {self.model!r}")
        if self.refit not in ("every", "doubling"):
            raise ValueError(f"unknown refit cadence: {self.refit!r}")


@dataclass(frozen=True)
class ExplorationBound:
    """Per-round and aggregate bounds on the importance ratio.

    ``gamma[t-1]`` bounds ``sup_a g*(a) / g_t(a | x)`` for round t, using
    the exploration floor ``eps_t / K`` as the minimum propensity.
    """

    gamma: np.ndarray
    gamma_avg: float
    gamma_max: float


def exploration_bound(schedule: ExplorationSchedule, K: int, T: int,
                      gstar: ReferenceWeight) -> ExplorationBound:
    """Worst-case importance-ratio envelope of a schedule.

    Every propensity satisfies ``g_t >= eps_t / K``, so the ratio
    ``g*(a) / g_t(a | x)`` is at most ``sup_a g*(a) * K / eps_t``.
    """
    eps = schedule.epsilons(T)
    gamma = gstar.sup_density(K) * K / eps
    return ExplorationBound(gamma=gamma, gamma_avg=float(gamma.mean()),
                            gamma_max=float(gamma.max()))


def _refit_rounds(T: int) -> set[int]:
    # 1-based rounds at which a doubling cadence refits: 1, 2, 4, 8, ...
    out, r = set(), 1
    while r <= T:
        out.add(r)
        r *= 2
    return out


def _collect_general(plan: RoundPlan, eps_arr, u_act, z, K: int,
                     spec: GreedySpec):
    """Python-loop collector for tree greedy models and doubling refits."""
    T, d = plan.X.shape
    X, mu, sd = plan.X, plan.mu, plan.sd
    A = np.empty(T, dtype=np.int64)
    Y = np.empty(T, dtype=np.float64)
    G = np.empty(T, dtype=np.float64)
    E = np.empty(T, dtype=np.float64)
    GR = np.full(T, -1, dtype=np.int64)

    pulled = np.zeros(K, dtype=bool)
    n_covered = 0
    refit_at = _refit_rounds(T) if spec.refit == "doubling" else None
    models: list = [None] * K
    stale = True

    def fit_arm(a: int, upto: int):
        rows = np.flatnonzero(A[:upto] == a)
        xs, ys = X[rows], Y[rows]
        if spec.model == "linear":
            phi = np.column_stack([np.ones(len(rows)), xs])
            gram = phi.T @ phi + 1e-8 * np.eye(d + 1)
            return np.linalg.solve(gram, phi.T @ ys)
        w = np.ones(len(rows))
        return learners.fit_cart(xs, ys, w, max_depth=spec.tree_depth,
                                 min_leaf_weight=spec.tree_min_leaf_weight)

    for t in range(T):
        if n_covered < K:
            u = float(u_act[t])
            a = min(int(u * K), K - 1)
            g, e_rec = 1.0 / K, 1.0
            stale = True
        else:
            want_refit = refit_at is None or (t + 1) in refit_at
            if stale or want_refit:
                for arm in range(K):
                    models[arm] = fit_arm(arm, t)
                stale = False
            x = X[t]
            if spec.model == "linear":
                scores = [float(models[arm][0] + models[arm][1:] @ x)
                          for arm in range(K)]
            else:
                scores = [float(models[arm].predict(x[None, :])[0])
                          for arm in range(K)]
            best = int(np.argmin(scores))
            e = float(eps_arr[t])
            u = float(u_act[t])
            if u < e:
                a = min(int(u / e * K), K - 1)
            else:
                a = best
            g = (1.0 - e + e / K) if a == best else e / K
            e_rec = e
            GR[t] = best
        A[t] = a
        Y[t] = mu[t, a] + sd[t, a] * z[t]
        G[t] = g
        E[t] = e_rec
        if not pulled[a]:
            pulled[a] = True
            n_covered += 1
    return A, Y, G, E, GR


def collect(env, schedule: ExplorationSchedule, T: int, seed,
            greedy: GreedySpec = GreedySpec()) -> LoggedDataset:
    """Run one collection pass of ``T`` rounds and return the logged dataset.

    Randomness is drawn in a fixed order (contexts, then action uniforms,
    then outcome normals) from a single generator, so the output is
    reproducible from the seed alone and identical across kernel backends.

    ``seed`` may be an int, a SeedSequence, or a Generator.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    rng = np.random.default_rng(seed)
    plan = env.presample(T, rng)
    u_act = rng.random(T)
    z = rng.standard_normal(T)
    eps_arr = schedule.epsilons(T)
    K = env.K

    if greedy.model == "linear" and greedy.refit == "every":
        A, Y, G, E, GR = _kernels.collect_eps_greedy(plan.X, plan.mu, plan.sd,
                                                     eps_arr, u_act, z)
    else:
        A, Y, G, E, GR = _collect_general(plan, eps_arr, u_act, z, K, greedy)

    return LoggedDataset(X=plan.X, A=A, Y=Y, G=G, EPS=E, K=K,
                         beta=schedule.beta,
                         seed=seed if isinstance(seed, int) else None)
