"""Synthetic contextual-bandit environments with known ground truth.

Each environment draws i.i.d. contexts, exposes the true mean-outcome
function ``mu(x, a)`` (cost convention: smaller is better), and adds
Gaussian noise to sampled outcomes.  The collector asks an environment to
*presample* a run: draw ``T`` contexts and tabulate ``mu`` and the noise
standard deviation for every (round, arm) pair.  That keeps the sequential
collection loop free of any environment-specific code.

Environments
------------
LinearEnv
    ``mu(x, a) = theta_a . (1, x)`` with ``x ~ U[-1, 1]^d``.
QuadraticEnv
    Linear plus a per-arm quadratic term ``q_a . x^2`` (misspecifies any
    learner that is linear in ``(1, x)``).
DiscreteEnv
    Finite context support with an explicit probability vector and mean /
    noise tables; all reference-measure moments are exact finite sums.
ClassificationEnv
    Contexts are rows of a feature table drawn uniformly with replacement;
    ``mu(x, a) = 1{a == label(x)}`` and outcomes get unit Gaussian noise,
    so the best arm is the true class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ReferenceWeight

__all__ = [
    "RoundPlan",
    "LinearEnv",
    "QuadraticEnv",
    "DiscreteEnv",
    "ClassificationEnv",
    "build_env",
]


@dataclass(frozen=True)
class RoundPlan:
    """Presampled inputs for a collection run.

    ``X`` is (T, d); ``mu`` and ``sd`` are (T, K) tables of the mean outcome
    and noise standard deviation for every round/arm pair; ``state`` holds
    integer state ids for finite-support environments (None otherwise).
    """

    X: np.ndarray
    mu: np.ndarray
    sd: np.ndarray
    state: np.ndarray | None = None


class _EnvBase:
    K: int
    d: int

    def presample(self, T: int, rng: np.random.Generator) -> RoundPlan:
        raise NotImplementedError

    def test_sample(self, n: int, rng: np.random.Generator):
        """Fresh evaluation draw: contexts plus their true mean table."""
        plan = self.presample(n, rng)
        return plan.X, plan.mu

    def mean_outcome_matrix(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class LinearEnv(_EnvBase):
    """Linear mean outcomes over the cube: ``mu(x, a) = theta_a . (1, x)``.

    Parameters
    ----------
    theta : np.ndarray
        Coefficients, shape (K, d+1); column 0 is the intercept.
    noise_std : float
        Homoscedastic outcome noise standard deviation.
    """

    def __init__(self, theta: np.ndarray, noise_std: float = 0.5):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.ndim != 2 or theta.shape[1] < 1:
            raise ValueError("theta must be (K, d+1)")
        if noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        self.theta = theta
        self.K = theta.shape[0]
        self.d = theta.shape[1] - 1
        self.noise_std = float(noise_std)

    @classmethod
    def from_seed(cls, K: int, d: int, coef_seed: int, noise_std: float = 0.5):
        """Standard-normal coefficients drawn from a dedicated seed."""
        rng = np.random.default_rng(coef_seed)
        return cls(rng.standard_normal((K, d + 1)), noise_std)

    @property
    def outcome_scale(self) -> float:
        """Bound M on ``sup_{x, a} |mu(x, a)|`` over the context cube."""
        return float(np.max(np.abs(self.theta).sum(axis=1)))

    def mean_outcome_matrix(self, X: np.ndarray) -> np.ndarray:
        return X @ self.theta[:, 1:].T + self.theta[:, 0]

    def presample(self, T: int, rng: np.random.Generator) -> RoundPlan:
        X = rng.uniform(-1.0, 1.0, size=(T, self.d))
        mu = self.mean_outcome_matrix(X)
        sd = np.full((T, self.K), self.noise_std)
        return RoundPlan(X=X, mu=mu, sd=sd)

    def feature_second_moment(self) -> np.ndarray:
        """Exact E[(1, x)(1, x)^T] under the uniform cube: diag(1, 1/3, ...)."""
        m = np.full(self.d + 1, 1.0 / 3.0)
        m[0] = 1.0
        return np.diag(m)


class QuadraticEnv(LinearEnv):
    """Linear environment plus per-arm curvature ``q_a . x^2``."""

    def __init__(self, theta: np.ndarray, quad: np.ndarray, noise_std: float = 0.5):
        super().__init__(theta, noise_std)
        quad = np.asarray(quad, dtype=np.float64)
        if quad.shape != (self.K, self.d):
            raise ValueError("quad must be (K, d)")
        self.quad = quad

    @classmethod
    def from_seed(cls, K: int, d: int, coef_seed: int, noise_std: float = 0.5,
                  quad_scale: float = 1.0):
        rng = np.random.default_rng(coef_seed)
        theta = rng.standard_normal((K, d + 1))
        quad = quad_scale * rng.standard_normal((K, d))
        return cls(theta, quad, noise_std)

    @property
    def outcome_scale(self) -> float:
        return float(
            np.max(np.abs(self.theta).sum(axis=1) + np.abs(self.quad).sum(axis=1))
        )

    def mean_outcome_matrix(self, X: np.ndarray) -> np.ndarray:
        return super().mean_outcome_matrix(X) + (X ** 2) @ self.quad.T


class DiscreteEnv(_EnvBase):
    """Finite-support environment with exact reference-measure moments.

    Parameters
    ----------
    support : np.ndarray
        Context values, shape (S, d).
    probs : np.ndarray
        Context probabilities, shape (S,), summing to 1.
    mu : np.ndarray
        Mean-outcome table, shape (S, K).
    noise_sd : float or np.ndarray
        Scalar or (S, K) table of noise standard deviations.
    """

    def __init__(self, support, probs, mu, noise_sd=0.0):
        support = np.atleast_2d(np.asarray(support, dtype=np.float64))
        probs = np.asarray(probs, dtype=np.float64)
        mu = np.asarray(mu, dtype=np.float64)
        S = support.shape[0]
        if probs.shape != (S,):
            raise ValueError("probs must be (S,)")
        if np.any(probs < 0) or not np.isclose(probs.sum(), 1.0, atol=1e-12):
            raise ValueError("probs must be non-negative and sum to 1")
        if mu.ndim != 2 or mu.shape[0] != S:
            raise ValueError("mu must be (S, K)")
        self.support = support
        self.probs = probs
        self.mu = mu
        self.S = S
        self.K = mu.shape[1]
        self.d = support.shape[1]
        sd = np.asarray(noise_sd, dtype=np.float64)
        if sd.ndim == 0:
            sd = np.full((S, self.K), float(sd))
        if sd.shape != (S, self.K):
            raise ValueError("noise_sd must be scalar or (S, K)")
        if np.any(sd < 0):
            raise ValueError("noise_sd must be >= 0")
        self.noise_sd = sd
        self._cum = np.cumsum(probs)

    @property
    def outcome_scale(self) -> float:
        return float(np.max(np.abs(self.mu)))

    def draw_states(self, T: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(T)
        return np.searchsorted(self._cum, u, side="right").astype(np.int64)

    def presample(self, T: int, rng: np.random.Generator) -> RoundPlan:
        s = self.draw_states(T, rng)
        return RoundPlan(X=self.support[s], mu=self.mu[s], sd=self.noise_sd[s],
                         state=s)

    def state_of(self, x: np.ndarray) -> int:
        """Index of the support row nearest to ``x`` (ties: lowest index)."""
        d2 = np.sum((self.support - np.asarray(x)) ** 2, axis=1)
        return int(np.argmin(d2))

    def mean_outcome_matrix(self, X: np.ndarray) -> np.ndarray:
        idx = np.array([self.state_of(x) for x in np.atleast_2d(X)])
        return self.mu[idx]

    # -- exact moments -----------------------------------------------------

    def reference_risk_table(self, pred: np.ndarray,
                             gstar: ReferenceWeight) -> float:
        """Exact squared-error risk of a (S, K) prediction table under g*.

        ``sum_s p_s sum_a g*(a) [ (mu_sa - pred_sa)^2 + sd_sa^2 ]``.
        """
        pred = np.asarray(pred, dtype=np.float64)
        if pred.shape != (self.S, self.K):
            raise ValueError("pred must be (S, K)")
        ga = gstar.arm_values(self.K)
        per_cell = (self.mu - pred) ** 2 + self.noise_sd ** 2
        return float(self.probs @ (per_cell @ ga))

    def excess_reference_risk_table(self, pred: np.ndarray,
                                    gstar: ReferenceWeight) -> float:
        """Exact risk gap to the pointwise optimum pred = mu (never negative)."""
        pred = np.asarray(pred, dtype=np.float64)
        ga = gstar.arm_values(self.K)
        return float(self.probs @ (((self.mu - pred) ** 2) @ ga))

    def policy_regret_table(self, assign: np.ndarray) -> float:
        """Exact mean-outcome gap of an (S,) arm assignment to the best arm."""
        assign = np.asarray(assign, dtype=np.int64)
        chosen = self.mu[np.arange(self.S), assign]
        best = self.mu.min(axis=1)
        return float(self.probs @ (chosen - best))


class ClassificationEnv(_EnvBase):
    """Bandit feedback on a labeled table.

    Contexts are feature rows drawn uniformly with replacement; pulling arm
    ``a`` on a row with label ``L`` yields ``Y ~ N(1{a == L}, 1)``, so the
    label's arm has the highest mean outcome.  This environment is
    reward-convention (bigger is better); learners that minimize cost
    should negate outcomes upstream if they need to.
    """

    def __init__(self, features, labels, K: int | None = None):
        features = np.asarray(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if features.ndim != 2 or labels.shape != (features.shape[0],):
            raise ValueError("features must be (n, d) with matching labels (n,)")
        if features.shape[0] == 0:
            raise ValueError("empty table")
        self.features = features
        self.labels = labels
        self.n = features.shape[0]
        self.d = features.shape[1]
        inferred = int(labels.max()) + 1
        self.K = inferred if K is None else int(K)
        if self.K < inferred:
            raise ValueError(f"K={K} but labels run up to {inferred - 1}")

    @property
    def outcome_scale(self) -> float:
        return 1.0

    def draw_states(self, T: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(T)
        return np.minimum((u * self.n).astype(np.int64), self.n - 1)

    def presample(self, T: int, rng: np.random.Generator) -> RoundPlan:
        s = self.draw_states(T, rng)
        mu = (self.labels[s, None] == np.arange(self.K)[None, :]).astype(np.float64)
        sd = np.ones((T, self.K))
        return RoundPlan(X=self.features[s], mu=mu, sd=sd, state=s)

    def mean_outcome_matrix(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        idx = np.empty(X.shape[0], dtype=np.int64)
        for i, x in enumerate(X):
            d2 = np.sum((self.features - x) ** 2, axis=1)
            idx[i] = int(np.argmin(d2))
        return (self.labels[idx, None] == np.arange(self.K)[None, :]).astype(np.float64)


def build_env(spec: dict):
    """Construct an environment from a plain-dict description.

    Kinds: ``linear`` (theta or coef_seed), ``quadratic`` (adds quad /
    quad_scale), ``discrete`` (support, probs, mu, noise_sd), and
    ``classification`` (features, labels).
    """
    if "kind" not in spec:
        raise ValueError("environment spec needs a 'kind'")
    kind = spec["kind"]
    if kind == "linear":
        if "theta" in spec:
            return LinearEnv(np.asarray(spec["theta"]),
                             noise_std=spec.get("noise_std", 0.5))
        return LinearEnv.from_seed(
            K=int(spec["K"]), d=int(spec["d"]),
            coef_seed=int(spec.get("coef_seed", 0)),
            noise_std=spec.get("noise_std", 0.5),
        )
    if kind == "quadratic":
        if "theta" in spec:
            return QuadraticEnv(np.asarray(spec["theta"]), np.asarray(spec["quad"]),
                                noise_std=spec.get("noise_std", 0.5))
        return QuadraticEnv.from_seed(
            K=int(spec["K"]), d=int(spec["d"]),
            coef_seed=int(spec.get("coef_seed", 0)),
            noise_std=spec.get("noise_std", 0.5),
            quad_scale=spec.get("quad_scale", 1.0),
        )
    if kind == "discrete":
        return DiscreteEnv(spec["support"], spec["probs"], spec["mu"],
                           noise_sd=spec.get("noise_sd", 0.0))
    if kind == "classification":
        if "path" in spec:
            blob = np.load(spec["path"], allow_pickle=False)
            return ClassificationEnv(blob["features"], blob["labels"],
                                     K=spec.get("K"))
        return ClassificationEnv(spec["features"], spec["labels"],
                                 K=spec.get("K"))
    raise ValueError(f"unknown environment kind: {kind!r}")
