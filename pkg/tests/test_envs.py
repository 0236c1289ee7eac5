"""Environment sampling, exact finite-sum risk tables, MC cross-checks."""

import numpy as np
import pytest

from iswerm_lab.data import ReferenceWeight
from iswerm_lab.envs import (ClassificationEnv, DiscreteEnv, LinearEnv,
                             QuadraticEnv, build_env)

ONE = ReferenceWeight.constant_one()
UNI = ReferenceWeight.uniform()


def test_linear_zero_coefficients():
    env = LinearEnv(np.zeros((2, 3)), noise_std=0.3)
    rng = np.random.default_rng(0)
    plan = env.presample(100, rng)
    assert np.all(plan.mu == 0.0)
    assert env.outcome_scale == 0.0


def test_linear_sign_symmetric_optimum():
    # theta_0 = (0, 1), theta_1 = (0, -1): cost of arm 0 is x, arm 1 is -x,
    # so the cheaper arm is 0 exactly when x < 0.
    env = LinearEnv(np.array([[0.0, 1.0], [0.0, -1.0]]))
    X = np.array([[-0.7], [-0.1], [0.2], [0.9]])
    mu = env.mean_outcome_matrix(X)
    best = mu.argmin(axis=1)
    assert np.array_equal(best, [0, 0, 1, 1])


def test_linear_uniform_value_zero_case():
    # zero coefficients: mean outcome of any policy is 0; MC mean of raw
    # outcomes under uniform actions must sit within a few noise SEs of 0
    env = LinearEnv(np.zeros((2, 3)), noise_std=1.0)
    rng = np.random.default_rng(1)
    n = 10 ** 6
    plan = env.presample(n, rng)
    arms = rng.integers(0, 2, size=n)
    y = plan.mu[np.arange(n), arms] + plan.sd[np.arange(n), arms] \
        * rng.standard_normal(n)
    assert abs(y.mean()) < 3.0 / np.sqrt(n)


def test_linear_context_second_moment():
    env = LinearEnv.from_seed(K=2, d=2, coef_seed=3)
    rng = np.random.default_rng(2)
    X = env.presample(200_000, rng).X
    phi = np.hstack([np.ones((len(X), 1)), X])
    emp = phi.T @ phi / len(X)
    assert np.allclose(emp, env.feature_second_moment(), atol=5e-3)


def test_linear_outcome_scale_is_max_l1():
    theta = np.array([[0.5, -1.0, 2.0], [0.1, 0.2, 0.3]])
    assert LinearEnv(theta).outcome_scale == 3.5


def test_quadratic_mean_matrix():
    theta = np.array([[1.0, 2.0], [0.0, -1.0]])
    quad = np.array([[3.0], [0.5]])
    env = QuadraticEnv(theta, quad)
    x = np.array([[0.5]])
    mu = env.mean_outcome_matrix(x)
    assert np.allclose(mu, [[1 + 2 * 0.5 + 3 * 0.25, -0.5 + 0.5 * 0.25]])


def test_discrete_single_context_gap():
    env = DiscreteEnv([[0.0]], [1.0], [[0.0, 1.0]])
    gaps = env.mu.max(axis=1) - env.mu.min(axis=1)
    assert np.all(gaps == 1.0)


def test_discrete_symmetric_optimum_value():
    env = DiscreteEnv([[0.0], [1.0]], [0.5, 0.5], [[0.0, 1.0], [1.0, 0.0]])
    best_value = float(env.probs @ env.mu.min(axis=1))
    assert best_value == 0.0
    # both per-context argmin assignments have zero regret
    assert env.policy_regret_table(env.mu.argmin(axis=1)) == 0.0


def test_discrete_uniform_policy_value_matches_mc():
    # exact finite sum: mean of all mu entries; MC with uniform actions
    # must agree within 4 standard errors
    env = DiscreteEnv([[0.0], [1.0]], [0.5, 0.5], [[0.0, 1.0], [1.0, 0.0]],
                      noise_sd=0.5)
    exact = float(env.probs @ env.mu @ UNI.arm_values(2))
    assert exact == 0.5
    rng = np.random.default_rng(3)
    n = 200_000
    plan = env.presample(n, rng)
    arms = rng.integers(0, 2, size=n)
    y = plan.mu[np.arange(n), arms] + plan.sd[np.arange(n), arms] \
        * rng.standard_normal(n)
    assert abs(y.mean() - exact) < 4 * y.std(ddof=1) / np.sqrt(n)


def test_discrete_reference_risk_oracle_predictor():
    env = DiscreteEnv([[0.0], [1.0]], [0.25, 0.75],
                      [[0.1, 0.9], [0.4, 0.2]], noise_sd=0.3)
    # predicting mu exactly leaves only the noise term
    assert np.isclose(env.reference_risk_table(env.mu, ONE), 2 * 0.3 ** 2)
    assert env.excess_reference_risk_table(env.mu, ONE) == 0.0
    # one perturbed cell contributes p(x) * g*(a) * c^2
    pred = env.mu.copy()
    pred[1, 0] += 0.5
    assert np.isclose(env.excess_reference_risk_table(pred, UNI),
                      0.75 * 0.5 * 0.25)


def test_discrete_draw_state_frequencies():
    probs = [0.2, 0.5, 0.3]
    env = DiscreteEnv([[0.0], [1.0], [2.0]], probs,
                      [[0.0, 1.0], [1.0, 0.0], [0.5, 0.5]])
    rng = np.random.default_rng(4)
    s = env.draw_states(100_000, rng)
    freq = np.bincount(s, minlength=3) / len(s)
    assert np.allclose(freq, probs, atol=0.01)


def test_discrete_state_of_nearest():
    env = DiscreteEnv([[0.0], [1.0]], [0.5, 0.5], [[0.0, 1.0], [1.0, 0.0]])
    assert env.state_of(np.array([0.1])) == 0
    assert env.state_of(np.array([0.9])) == 1


def test_discrete_validation():
    with pytest.raises(ValueError):
        DiscreteEnv([[0.0]], [0.9], [[0.0, 1.0]])  # probs don't sum to 1
    with pytest.raises(ValueError):
        DiscreteEnv([[0.0]], [1.0], [[0.0, 1.0], [1.0, 0.0]])  # shape


def test_classification_reward_law():
    feats = np.array([[0.0], [1.0]])
    labels = np.array([0, 1])
    env = ClassificationEnv(feats, labels)
    rng = np.random.default_rng(5)
    n = 100_000
    plan = env.presample(n, rng)
    # play the true label's arm every round: mean reward -> 1 within 3 sigma
    arms = plan.mu.argmax(axis=1)
    y = plan.mu[np.arange(n), arms] + rng.standard_normal(n)
    assert abs(y.mean() - 1.0) < 3.0 / np.sqrt(n)
    # mismatched action has mean 0, unit variance
    y_miss = plan.mu[np.arange(n), (arms + 1) % 2] + rng.standard_normal(n)
    assert abs(y_miss.mean()) < 3.0 / np.sqrt(n)
    assert abs(y_miss.var() - 1.0) < 0.02


def test_presample_deterministic_in_seed():
    env = LinearEnv.from_seed(K=3, d=2, coef_seed=9)
    p1 = env.presample(50, np.random.default_rng(42))
    p2 = env.presample(50, np.random.default_rng(42))
    assert np.array_equal(p1.X, p2.X) and np.array_equal(p1.mu, p2.mu)


def test_build_env_round_trips():
    lin = build_env({"kind": "linear", "d": 2, "K": 3, "coef_seed": 1,
                     "noise_std": 0.4})
    assert isinstance(lin, LinearEnv) and lin.K == 3 and lin.d == 2
    quad = build_env({"kind": "quadratic", "d": 1, "K": 2, "coef_seed": 1,
                      "quad_scale": 0.5, "noise_std": 0.4})
    assert isinstance(quad, QuadraticEnv)
    disc = build_env({"kind": "discrete", "support": [[0.0], [1.0]],
                      "probs": [0.5, 0.5], "mu": [[0.0, 1.0], [1.0, 0.0]],
                      "noise_sd": 0.1})
    assert isinstance(disc, DiscreteEnv)
    with pytest.raises(ValueError):
        build_env({"kind": "martian"})
