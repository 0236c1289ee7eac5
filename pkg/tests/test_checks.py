"""Exact validators: unbiasedness, variance bounds, margin chain, scaling."""

import numpy as np
import pytest

from iswerm_lab.checks import (check_is_unbiasedness,
                               check_lipschitz_square_loss,
                               check_margin_variance_bound,
                               check_square_loss_variance_bound,
                               sup_process_scaling)
from iswerm_lab.data import ReferenceWeight
from iswerm_lab.envs import DiscreteEnv


def rand_logging_tables(rng, rounds, S, K):
    raw = rng.uniform(0.05, 1.0, size=(rounds, S, K))
    return raw / raw.sum(axis=2, keepdims=True)


def noisy_env(seed=0):
    rng = np.random.default_rng(seed)
    return DiscreteEnv(np.arange(3.0).reshape(-1, 1), [0.5, 0.3, 0.2],
                       rng.uniform(-1, 1, (3, 2)), noise_sd=0.4)


# ---------------------------------------------------------------------------
# unbiasedness
# ---------------------------------------------------------------------------


def test_unbiasedness_gstar_logging_trivial():
    env = noisy_env()
    uniform = np.full((5, 3, 2), 0.5)
    rep = check_is_unbiasedness(env, uniform, env.mu * 0.3,
                                ReferenceWeight.uniform())
    assert rep.passed and rep.statistic < 1e-12


def test_unbiasedness_many_random_sequences():
    env = noisy_env(1)
    for seq_seed in range(20):
        rng = np.random.default_rng(100 + seq_seed)
        g_seq = rand_logging_tables(rng, 30, env.S, env.K)
        f = rng.uniform(-1, 1, (env.S, env.K))
        rep = check_is_unbiasedness(env, g_seq, f, ReferenceWeight.uniform())
        assert rep.passed, f"seq {seq_seed}: stat {rep.statistic}"


def test_unbiasedness_rhs_hand_value():
    env = DiscreteEnv([[0.0], [1.0]], [0.4, 0.6], [[0.0, 1.0], [2.0, 0.0]],
                      noise_sd=0.5)
    f = np.zeros((2, 2))
    rep = check_is_unbiasedness(env, [np.full((2, 2), 0.5)], f,
                                ReferenceWeight.uniform())
    # rhs = sum_s p_s sum_a (1/K) [(mu-0)^2 + sd^2]
    hand = 0.4 * 0.5 * (0.25 + 1.25) + 0.6 * 0.5 * (4.25 + 0.25)
    assert np.isclose(rep.details["rhs"], hand)


def test_unbiasedness_corrupted_propensities_fail():
    env = noisy_env(2)
    rng = np.random.default_rng(7)
    g_seq = rand_logging_tables(rng, 10, env.S, env.K)
    recorded = g_seq.copy()
    recorded[3, 1, 0] *= 1.5  # logged propensity disagrees with the sampler
    rep = check_is_unbiasedness(env, g_seq, env.mu, ReferenceWeight.uniform(),
                                recorded_g_seq=recorded)
    assert not rep.passed


def test_unbiasedness_rejects_nonpositive_propensity():
    env = noisy_env(3)
    bad = np.full((1, env.S, env.K), 0.5)
    bad[0, 0, 0] = 0.0
    with pytest.raises(ValueError):
        check_is_unbiasedness(env, bad, env.mu, ReferenceWeight.uniform())


# ---------------------------------------------------------------------------
# squared-loss variance bound
# ---------------------------------------------------------------------------


def noiseless_env(seed):
    rng = np.random.default_rng(seed)
    return DiscreteEnv(np.arange(4.0).reshape(-1, 1), [0.3, 0.3, 0.2, 0.2],
                       rng.uniform(-0.8, 0.8, (4, 3)), noise_sd=0.0)


def test_variance_bound_holds_on_seeded_envs():
    for seed in range(3):
        rep = check_square_loss_variance_bound(noiseless_env(seed),
                                               ReferenceWeight.uniform(),
                                               n_f=300, seed=seed)
        assert rep.passed and rep.statistic <= 1.0 + 1e-9


def test_variance_bound_detects_wrong_minimizer():
    env = noiseless_env(5)
    rep = check_square_loss_variance_bound(env, ReferenceWeight.uniform(),
                                           n_f=500, seed=0,
                                           f1_table=env.mu + 0.5)
    assert not rep.passed and not rep.details["f1_is_minimizer"]


def test_variance_bound_requires_noiseless():
    with pytest.raises(ValueError):
        check_square_loss_variance_bound(noisy_env(), ReferenceWeight.uniform())


# ---------------------------------------------------------------------------
# Lipschitz constant
# ---------------------------------------------------------------------------


def test_lipschitz_square_loss():
    rep = check_lipschitz_square_loss(2.25, n_samples=200_000, seed=0)
    assert rep.passed
    # random corners approach the tight ratio 1 but never exceed it
    assert 0.9 <= rep.statistic <= 1.0


# ---------------------------------------------------------------------------
# margin chain
# ---------------------------------------------------------------------------


def margin_env(nu):
    # gap atoms spaced so the measured CDF envelope matches the exponent
    if nu == 1:
        gapvals = [0.25, 0.5, 0.75, 1.0]
    else:
        gapvals = [0.5, 0.7071, 0.8660, 1.0]
    mu = np.array([[0.0, g] for g in gapvals])
    return DiscreteEnv(np.arange(4.0).reshape(-1, 1), [0.25] * 4, mu,
                       noise_sd=0.0)


def test_margin_chain_nu_1_and_2():
    for nu in (1.0, 2.0):
        rep = check_margin_variance_bound(margin_env(nu), nu,
                                          n_policies=500, seed=11)
        assert rep.passed, f"nu={nu}: stat {rep.statistic}"
        assert rep.details["worst_loss_ratio"] <= 1.0 + 1e-12


def test_margin_chain_nu_inf_markov():
    env = DiscreteEnv([[0.0], [1.0]], [0.5, 0.5],
                      [[0.0, 0.5], [0.0, 0.8]], noise_sd=0.0)
    rep = check_margin_variance_bound(env, float("inf"), n_policies=500,
                                      seed=12)
    assert rep.passed


def test_margin_kappa_measured_exactly():
    env = DiscreteEnv([[0.0], [1.0]], [0.3, 0.7],
                      [[0.0, 0.5], [0.0, 1.0]], noise_sd=0.0)
    rep = check_margin_variance_bound(env, 1.0, n_policies=10, seed=0)
    # atoms: P(gap<=0.5)=0.3 -> M*0.3/0.5 = 0.6; P(gap<=1)=1 -> M*1/1 = 1
    assert rep.details["kappa"] == 1.0


def test_margin_chain_undersized_kappa_fails():
    env = margin_env(1)
    rep = check_margin_variance_bound(env, 1.0, n_policies=200, seed=1,
                                      kappa=1e-3)
    assert not rep.passed


def test_margin_chain_preconditions():
    noisy = DiscreteEnv([[0.0]], [1.0], [[0.0, 1.0]], noise_sd=0.1)
    with pytest.raises(ValueError):
        check_margin_variance_bound(noisy, 1.0)
    tied = DiscreteEnv([[0.0]], [1.0], [[0.0, 0.0, 1.0]], noise_sd=0.0)
    with pytest.raises(ValueError):
        check_margin_variance_bound(tied, 1.0)
    shifted = DiscreteEnv([[0.0]], [1.0], [[0.2, 1.0]], noise_sd=0.0)
    with pytest.raises(ValueError):
        check_margin_variance_bound(shifted, 1.0)


# ---------------------------------------------------------------------------
# sup-process scaling
# ---------------------------------------------------------------------------


def test_sup_process_scaling_smoke():
    rng = np.random.default_rng(0)
    env = DiscreteEnv(np.arange(3.0).reshape(-1, 1), [0.4, 0.35, 0.25],
                      rng.uniform(-1, 1, (3, 2)), noise_sd=0.5)
    base = rng.uniform(-1, 1, (4, 3, 2))
    xi = np.concatenate([base, -base])
    reports = sup_process_scaling(env, xi, 1.0, ReferenceWeight.uniform(),
                                  betas=[0.0], T_grid=(256, 1024, 4096),
                                  n_reps=40, master_seed=17,
                                  slope_tol=0.25, n_boot=50)
    assert len(reports) == 1
    rep = reports[0]
    assert rep.passed, f"slope {rep.statistic}"
    assert "beta=0" in rep.name
    assert rep.details["target"] == -0.5


def test_sup_process_rejects_unbounded_tables():
    env = DiscreteEnv([[0.0]], [1.0], [[0.0, 0.5]], noise_sd=0.0)
    with pytest.raises(ValueError):
        sup_process_scaling(env, np.full((1, 1, 2), 2.0), 1.0,
                            ReferenceWeight.uniform(), [0.0],
                            (64, 128, 256), 2, 0)
