import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from grmdp.envs import BenchmarkEnvParams, gen_benchmark_env, hard_instance_env
from grmdp.model import (S0, S1, S2, BetaProductFactor, ConfigError, DiscreteFactor, DiscreteMeasures, EnvSpec,
                         HardInstanceFeatures)
from grmdp.planning import (MeasurePool, build_pool, integrate, integrate_mu_V, robust_backup,
                            robust_optimal_plan, robust_policy_value, suboptimality, zero_value)


class Fixed:
    """Policy that plays a fixed action table ``table[h-1][state]``."""

    def __init__(self, table):
        self.table = np.asarray(table)

    def act(self, h, states):
        return self.table[h - 1][np.asarray(states)]


def random_discrete_env(seed, K=2, A=3, H=3):
    """Hard-instance features with arbitrary rewards and kernels on three states."""
    rng = np.random.default_rng(seed)
    fm = HardInstanceFeatures(A)
    theta = rng.uniform(0, 1, size=(K, H, fm.d))
    probs = rng.dirichlet(np.ones(3), size=(K, H, fm.d))
    return EnvSpec(fm, theta, DiscreteMeasures(probs), n_states=3)


def test_integrate_discrete_examples():
    f = DiscreteFactor((S1, S2), np.array([0.6, 0.4]))
    assert integrate_mu_V(f, lambda s: (np.asarray(s) == S1).astype(float)) == pytest.approx(0.6)
    assert integrate_mu_V(f, zero_value) == 0.0
    assert integrate_mu_V(f, lambda s: np.ones(len(s))) == pytest.approx(1.0)


def test_integrate_beta_uses_pool():
    f = BetaProductFactor(np.array([2.0, 3.0]), np.array([1.0, 1.0]))
    samples = np.random.default_rng(0).beta(f.alpha, f.beta, size=(4096, 2))
    assert integrate_mu_V(f, lambda s: np.ones(len(s)), samples) == 1.0
    assert integrate_mu_V(f, lambda s: s[:, 0], samples) == pytest.approx(2 / 3, abs=0.02)
    with pytest.raises(ConfigError):
        integrate_mu_V(f, zero_value, np.zeros((0, 2)))


def test_integrate_requires_pool_for_continuous_env():
    env = gen_benchmark_env(BenchmarkEnvParams(H=2), 0)
    with pytest.raises(ConfigError):
        integrate(env, MeasurePool(None, 0, None), 1, zero_value)


def test_backup_hand_example():
    # theta_i = (0.3, 0.5), <mu, V> = (0.4, 0.1) -> min(0.7, 0.6)
    fm = HardInstanceFeatures(3)
    theta = np.zeros((2, 1, 5))
    theta[:, 0, 0] = [0.3, 0.5]
    probs = np.zeros((2, 1, 5, 3))
    probs[..., S2] = 1.0
    probs[0, 0, 0] = [0, 0.4, 0.6]
    probs[1, 0, 0] = [0, 0.1, 0.9]
    env = EnvSpec(fm, theta, DiscreteMeasures(probs), n_states=3)
    b = robust_backup(env, 1, lambda s: (np.asarray(s) == S1).astype(float), build_pool(env))
    assert b.w[0] == pytest.approx(0.6)
    assert b.argmin_site[0] == 1


@given(st.integers(0, 10_000))
def test_backup_envelope_and_single_site(seed):
    env = random_discrete_env(seed)
    pool = build_pool(env)
    V = lambda s: np.asarray(s, dtype=float) * 0.7
    b = robust_backup(env, 2, V, pool)
    per_site = env.theta[:, 1] + integrate(env, pool, 2, V)
    assert np.all(b.w <= per_site + 1e-15)
    np.testing.assert_array_equal(robust_backup(env, 2, V, pool, sites=[1]).w, per_site[1])
    np.testing.assert_array_equal(robust_backup(env, 2, zero_value, pool).w, env.theta[:, 1].min(axis=0))


@given(st.integers(0, 10_000))
def test_backup_monotone_in_V(seed):
    env = random_discrete_env(seed)
    pool = build_pool(env)
    lo = robust_backup(env, 1, lambda s: np.asarray(s, dtype=float), pool).w
    hi = robust_backup(env, 1, lambda s: np.asarray(s, dtype=float) + 0.5, pool).w
    assert np.all(lo <= hi)


def test_hard_instance_closed_forms():
    p1, p2 = np.array([0.6, 0.55, 0.7]), np.array([0.4, 0.45, 0.3])
    H = 40
    env = hard_instance_env(p1, p2, H, 7)
    pool = build_pool(env)
    plan = robust_optimal_plan(env, pool)
    assert plan.value(1, [S0])[0] == pytest.approx((H - 1) * p1.min(), abs=1e-12)
    assert plan.value(2, [S1])[0] == pytest.approx(H - 1, abs=1e-12)
    assert plan.act(1, [S0])[0] == 0
    b2 = Fixed(np.ones((H, 3), dtype=int))
    assert robust_policy_value(env, b2, [S0], pool)[0] == pytest.approx((H - 1) * p2.min(), abs=1e-12)


def test_wrong_action_suboptimality_arithmetic():
    d = 0.015625
    env = hard_instance_env([0.5 + d] * 2, [0.5 - d] * 2, 40, 7)
    sub = suboptimality(env, Fixed(np.ones((40, 3), dtype=int)), [S0], build_pool(env))
    assert sub[0] == pytest.approx(1.21875, abs=1e-12)


@given(st.integers(0, 10_000))
def test_one_step_plan(seed):
    env = random_discrete_env(seed, H=1)
    plan = robust_optimal_plan(env, build_pool(env))
    w = env.theta[:, 0].min(axis=0)
    expected = env.feature_map.scores(np.arange(3), w).max(axis=1)
    np.testing.assert_allclose(plan.value(1, np.arange(3)), expected, atol=1e-15)


@given(st.integers(0, 10_000))
def test_optimal_policy_value_and_dominance(seed):
    env = random_discrete_env(seed, K=3)
    pool = build_pool(env)
    plan = robust_optimal_plan(env, pool)
    states = np.arange(3)
    np.testing.assert_allclose(robust_policy_value(env, plan, states, pool), plan.value(1, states), atol=1e-12)
    assert np.all(suboptimality(env, Fixed(np.zeros((3, 3), dtype=int)), states, pool, plan) >= -1e-12)
    # robust value never exceeds the value in any single site's own MDP
    robust = robust_policy_value(env, plan, states, pool)
    for k in range(env.K):
        assert np.all(robust <= robust_policy_value(env, plan, states, pool, sites=[k]) + 1e-12)


def test_zero_reward_env_has_zero_value():
    env = random_discrete_env(3)
    zero = EnvSpec(env.feature_map, np.zeros_like(env.theta), env.measures, n_states=3)
    assert np.all(robust_policy_value(zero, Fixed(np.zeros((3, 3), dtype=int)), np.arange(3), build_pool(zero)) == 0)


def brute_force_values(env):
    """Exhaustive minimization over every per-coordinate site assignment at each step."""
    K, H, d = env.theta.shape
    fm = env.feature_map
    V = np.zeros(3)
    for h in range(H, 0, -1):
        Q = np.full((3, env.n_actions), np.inf)
        for assign in itertools.product(range(K), repeat=d):
            idx = np.arange(d)
            w = env.theta[assign, h - 1, idx] + env.measures.probs[assign, h - 1, idx] @ V
            Q = np.minimum(Q, fm.scores(np.arange(3), w))
        V = Q.max(axis=1)
    return V


@pytest.mark.parametrize("seed", [0, 1])
def test_vertex_enumeration_small(seed):
    env = random_discrete_env(seed, K=2, A=3, H=3)
    plan = robust_optimal_plan(env, build_pool(env))
    np.testing.assert_allclose(plan.value(1, np.arange(3)), brute_force_values(env), atol=1e-12)


def test_pool_is_reproducible():
    env = gen_benchmark_env(BenchmarkEnvParams(H=2), 3)
    a = robust_optimal_plan(env, build_pool(env, 256, 9))
    b = robust_optimal_plan(env, build_pool(env, 256, 9))
    assert np.array_equal(a.w, b.w)


def test_mc_policy_value_below_optimum_with_shared_pool():
    env = gen_benchmark_env(BenchmarkEnvParams(H=3), 1)
    pool = build_pool(env, 512, 2)
    states = np.random.default_rng(0).random((50, 3))

    class First:
        def act(self, h, s):
            return np.zeros(len(s), dtype=int)

    assert np.all(suboptimality(env, First(), states, pool) >= -1e-12)
