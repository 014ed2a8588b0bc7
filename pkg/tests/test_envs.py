import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from grmdp.envs import (BenchmarkEnvParams, TrapEnvParams, gen_benchmark_env, gen_hard_instance, gen_trap_env,
                        hard_instance_delta, hard_instance_subopt, rng_for, sample_site, sample_trajectories)
from grmdp.model import S0, S1, S2, ConfigError, DiscreteMeasures, EnvSpec, HardInstanceFeatures, validate_dataset
from grmdp.planning import build_pool, robust_optimal_plan
from grmdp.serialize import env_to_dict


@given(st.integers(0, 2**31))
@settings(max_examples=20)
def test_benchmark_env_bounds(seed):
    P = BenchmarkEnvParams()
    env = gen_benchmark_env(P, seed)
    assert env.theta.min() >= 0.1 and env.theta.max() <= 0.9
    assert env.measures.alpha.min() >= P.beta_param_floor and env.measures.beta.min() >= P.beta_param_floor
    assert env.theta.shape == (3, 7, 30)


def test_benchmark_env_deterministic():
    assert env_to_dict(gen_benchmark_env(BenchmarkEnvParams(), 5)) == env_to_dict(gen_benchmark_env(BenchmarkEnvParams(), 5))


def test_benchmark_floor_clamps_extreme_shifts():
    P = BenchmarkEnvParams(base_low=1.0, base_high=1.0, site_shift_scale=10.0, step_shift_scale=10.0)
    env = gen_benchmark_env(P, 0)
    assert env.measures.alpha.min() == 0.5
    assert np.sum(env.measures.alpha == 0.5) > 0


def test_benchmark_params_validation():
    with pytest.raises(ConfigError):
        BenchmarkEnvParams(beta_param_floor=0.0)
    with pytest.raises(ConfigError):
        BenchmarkEnvParams(theta_low=0.0)


def test_hard_instance_delta_example():
    assert hard_instance_delta(96) == pytest.approx(0.015625, abs=1e-15)


def test_hard_instance_structure():
    env, data = gen_hard_instance(3, 3, 7, 10, [50, 80, 40])
    meta = env.meta
    for k, sd in enumerate(data.sites):
        first = sd.a[sd.h == 1]
        n12 = int(np.sum(first < 2))
        assert meta["n12"][k] == n12
        assert meta["delta"][k] == hard_instance_delta(n12)
    np.testing.assert_allclose(np.array(meta["p1"]) + np.array(meta["p2"]), 1.0)
    assert validate_dataset(data, (10, 7)) == []
    # once in s1, every later reward is one
    for sd in data.sites:
        later = sd.h > 1
        assert np.all(sd.r[later & (sd.s == S1)] == 1) and np.all(sd.r[sd.s == S2] == 0)
        assert np.all(sd.r[sd.s == S0] == 0)


def test_hard_instance_optimal_action_is_b1():
    env, _ = gen_hard_instance(0, 4, 7, 40, [100] * 4)
    plan = robust_optimal_plan(env, build_pool(env))
    assert plan.act(1, [S0])[0] == 0
    assert hard_instance_subopt(env, 0) == 0.0
    assert hard_instance_subopt(env, 1) > 0


def test_hard_instance_redraws_without_b1_b2():
    # A large, N=1: the first draw often misses b1/b2; a redraw must still give n12 >= 1
    for seed in range(20):
        env, _ = gen_hard_instance(seed, 1, 40, 2, [1])
        assert env.meta["n12"][0] == 1


def test_trap_env_means():
    P = TrapEnvParams()
    env = gen_trap_env(P, 0)
    s = np.random.default_rng(0).random((5, P.p))
    np.testing.assert_allclose(env.mean_reward(0, 1, s, np.full(5, P.safe_action)), 0.70, atol=1e-9)
    np.testing.assert_allclose(env.mean_reward(2, 7, s, np.full(5, P.trap_action)), 0.65, atol=1e-9)
    assert env_to_dict(gen_trap_env(P, 0)) == env_to_dict(env)
    assert env.n_actions == 2


def test_trap_params_validation():
    with pytest.raises(ConfigError):
        TrapEnvParams(trap_mean=0.8)
    with pytest.raises(ConfigError):
        TrapEnvParams(trap_count_cap=0)


def test_trap_capped_counts_exact():
    env = gen_trap_env(TrapEnvParams(H=3), 1)
    data = sample_trajectories(env, [100_000, 3, 50], ("trap_capped", 5), 2)
    trap = env.meta["trap_action"]
    for sd, n in zip(data.sites, [100_000, 3, 50]):
        for h in (1, 2, 3):
            assert np.sum(sd.a[sd.rows(h)] == trap) == min(5, n)


def test_trap_capped_requires_trap_env():
    env = gen_benchmark_env(BenchmarkEnvParams(H=2), 0)
    with pytest.raises(ConfigError):
        sample_trajectories(env, [3, 3, 3], ("trap_capped", 2), 0)


def test_zero_trajectories_gives_empty_site():
    env = gen_benchmark_env(BenchmarkEnvParams(H=2), 0)
    data = sample_trajectories(env, [0, 4, 0], "uniform", 0)
    assert [len(sd) for sd in data.sites] == [0, 8, 0]
    assert data.sizes == [0, 4, 0]


def test_uniform_behavior_frequencies():
    env = gen_benchmark_env(BenchmarkEnvParams(H=1), 0)
    N = 20_000
    sd = sample_trajectories(env, [N, 1, 1], "uniform", 3).sites[0]
    counts = np.bincount(sd.a, minlength=10)
    sigma = np.sqrt(N * 0.1 * 0.9)
    assert np.all(np.abs(counts - N / 10) <= 3 * sigma)


def test_sampled_data_is_valid_and_clipped():
    env = gen_benchmark_env(BenchmarkEnvParams(), 2)
    data = sample_trajectories(env, [30, 20, 50], "uniform", 4)
    assert validate_dataset(data, (7, 10)) == []
    for sd in data.sites:
        assert sd.s.min() >= 0 and sd.s.max() <= 1


def test_sampling_is_deterministic():
    env = gen_trap_env(TrapEnvParams(), 0)
    a = sample_trajectories(env, [10, 10, 10], ("trap_capped", 3), 8)
    b = sample_trajectories(env, [10, 10, 10], ("trap_capped", 3), 8)
    for x, y in zip(a.sites, b.sites):
        assert np.array_equal(x.s, y.s) and np.array_equal(x.r, y.r) and np.array_equal(x.a, y.a)


def test_mixture_sampler_matches_kernel_finite():
    # one step from a fixed state: empirical next-state law vs sum_i phi_i mu_i (chi-square)
    rng = np.random.default_rng(0)
    fm = HardInstanceFeatures(3)
    probs = rng.dirichlet(np.ones(3), size=(1, 1, 5))
    env = EnvSpec(fm, np.zeros((1, 1, 5)), DiscreteMeasures(probs), n_states=3, initial_state=S0)
    sd = sample_site(env, 0, 100_000, "uniform", rng_for(1, 0))
    for a in range(3):
        nxt = sd.s_next[sd.a == a]
        obs = np.bincount(nxt, minlength=3)
        exp = probs[0, 0, a] * len(nxt)
        assert stats.chisquare(obs, exp).pvalue > 1e-4


def test_mixture_sampler_matches_kernel_continuous():
    # probability integral transform of s'_0 under each row's own mixture CDF is uniform
    env = gen_benchmark_env(BenchmarkEnvParams(H=1, K=1, A=2), 0)
    sd = sample_trajectories(env, [20_000], "uniform", 5).sites[0]
    phi = env.feature_map.batch(sd.s, sd.a)
    alpha, beta = env.measures.alpha[0, 0, :, 0], env.measures.beta[0, 0, :, 0]
    cdf = stats.beta.cdf(sd.s_next[:, :1], alpha[None, :], beta[None, :])
    u = np.sum(phi * cdf, axis=1)
    assert stats.kstest(u, "uniform").pvalue > 1e-4
