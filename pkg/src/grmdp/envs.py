"""Generators for the benchmark, hard-instance and trap environments, plus the offline sampler."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .model import (S0, S1, S2, BetaMeasures, BlockedFeatures, ConfigError, DiscreteMeasures, EnvSpec,
                    HardInstanceFeatures, OfflineDataset, RewardNoise, SiteData)

log = logging.getLogger(__name__)


def rng_for(seed: int, *keys: int) -> np.random.Generator:
    """Independent stream for ``(seed, *keys)``; order of use never matters."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


# stream ids for derived generators
_SAMPLE, _HARD, _TRAP_SUBSET = 1, 2, 3


@dataclass(frozen=True)
class BenchmarkEnvParams:
    K: int = 3
    p: int = 3
    A: int = 10
    H: int = 7
    theta_low: float = 0.1
    theta_high: float = 0.9
    base_low: float = 1.0
    base_high: float = 3.0
    beta_param_floor: float = 0.5
    site_shift_scale: float = 0.5
    step_shift_scale: float = 0.5
    noise: RewardNoise = field(default_factory=lambda: RewardNoise("uniform", 0.2))

    def __post_init__(self):
        if self.beta_param_floor <= 0:
            raise ConfigError("beta_param_floor must be positive")
        if not 0 < self.theta_low <= self.theta_high < 1:
            raise ConfigError("theta bounds must satisfy 0 < low <= high < 1")
        if min(self.K, self.p, self.A, self.H) < 1:
            raise ConfigError("K, p, A, H must be positive")


def _beta_shapes(rng, K, H, d, p, base_low, base_high, floor, site_scale, step_scale):
    # leading axis 2 = (alpha, beta)
    base = rng.uniform(base_low, base_high, size=(2, 1, 1, d, p))
    site = rng.uniform(-1, 1, size=(2, K, 1, d, p)) * site_scale
    step = rng.uniform(-1, 1, size=(2, 1, H, d, p)) * step_scale
    shapes = np.maximum(floor, base + site + step)
    return shapes[0], shapes[1]


def gen_benchmark_env(params: BenchmarkEnvParams, seed: int) -> EnvSpec:
    """Blocked-feature linear MDP with uniform rewards and site/step-shifted Beta transitions."""
    P = params
    fm = BlockedFeatures(P.p, P.A)
    rng = np.random.default_rng(seed)
    theta = rng.uniform(P.theta_low, P.theta_high, size=(P.K, P.H, fm.d))
    alpha, beta = _beta_shapes(rng, P.K, P.H, fm.d, P.p, P.base_low, P.base_high,
                               P.beta_param_floor, P.site_shift_scale, P.step_shift_scale)
    return EnvSpec(fm, theta, BetaMeasures(alpha, beta, P.beta_param_floor), P.noise,
                   seed=seed, meta={"kind": "benchmark"})


# ---------------------------------------------------------------------------
# hard instance


def hard_instance_delta(n12: int) -> float:
    """Gap ``(1/8) sqrt(3 / (2 n12))`` for ``n12 = n_1 + n_2`` realized first-step counts."""
    return math.sqrt(3.0 / (2.0 * n12)) / 8.0


def hard_instance_env(p1, p2, H: int, A: int, seed: int | None = None, meta=None) -> EnvSpec:
    """Ground truth for the three-state chain given per-site success probabilities."""
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    K = p1.size
    p3 = np.minimum(p1, p2)
    fm = HardInstanceFeatures(A)
    d = fm.d
    theta = np.zeros((K, H, d))
    theta[:, :, A] = 1.0  # r(s1) = 1
    probs = np.zeros((K, H, d, 3))
    success = np.concatenate([p1[:, None], p2[:, None], np.repeat(p3[:, None], A - 2, axis=1)], axis=1)
    probs[:, :, :A, S1] = success[:, None, :]
    probs[:, :, :A, S2] = 1.0 - success[:, None, :]
    probs[:, :, A, S1] = 1.0
    probs[:, :, A + 1, S2] = 1.0
    info = {"kind": "hard_instance", "p1": p1.tolist(), "p2": p2.tolist(), "p3": p3.tolist()}
    info.update(meta or {})
    return EnvSpec(fm, theta, DiscreteMeasures(probs), RewardNoise("none"), n_states=3,
                   initial_state=S0, seed=seed, meta=info)


def gen_hard_instance(seed: int, K: int, A: int, H: int, N_list) -> tuple[EnvSpec, OfflineDataset]:
    """Draw first actions, set each site's gap from its realized counts, then roll out.

    A site whose first actions never hit ``b_1`` or ``b_2`` is redrawn from a
    derived sub-seed.
    """
    if A < 3:
        raise ConfigError("hard instance needs A >= 3")
    N_list = list(N_list)
    if len(N_list) != K:
        raise ConfigError(f"need {K} site sizes, got {len(N_list)}")
    fm = HardInstanceFeatures(A)
    first_actions, rngs, n12 = [], [], []
    for k, N in enumerate(N_list):
        attempt = 0
        while True:
            rng = rng_for(seed, _HARD, k, attempt)
            a1 = rng.integers(0, A, size=N)
            n = int(np.sum(a1 < 2))
            if n > 0:
                break
            attempt += 1
            log.info("site %d: no b_1/b_2 first actions, redrawing (attempt %d)", k, attempt)
        first_actions.append(a1)
        rngs.append(rng)
        n12.append(n)
    delta = np.array([hard_instance_delta(n) for n in n12])
    env = hard_instance_env(0.5 + delta, 0.5 - delta, H, A, seed,
                            {"delta": delta.tolist(), "n12": n12, "N": N_list})
    sites = []
    for k, (N, a1, rng) in enumerate(zip(N_list, first_actions, rngs)):
        states = np.zeros((N, H + 1), dtype=int)
        actions = np.empty((N, H), dtype=int)
        actions[:, 0] = a1
        if H > 1:
            actions[:, 1:] = rng.integers(0, A, size=(N, H - 1))
        p_success = env.measures.probs[k, 0, a1, S1]
        states[:, 1] = np.where(rng.random(N) < p_success, S1, S2)
        states[:, 2:] = states[:, 1:2]
        rewards = (states[:, :-1] == S1).astype(float)
        sites.append(SiteData.from_trajectories(states, actions, rewards))
    return env, OfflineDataset(sites, H)


def hard_instance_subopt(env: EnvSpec, action: int) -> float:
    """Closed-form robust suboptimality at ``s0`` of choosing ``action`` first."""
    H = env.H
    p_first = env.measures.probs[:, 0, action, S1]
    return (H - 1) * (min(env.meta["p1"]) - float(p_first.min()))


# ---------------------------------------------------------------------------
# trap environment


@dataclass(frozen=True)
class TrapEnvParams:
    """Two-action environment: a well-covered safe action and a sparsely covered trap.

    Rewards are constant within each action block, so every state is a reference
    state with means ``safe_mean`` and ``trap_mean``. Both actions share the
    same transition factors, which makes the safe action optimal everywhere by
    exactly ``safe_mean - trap_mean`` per step.
    """

    K: int = 3
    H: int = 7
    p: int = 3
    safe_mean: float = 0.70
    trap_mean: float = 0.65
    trap_count_cap: int = 4
    safe_action: int = 0
    noise: RewardNoise = field(default_factory=lambda: RewardNoise("uniform", 1.0))
    base_low: float = 1.0
    base_high: float = 3.0
    beta_param_floor: float = 0.5
    site_shift_scale: float = 0.5
    step_shift_scale: float = 0.5

    def __post_init__(self):
        if not 1 <= self.trap_count_cap:
            raise ConfigError("trap_count_cap must be at least 1")
        if not 0 < self.trap_mean < self.safe_mean < 1:
            raise ConfigError("need 0 < trap_mean < safe_mean < 1")
        if self.safe_action not in (0, 1):
            raise ConfigError("safe_action must be 0 or 1")

    @property
    def A(self) -> int:
        return 2

    @property
    def trap_action(self) -> int:
        return 1 - self.safe_action


def gen_trap_env(params: TrapEnvParams, seed: int) -> EnvSpec:
    P = params
    fm = BlockedFeatures(P.p, 2)
    rng = np.random.default_rng(seed)
    theta = np.empty((P.K, P.H, fm.d))
    for a, mean in ((P.safe_action, P.safe_mean), (P.trap_action, P.trap_mean)):
        theta[:, :, a * P.p:(a + 1) * P.p] = mean
    alpha, beta = _beta_shapes(rng, P.K, P.H, P.p, P.p, P.base_low, P.base_high,
                               P.beta_param_floor, P.site_shift_scale, P.step_shift_scale)
    # both action blocks share the transition factors
    alpha = np.concatenate([alpha, alpha], axis=2)
    beta = np.concatenate([beta, beta], axis=2)
    meta = {"kind": "trap", "safe_action": P.safe_action, "trap_action": P.trap_action,
            "trap_count_cap": P.trap_count_cap}
    return EnvSpec(fm, theta, BetaMeasures(alpha, beta, P.beta_param_floor), P.noise, seed=seed, meta=meta)


# ---------------------------------------------------------------------------
# offline sampling


def _behavior_actions(env: EnvSpec, behavior, N: int, H: int, rng) -> np.ndarray:
    kind, cap = (behavior, None) if isinstance(behavior, str) else behavior
    A = env.n_actions
    if kind == "uniform":
        return rng.integers(0, A, size=(N, H))
    if kind == "trap_capped":
        if env.meta.get("kind") != "trap":
            raise ConfigError("trap_capped behavior needs a trap environment")
        safe, trap = env.meta["safe_action"], env.meta["trap_action"]
        actions = np.full((N, H), safe, dtype=int)
        n_trap = min(int(cap), N)
        for h in range(H):
            actions[rng.choice(N, size=n_trap, replace=False), h] = trap
        return actions
    raise ConfigError(f"unknown behavior {behavior!r}")


def _draw_component(phi: np.ndarray, rng) -> np.ndarray:
    u = rng.random(len(phi))
    idx = (np.cumsum(phi, axis=1) < u[:, None]).sum(axis=1)
    # rounding can push u past the last cumulative sum; fall back to the last nonzero coordinate
    last = phi.shape[1] - 1 - np.argmax(phi[:, ::-1] > 0, axis=1)
    return np.minimum(idx, last)


def sample_site(env: EnvSpec, k: int, N: int, behavior, rng) -> SiteData:
    """Roll out ``N`` trajectories of site ``k``.

    Next states use the mixture form of the linear kernel: pick coordinate ``i``
    with probability ``phi_i(s, a)``, then draw from factor ``mu_{h,i}^k``.
    """
    H, fm = env.H, env.feature_map
    actions = _behavior_actions(env, behavior, N, H, rng)
    if env.finite:
        states = np.empty((N, H + 1), dtype=int)
        states[:, 0] = env.initial_state if env.initial_state is not None else rng.integers(0, env.n_states, N)
    else:
        states = np.empty((N, H + 1, fm.p))
        states[:, 0] = rng.random((N, fm.p))
    rewards = np.empty((N, H))
    for h in range(H):
        phi = fm.batch(states[:, h], actions[:, h])
        mean = phi @ env.theta[k, h]
        rewards[:, h] = np.clip(mean + env.reward_noise.sample(rng, N), 0.0, 1.0)
        comp = _draw_component(phi, rng)
        if env.finite:
            cdf = np.cumsum(env.measures.probs[k, h, comp], axis=1)
            states[:, h + 1] = np.minimum((cdf < rng.random(N)[:, None]).sum(axis=1), env.n_states - 1)
        else:
            states[:, h + 1] = rng.beta(env.measures.alpha[k, h, comp], env.measures.beta[k, h, comp])
    return SiteData.from_trajectories(states, actions, rewards)


def sample_trajectories(env: EnvSpec, N, behavior="uniform", seed: int = 0) -> OfflineDataset:
    """Offline dataset with ``N[k]`` trajectories at site ``k``; each site has its own derived stream."""
    N = list(N)
    if len(N) != env.K:
        raise ConfigError(f"need {env.K} site sizes, got {len(N)}")
    sites = []
    for k, n in enumerate(N):
        if n == 0:
            sites.append(SiteData.empty(None if env.finite else env.feature_map.p))
        else:
            sites.append(sample_site(env, k, int(n), behavior, rng_for(seed, _SAMPLE, k)))
    return OfflineDataset(sites, env.H)


def uniform_states(env: EnvSpec, m: int, rng) -> np.ndarray:
    if env.finite:
        return rng.integers(0, env.n_states, size=m)
    return rng.random((m, env.feature_map.p))
