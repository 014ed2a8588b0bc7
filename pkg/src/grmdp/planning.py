"""Ground-truth robust dynamic programming under feature-wise site mixing.

The adversary mixes sites independently per feature coordinate; because the
objective is linear in each mixture, the worst case sits at a vertex and the
backup collapses to a per-coordinate minimum over sites.

Value functions are plain callables mapping a batch of states to a 1-d array.
Integrals against Beta-product factors are Monte Carlo averages over a pool of
draws that is generated once per environment and shared by every value
function evaluated on it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import numpy as np

from .model import (BetaMeasures, BetaProductFactor, ConfigError, DiscreteFactor, DiscreteMeasures,
                    EnvSpec, MeasureFactor)

ValueFn = Callable[[np.ndarray], np.ndarray]


class Policy(Protocol):
    def act(self, h: int, states) -> np.ndarray: ...


def zero_value(states) -> np.ndarray:
    return np.zeros(len(states))


@dataclass(frozen=True, eq=False)
class MeasurePool:
    """Pre-drawn states from every Beta-product factor, ``samples[k, h, i, n, j]``.

    Discrete environments carry no samples; their integrals are exact.
    """

    samples: np.ndarray | None
    mc_samples: int
    seed: int | None


def build_pool(env: EnvSpec, mc_samples: int = 4096, seed: int | None = 0) -> MeasurePool:
    if isinstance(env.measures, DiscreteMeasures):
        return MeasurePool(None, 0, seed)
    rng = np.random.default_rng(seed)
    m = env.measures
    shape = m.alpha.shape[:3] + (mc_samples,) + m.alpha.shape[3:]
    samples = rng.beta(m.alpha[:, :, :, None, :], m.beta[:, :, :, None, :], size=shape)
    return MeasurePool(samples, mc_samples, seed)


def integrate_mu_V(factor: MeasureFactor, V: ValueFn, samples: np.ndarray | None = None) -> float:
    """``<mu, V>`` for one factor: exact for discrete support, pool average otherwise."""
    if isinstance(factor, DiscreteFactor):
        support = np.asarray(factor.support)
        return float(factor.probs @ V(support))
    if isinstance(factor, BetaProductFactor):
        if samples is None or len(samples) == 0:
            raise ConfigError("continuous factor needs a nonempty sample pool")
        return float(np.mean(V(samples)))
    raise TypeError(f"unsupported factor {factor!r}")


def integrate(env: EnvSpec, pool: MeasurePool, h: int, V: ValueFn,
              sites: Sequence[int] | None = None) -> np.ndarray:
    """``<mu_{h,i}^k, V>`` for all sites and coordinates, shape ``(K, d)``."""
    ks = np.arange(env.K) if sites is None else np.asarray(sites)
    if isinstance(env.measures, DiscreteMeasures):
        values = V(np.arange(env.n_states))
        return env.measures.probs[ks, h - 1] @ values
    if pool.samples is None:
        raise ConfigError("continuous environment needs a sample pool")
    block = pool.samples[ks, h - 1]  # (k, d, M, p)
    k, d, M, p = block.shape
    return V(block.reshape(-1, p)).reshape(k, d, M).mean(axis=-1)


@dataclass(frozen=True)
class RobustBackup:
    """Backup weights ``w_i = min_k [theta_{h,i}^k + <mu_{h,i}^k, V>]`` and the minimizing site."""

    w: np.ndarray
    argmin_site: np.ndarray


def robust_backup(env: EnvSpec, h: int, V_next: ValueFn, pool: MeasurePool,
                  sites: Sequence[int] | None = None) -> RobustBackup:
    ks = np.arange(env.K) if sites is None else np.asarray(sites)
    z = env.theta[ks, h - 1] + integrate(env, pool, h, V_next, ks)
    return RobustBackup(z.min(axis=0), ks[z.argmin(axis=0)])


@dataclass(frozen=True, eq=False)
class RobustPlan:
    """Robust optimal Q/V/policy: ``Q*_h(s, a) = phi(s, a)^T w[h-1]``."""

    feature_map: object
    w: np.ndarray
    argmin_site: np.ndarray

    @property
    def H(self) -> int:
        return self.w.shape[0]

    def q_values(self, h: int, states) -> np.ndarray:
        return self.feature_map.scores(states, self.w[h - 1])

    def act(self, h: int, states) -> np.ndarray:
        return np.argmax(self.q_values(h, states), axis=1)

    def value(self, h: int, states) -> np.ndarray:
        if h > self.H:
            return np.zeros(len(states))
        return self.q_values(h, states).max(axis=1)


def robust_optimal_plan(env: EnvSpec, pool: MeasurePool) -> RobustPlan:
    H, d = env.H, env.d
    w = np.zeros((H, d))
    argmin = np.zeros((H, d), dtype=int)
    plan = RobustPlan(env.feature_map, w, argmin)
    for h in range(H, 0, -1):
        b = robust_backup(env, h, lambda s, h=h: plan.value(h + 1, s), pool)
        w[h - 1] = b.w
        argmin[h - 1] = b.argmin_site
    return plan


def policy_backups(env: EnvSpec, policy: Policy, pool: MeasurePool,
                   sites: Sequence[int] | None = None) -> np.ndarray:
    """Weights ``w^pi_h`` of the robust evaluation recursion, shape ``(H, d)``.

    Restricting ``sites`` to a single index evaluates the policy in that site's own MDP.
    """
    fm = env.feature_map
    w = np.zeros((env.H, env.d))

    def v_pi(h, s):
        if h > env.H:
            return np.zeros(len(s))
        q = fm.scores(s, w[h - 1])
        return q[np.arange(len(q)), policy.act(h, s)]

    for h in range(env.H, 0, -1):
        w[h - 1] = robust_backup(env, h, lambda s, h=h: v_pi(h + 1, s), pool, sites).w
    return w


def robust_policy_value(env: EnvSpec, policy: Policy, states, pool: MeasurePool,
                        sites: Sequence[int] | None = None) -> np.ndarray:
    """Robust value ``V_1^pi`` at each of ``states``."""
    w = policy_backups(env, policy, pool, sites)
    q = env.feature_map.scores(states, w[0])
    return q[np.arange(len(q)), policy.act(1, states)]


def suboptimality(env: EnvSpec, policy: Policy, states, pool: MeasurePool,
                  plan: RobustPlan | None = None) -> np.ndarray:
    plan = robust_optimal_plan(env, pool) if plan is None else plan
    return plan.value(1, states) - robust_policy_value(env, policy, states, pool)


def evaluation_error_iota(env: EnvSpec, h: int, artifact, pool: MeasurePool):
    """Pointwise ``(B_h V_hat_{h+1})(s, a) - Q_hat_h(s, a)`` for a fitted artifact.

    Returns a function of ``(states, actions)``.
    """
    w_true = robust_backup(env, h, lambda s: artifact.value(h + 1, s), pool).w

    def iota(states, actions) -> np.ndarray:
        idx = np.arange(len(np.atleast_1d(actions)))
        a = np.asarray(actions, dtype=int)
        truth = env.feature_map.scores(states, w_true)[idx, a]
        return truth - artifact.q_values(h, states)[idx, a]

    return iota
