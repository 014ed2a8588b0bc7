"""Domain types: simplex feature maps, measure factors, environments, datasets, run config."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

SIMPLEX_SUM_TOL = 1e-9
NEGATIVE_TOL = 1e-12

# hard-instance state codes
S0, S1, S2 = 0, 1, 2


class ConfigError(ValueError):
    """Invalid configuration (bad knob, unknown key, inconsistent sizes)."""


class DataError(ValueError):
    """Malformed or non-finite data."""


def as_simplex(x, tol: float = SIMPLEX_SUM_TOL) -> np.ndarray:
    """Validate ``x`` as a point on the probability simplex.

    Entries in ``[-1e-12, 0)`` are clamped to zero; anything more negative, or a
    sum further than ``tol`` from one, raises ``ValueError``.
    """
    v = np.asarray(x, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("simplex vector must be a nonempty 1-d array")
    if not np.all(np.isfinite(v)):
        raise ValueError("simplex vector has non-finite entries")
    if v.min() < -NEGATIVE_TOL:
        raise ValueError(f"simplex vector has negative entry {v.min():.3g}")
    v = np.where(v < 0, 0.0, v)
    if abs(v.sum() - 1.0) > tol:
        raise ValueError(f"simplex vector sums to {v.sum():.12g}, not 1")
    return v


def _normalize_rows(states: np.ndarray) -> np.ndarray:
    s = np.asarray(states, dtype=float)
    total = s.sum(axis=-1, keepdims=True)
    if np.all(total > 0):
        return s / total
    p = s.shape[-1]
    safe = np.where(total > 0, total, 1.0)
    return np.where(total > 0, s / safe, 1.0 / p)


# ---------------------------------------------------------------------------
# feature maps


@dataclass(frozen=True)
class BlockedFeatures:
    """Action-blocked simplex features: block ``a`` holds the l1-normalized state.

    Zero-sum states map to the uniform block ``1/p``.
    """

    p: int
    n_actions: int
    kind = "blocked"

    def __post_init__(self):
        if self.p < 1 or self.n_actions < 1:
            raise ValueError("p and n_actions must be positive")

    @property
    def d(self) -> int:
        return self.p * self.n_actions

    def check_states(self, states) -> np.ndarray:
        s = np.asarray(states, dtype=float)
        if s.ndim == 1:
            s = s[None, :]
        if s.ndim != 2 or s.shape[1] != self.p:
            raise ValueError(f"expected states of width p={self.p}, got shape {np.shape(states)}")
        return s

    def __call__(self, state, action: int) -> np.ndarray:
        return blocked_features(state, action, self.p, self.n_actions)

    def batch(self, states, actions) -> np.ndarray:
        """Feature rows ``phi(s_n, a_n)`` as an ``(n, d)`` array."""
        x = _normalize_rows(self.check_states(states))
        a = np.asarray(actions, dtype=int)
        n = x.shape[0]
        out = np.zeros((n, self.n_actions, self.p))
        out[np.arange(n), a] = x
        return out.reshape(n, self.d)

    def scores(self, states, w) -> np.ndarray:
        """``phi(s, a)^T w`` for every state and action, shape ``(n, A)``."""
        x = _normalize_rows(self.check_states(states))
        return x @ np.asarray(w, dtype=float).reshape(self.n_actions, self.p).T

    def quad_forms(self, states, M) -> np.ndarray:
        """``phi(s, a)^T M phi(s, a)`` for every state and action, shape ``(n, A)``."""
        x = _normalize_rows(self.check_states(states))
        M = np.asarray(M, dtype=float).reshape(self.n_actions, self.p, self.n_actions, self.p)
        A, p = self.n_actions, self.p
        blocks = M[np.arange(A), :, np.arange(A), :]  # (A, p, p)
        xb = (x @ blocks.transpose(1, 0, 2).reshape(p, A * p)).reshape(-1, A, p)
        return np.einsum("nap,np->na", xb, x)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "p": self.p, "n_actions": self.n_actions}


@dataclass(frozen=True)
class HardInstanceFeatures:
    """Three-state chain features of dimension ``A + 2``.

    ``phi(s0, b_j) = e_j``, ``phi(s1, .) = e_{A+1}``, ``phi(s2, .) = e_{A+2}``
    (0-indexed: coordinates ``j``, ``A`` and ``A + 1``).
    """

    n_actions: int
    kind = "hard_instance"
    n_states = 3

    def __post_init__(self):
        if self.n_actions < 3:
            raise ValueError("hard instance needs at least 3 actions")

    @property
    def d(self) -> int:
        return self.n_actions + 2

    def check_states(self, states) -> np.ndarray:
        s = np.atleast_1d(np.asarray(states))
        if s.ndim != 1 or not np.issubdtype(s.dtype, np.integer):
            raise ValueError("hard-instance states are integer codes 0, 1, 2")
        if s.size and (s.min() < 0 or s.max() > 2):
            raise ValueError("hard-instance state code out of range")
        return s.astype(int)

    def _coords(self, states, actions) -> np.ndarray:
        s = self.check_states(states)
        a = np.broadcast_to(np.asarray(actions, dtype=int), s.shape)
        return np.where(s == S0, a, self.n_actions + s - 1)

    def __call__(self, state, action: int) -> np.ndarray:
        return hard_instance_features(state, action, self.n_actions)

    def batch(self, states, actions) -> np.ndarray:
        idx = self._coords(states, actions)
        out = np.zeros((idx.size, self.d))
        out[np.arange(idx.size), idx] = 1.0
        return out

    def scores(self, states, w) -> np.ndarray:
        s = self.check_states(states)
        w = np.asarray(w, dtype=float)
        A = self.n_actions
        table = np.empty((3, A))
        table[S0] = w[:A]
        table[S1] = w[A]
        table[S2] = w[A + 1]
        return table[s]

    def quad_forms(self, states, M) -> np.ndarray:
        return self.scores(states, np.diag(np.asarray(M, dtype=float)))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n_actions": self.n_actions}


FeatureMap = BlockedFeatures | HardInstanceFeatures


def feature_map_from_dict(d: dict) -> FeatureMap:
    kind = d.get("kind")
    if kind == "blocked":
        return BlockedFeatures(int(d["p"]), int(d["n_actions"]))
    if kind == "hard_instance":
        return HardInstanceFeatures(int(d["n_actions"]))
    raise ConfigError(f"unknown feature map kind {kind!r}")


def blocked_features(state, action: int, p: int, A: int) -> np.ndarray:
    s = np.asarray(state, dtype=float)
    if s.shape != (p,):
        raise ValueError(f"state must have length p={p}, got shape {s.shape}")
    if not 0 <= action < A:
        raise ValueError(f"action {action} out of range for A={A}")
    if np.any(s < 0):
        raise ValueError("state entries must be nonnegative")
    out = np.zeros(p * A)
    out[action * p:(action + 1) * p] = _normalize_rows(s)
    return out


def hard_instance_features(state: int, action: int, A: int) -> np.ndarray:
    if A < 3:
        raise ValueError("hard instance needs A >= 3")
    if not 0 <= action < A:
        raise ValueError(f"action {action} out of range for A={A}")
    if state not in (S0, S1, S2):
        raise ValueError(f"unknown hard-instance state {state!r}")
    out = np.zeros(A + 2)
    out[action if state == S0 else A + state - 1] = 1.0
    return out


# ---------------------------------------------------------------------------
# measure factors


@dataclass(frozen=True)
class DiscreteFactor:
    support: tuple
    probs: np.ndarray

    def __post_init__(self):
        if len(self.support) != len(self.probs):
            raise ValueError("support and probs differ in length")
        object.__setattr__(self, "probs", as_simplex(self.probs))


@dataclass(frozen=True)
class BetaProductFactor:
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        b = np.asarray(self.beta, dtype=float)
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("alpha and beta must be equal-length vectors")
        if np.any(a <= 0) or np.any(b <= 0):
            raise ValueError("Beta shape parameters must be positive")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)


MeasureFactor = DiscreteFactor | BetaProductFactor


@dataclass(frozen=True)
class DiscreteMeasures:
    """``probs[k, h, i, s]``: mass of factor ``mu_{h,i}^k`` on state code ``s``."""

    probs: np.ndarray
    kind = "discrete"


@dataclass(frozen=True)
class BetaMeasures:
    """Product-of-Beta factors with shapes ``alpha[k, h, i, j]``, ``beta[k, h, i, j]``."""

    alpha: np.ndarray
    beta: np.ndarray
    floor: float = 0.0
    kind = "beta_product"


@dataclass(frozen=True)
class RewardNoise:
    kind: str = "none"  # none | uniform | gaussian
    scale: float = 0.0  # uniform: full width; gaussian: sigma

    def __post_init__(self):
        if self.kind not in ("none", "uniform", "gaussian"):
            raise ConfigError(f"unknown reward noise kind {self.kind!r}")
        if self.scale < 0:
            raise ConfigError("noise scale must be nonnegative")

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "uniform" and self.scale > 0:
            return rng.uniform(-self.scale / 2, self.scale / 2, size=size)
        if self.kind == "gaussian" and self.scale > 0:
            return rng.normal(0.0, self.scale, size=size)
        return np.zeros(size)


@dataclass(frozen=True, eq=False)
class EnvSpec:
    """Ground truth for a K-site linear MDP.

    ``theta[k, h, i]`` uses a 0-based step index; public APIs take ``h`` in ``1..H``.
    Finite environments index states by integer code ``0..n_states-1``; continuous
    ones live in the unit cube ``[0, 1]^p``.
    """

    feature_map: FeatureMap
    theta: np.ndarray
    measures: DiscreteMeasures | BetaMeasures
    reward_noise: RewardNoise = field(default_factory=RewardNoise)
    n_states: int | None = None  # finite envs only
    initial_state: int | None = None  # finite envs with a fixed start
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        object.__setattr__(self, "theta", theta)
        if theta.ndim != 3 or theta.shape[2] != self.feature_map.d:
            raise ValueError(f"theta must have shape (K, H, d={self.feature_map.d})")
        if not np.all(np.isfinite(theta)) or theta.min() < 0 or theta.max() > 1:
            raise ValueError("theta entries must lie in [0, 1]")
        K, H, d = theta.shape
        if isinstance(self.measures, DiscreteMeasures):
            probs = np.asarray(self.measures.probs, dtype=float)
            if self.n_states is None or probs.shape != (K, H, d, self.n_states):
                raise ValueError("discrete measures must have shape (K, H, d, n_states)")
            if probs.min() < -NEGATIVE_TOL or np.abs(probs.sum(-1) - 1).max() > SIMPLEX_SUM_TOL:
                raise ValueError("discrete measure factors must be probability vectors")
        else:
            if self.n_states is not None:
                raise ValueError("Beta measures require a continuous state space")
            p = self.feature_map.p
            for arr in (self.measures.alpha, self.measures.beta):
                if np.shape(arr) != (K, H, d, p):
                    raise ValueError("Beta shapes must have shape (K, H, d, p)")
                if np.min(arr) <= 0 or np.min(arr) < self.measures.floor:
                    raise ValueError("Beta shape parameter below floor")

    @property
    def K(self) -> int:
        return self.theta.shape[0]

    @property
    def H(self) -> int:
        return self.theta.shape[1]

    @property
    def d(self) -> int:
        return self.theta.shape[2]

    @property
    def n_actions(self) -> int:
        return self.feature_map.n_actions

    @property
    def finite(self) -> bool:
        return self.n_states is not None

    def factor(self, k: int, h: int, i: int) -> MeasureFactor:
        """The measure factor ``mu_{h,i}^k`` (``h`` 1-based)."""
        if isinstance(self.measures, DiscreteMeasures):
            return DiscreteFactor(tuple(range(self.n_states)), self.measures.probs[k, h - 1, i])
        return BetaProductFactor(self.measures.alpha[k, h - 1, i], self.measures.beta[k, h - 1, i])

    def mean_reward(self, k: int, h: int, states, actions) -> np.ndarray:
        """Unclipped linear mean ``phi(s, a)^T theta_h^k``."""
        return self.feature_map.batch(states, actions) @ self.theta[k, h - 1]


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class Transition:
    h: int
    s: object
    a: int
    r: float
    s_next: object


@dataclass(frozen=True, eq=False)
class SiteData:
    """Transitions of one site in long format (one row per transition).

    ``s``/``s_next`` are ``(n, p)`` floats for continuous states or ``(n,)`` ints
    for finite ones. ``h`` is 1-based.
    """

    traj: np.ndarray
    h: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s: np.ndarray
    s_next: np.ndarray

    def __post_init__(self):
        n = len(self.traj)
        for name in ("h", "a", "r", "s", "s_next"):
            if len(getattr(self, name)) != n:
                raise DataError(f"column {name!r} has {len(getattr(self, name))} rows, expected {n}")

    @classmethod
    def empty(cls, state_width: int | None) -> "SiteData":
        shape = (0,) if state_width is None else (0, state_width)
        dtype = int if state_width is None else float
        return cls(np.zeros(0, int), np.zeros(0, int), np.zeros(0, int), np.zeros(0),
                   np.zeros(shape, dtype), np.zeros(shape, dtype))

    @classmethod
    def from_trajectories(cls, states: np.ndarray, actions: np.ndarray, rewards: np.ndarray) -> "SiteData":
        """Build from chained arrays: ``states`` is ``(N, H+1, ...)``, actions/rewards ``(N, H)``."""
        N, H = actions.shape
        traj = np.repeat(np.arange(N), H)
        h = np.tile(np.arange(1, H + 1), N)
        s = states[:, :-1].reshape((N * H,) + states.shape[2:])
        s_next = states[:, 1:].reshape((N * H,) + states.shape[2:])
        return cls(traj, h, actions.reshape(-1), rewards.reshape(-1), s, s_next)

    def __len__(self) -> int:
        return len(self.traj)

    @property
    def n_trajectories(self) -> int:
        return int(np.unique(self.traj).size)

    @cached_property
    def _step_index(self) -> dict:
        order = np.argsort(self.h, kind="stable")
        hs = self.h[order]
        steps, starts = np.unique(hs, return_index=True)
        bounds = list(starts[1:]) + [len(hs)]
        return {int(t): order[b0:b1] for t, b0, b1 in zip(steps, starts, bounds)}

    def rows(self, h: int) -> np.ndarray:
        return self._step_index.get(h, np.zeros(0, dtype=int))

    def at_step(self, h: int) -> "SiteData":
        idx = self.rows(h)
        return SiteData(self.traj[idx], self.h[idx], self.a[idx], self.r[idx], self.s[idx], self.s_next[idx])

    def transitions(self) -> Iterator[tuple[int, Transition]]:
        for n in range(len(self)):
            yield int(self.traj[n]), Transition(int(self.h[n]), self.s[n], int(self.a[n]),
                                                float(self.r[n]), self.s_next[n])


def concat_sites(sites: Sequence[SiteData]) -> SiteData:
    """Merge several sites into one (trajectory ids are offset to stay unique)."""
    if len(sites) == 1:
        return sites[0]
    trajs, offset = [], 0
    for sd in sites:
        trajs.append(sd.traj + offset)
        offset += int(sd.traj.max()) + 1 if len(sd) else 0
    return SiteData(np.concatenate(trajs),
                    *(np.concatenate([getattr(sd, f) for sd in sites]) for f in ("h", "a", "r", "s", "s_next")))


@dataclass(frozen=True, eq=False)
class OfflineDataset:
    sites: tuple
    H: int

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))

    @property
    def K(self) -> int:
        return len(self.sites)

    @property
    def sizes(self) -> list[int]:
        return [sd.n_trajectories for sd in self.sites]


@dataclass(frozen=True)
class Violation:
    site: int
    traj: int | None
    step: int | None
    message: str

    def __str__(self):
        return f"site {self.site}, trajectory {self.traj}, step {self.step}: {self.message}"


def validate_dataset(dataset: OfflineDataset, env_shape: tuple[int, int]) -> list[Violation]:
    """Check trajectory lengths, step ordering, action range and reward range."""
    H, A = env_shape
    out: list[Violation] = []
    for k, sd in enumerate(dataset.sites):
        if not len(sd):
            continue
        bad_a = (sd.a < 0) | (sd.a >= A)
        bad_r = ~np.isfinite(sd.r) | (sd.r < 0) | (sd.r > 1)
        for n in np.flatnonzero(bad_a):
            out.append(Violation(k, int(sd.traj[n]), int(sd.h[n]), f"action {int(sd.a[n])} outside [0, {A})"))
        for n in np.flatnonzero(bad_r):
            out.append(Violation(k, int(sd.traj[n]), int(sd.h[n]), f"reward {sd.r[n]!r} outside [0, 1]"))
        order = np.argsort(sd.traj, kind="stable")
        tr = sd.traj[order]
        ids, starts = np.unique(tr, return_index=True)
        bounds = list(starts[1:]) + [len(tr)]
        expected = np.arange(1, H + 1)
        for t, b0, b1 in zip(ids, starts, bounds):
            hs = sd.h[order[b0:b1]]
            if len(hs) != H:
                out.append(Violation(k, int(t), None, f"trajectory has {len(hs)} steps, expected {H}"))
            elif not np.array_equal(hs, expected):
                out.append(Violation(k, int(t), None, "steps are not 1..H in increasing order"))
    return out


# ---------------------------------------------------------------------------
# run configuration


@dataclass(frozen=True)
class RunConfig:
    lam: float = 1.0
    xi: float = 0.05
    c: float = 5e-4
    mc_samples: int = 4096
    seed: int = 0
    clusters: tuple | None = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigError("lambda must be positive")
        if not 0 < self.xi < 1:
            raise ConfigError("xi must lie in (0, 1)")
        if self.c < 0:
            raise ConfigError("c must be nonnegative")
        if self.mc_samples < 1:
            raise ConfigError("mc_samples must be positive")
        if self.clusters is not None:
            object.__setattr__(self, "clusters", tuple(tuple(int(k) for k in c) for c in self.clusters))

    def check_partition(self, K: int) -> tuple:
        return check_partition(self.clusters, K)

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "xi": self.xi, "c": self.c, "mc_samples": self.mc_samples,
                "seed": self.seed, "clusters": None if self.clusters is None else [list(c) for c in self.clusters]}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {"lambda", "xi", "c", "mc_samples", "seed", "clusters"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown run config keys: {sorted(unknown)}")
        kw = dict(d)
        if "lambda" in kw:
            kw["lam"] = kw.pop("lambda")
        return cls(**kw)


def check_partition(clusters, K: int) -> tuple:
    if clusters is None:
        raise ConfigError("a cluster partition is required")
    flat = [k for c in clusters for k in c]
    if any(len(c) == 0 for c in clusters):
        raise ConfigError("clusters must be nonempty")
    if sorted(flat) != list(range(K)):
        raise ConfigError(f"clusters {clusters} do not partition range({K}) disjointly")
    return tuple(tuple(c) for c in clusters)


def beta_schedule(d: int, G: int, H: int, N_max: int, xi: float, c: float) -> float:
    """Penalty scale ``c * d * H * sqrt(log(2 d G H N_max / xi))`` (natural log)."""
    if min(d, G, H, N_max) <= 0 or not 0 < xi < 1 or c < 0:
        raise ValueError("beta_schedule arguments must be positive with xi in (0, 1)")
    return c * d * H * math.sqrt(math.log(2 * d * G * H * N_max / xi))
