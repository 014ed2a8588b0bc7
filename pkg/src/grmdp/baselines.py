"""Comparison methods: pessimistic value iteration on pooled data and per-site ensembles."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .estimator import site_ridge_step, targets
from .model import ConfigError, OfflineDataset, RunConfig, SiteData, beta_schedule, concat_sites

COMBINE_RULES = ("average", "pointwise_min")


@dataclass(frozen=True, eq=False)
class PeviArtifact:
    """Single-dataset PEVI with the elliptical bonus ``beta * sqrt(phi^T Lambda^{-1} phi)``."""

    feature_map: object
    w: np.ndarray
    Lambda_inv: np.ndarray  # (H, d, d)
    beta: float
    lam: float
    method: str = "pevi"

    @property
    def H(self) -> int:
        return self.w.shape[0]

    def bonus(self, h: int, states) -> np.ndarray:
        quad = self.feature_map.quad_forms(states, self.Lambda_inv[h - 1])
        return self.beta * np.sqrt(np.maximum(quad, 0.0))

    def q_values(self, h: int, states) -> np.ndarray:
        q = self.feature_map.scores(states, self.w[h - 1])
        if self.beta:
            q = q - self.bonus(h, states)
        return np.clip(q, 0.0, self.H - h + 1)

    def act(self, h: int, states) -> np.ndarray:
        return np.argmax(self.q_values(h, states), axis=1)

    def value(self, h: int, states) -> np.ndarray:
        if h > self.H:
            return np.zeros(len(states))
        return self.q_values(h, states).max(axis=1)


def pevi_beta(n_trajectories: int, feature_map, H: int, config: RunConfig) -> float:
    return beta_schedule(feature_map.d, 1, H, max(1, n_trajectories), config.xi, config.c)


def fit_pevi(data: SiteData | Sequence[SiteData], feature_map, H: int, config: RunConfig,
             beta: float | None = None, method: str = "pool_pevi") -> PeviArtifact:
    """Backward ridge on one dataset; a sequence of sites is pooled first."""
    site = data if isinstance(data, SiteData) else concat_sites(list(data))
    if beta is None:
        beta = pevi_beta(site.n_trajectories, feature_map, H, config)
    d = feature_map.d
    w = np.zeros((H, d))
    inv = np.zeros((H, d, d))
    art = PeviArtifact(feature_map, w, inv, float(beta), config.lam, method)
    for h in range(H, 0, -1):
        rows = site.rows(h)
        phi = feature_map.batch(site.s[rows], site.a[rows]) if len(rows) else np.zeros((0, d))
        y = targets(site, rows, lambda s: art.value(h + 1, s)) if len(rows) else np.zeros(0)
        reg = site_ridge_step(phi, y, config.lam)
        w[h - 1] = reg.nu_hat
        inv[h - 1] = cho_solve(cho_factor(reg.Lambda, lower=True), np.eye(d))
    return art


@dataclass(frozen=True, eq=False)
class EnsembleArtifact:
    members: tuple
    rule: str

    def __post_init__(self):
        if self.rule not in COMBINE_RULES:
            raise ConfigError(f"unknown combine rule {self.rule!r}")
        if not self.members:
            raise ConfigError("ensemble needs at least one member")

    @property
    def H(self) -> int:
        return self.members[0].H

    @property
    def method(self) -> str:
        return "persite_avg" if self.rule == "average" else "persite_min"

    def q_values(self, h: int, states) -> np.ndarray:
        qs = np.stack([m.q_values(h, states) for m in self.members])
        return qs.mean(axis=0) if self.rule == "average" else qs.min(axis=0)

    def act(self, h: int, states) -> np.ndarray:
        return np.argmax(self.q_values(h, states), axis=1)

    def value(self, h: int, states) -> np.ndarray:
        if h > self.H:
            return np.zeros(len(states))
        return self.q_values(h, states).max(axis=1)


def fit_persite_ensemble(dataset: OfflineDataset, feature_map, config: RunConfig,
                         rule: str) -> EnsembleArtifact:
    if rule not in COMBINE_RULES:
        raise ConfigError(f"unknown combine rule {rule!r}")
    members = tuple(fit_pevi(site, feature_map, dataset.H, config, method=f"pevi_site{k}")
                    for k, site in enumerate(dataset.sites))
    return EnsembleArtifact(members, rule)
