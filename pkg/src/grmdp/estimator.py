"""Pessimistic site-wise ridge estimator and its cluster-pooled variant."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .model import (DataError, OfflineDataset, RunConfig, SiteData, beta_schedule,
                    check_partition, concat_sites)


@dataclass(frozen=True, eq=False)
class SiteRegression:
    Lambda: np.ndarray
    Lambda_inv_diag: np.ndarray
    nu_hat: np.ndarray


def site_ridge_step(phi: np.ndarray, y: np.ndarray, lam: float) -> SiteRegression:
    """Ridge fit of targets ``y`` on feature rows ``phi`` with regularizer ``lam``.

    Solves against a Cholesky factor of ``Lambda = phi^T phi + lam I``; the
    inverse diagonal comes from the same factor applied to the unit vectors.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    phi = np.asarray(phi, dtype=float)
    y = np.asarray(y, dtype=float)
    bad = ~np.isfinite(y) | ~np.all(np.isfinite(phi), axis=1)
    if bad.any():
        raise DataError(f"non-finite feature or target at row {int(np.flatnonzero(bad)[0])}")
    d = phi.shape[1]
    Lambda = phi.T @ phi + lam * np.eye(d)
    factor = cho_factor(Lambda, lower=True)
    nu = cho_solve(factor, phi.T @ y)
    inv_diag = np.diag(cho_solve(factor, np.eye(d))).copy()
    return SiteRegression(Lambda, inv_diag, nu)


def _stack(vectors) -> np.ndarray:
    try:
        arr = np.array([np.asarray(v, dtype=float) for v in vectors])
    except ValueError as exc:
        raise ValueError("ragged input to rowmin/rowmax") from exc
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("rowmin/rowmax need K >= 1 equal-length vectors")
    return arr


def rowmin(vectors) -> np.ndarray:
    return _stack(vectors).min(axis=0)


def rowmax(vectors) -> np.ndarray:
    return _stack(vectors).max(axis=0)


def penalty(phi, m, beta: float) -> float:
    """Feature-wise uncertainty ``beta * <phi, m>``."""
    return float(beta * np.dot(phi, m))


@dataclass(frozen=True, eq=False)
class PolicyArtifact:
    """Closed-form output of the backward loop.

    ``Q_h(s, a) = clip(phi^T w[h-1] - beta * phi^T m[h-1], 0, H - h + 1)``; the
    greedy policy breaks ties toward the lowest action index.
    """

    feature_map: object
    w: np.ndarray
    m: np.ndarray
    beta: float
    lam: float
    method: str = "sitewise"
    fingerprint: str = ""

    @property
    def H(self) -> int:
        return self.w.shape[0]

    def q_values(self, h: int, states) -> np.ndarray:
        fm = self.feature_map
        q = fm.scores(states, self.w[h - 1])
        if self.beta:
            q = q - self.beta * fm.scores(states, self.m[h - 1])
        return np.clip(q, 0.0, self.H - h + 1)

    def act(self, h: int, states) -> np.ndarray:
        return np.argmax(self.q_values(h, states), axis=1)

    def value(self, h: int, states) -> np.ndarray:
        if h > self.H:
            return np.zeros(len(states))
        return self.q_values(h, states).max(axis=1)

    def with_beta(self, beta: float) -> "PolicyArtifact":
        return replace(self, beta=float(beta))


def artifact_Q(artifact, h: int, s, a: int) -> float:
    return float(artifact.q_values(h, _one(s))[0, a])


def artifact_act(artifact, h: int, s) -> int:
    return int(artifact.act(h, _one(s))[0])


def artifact_V(artifact, h: int, s) -> float:
    return float(artifact.value(h, _one(s))[0])


def _one(s):
    arr = np.asarray(s)
    return arr[None] if arr.ndim == 1 and arr.dtype.kind == "f" else np.atleast_1d(arr)


def targets(site: SiteData, rows: np.ndarray, V_next, site_label=None) -> np.ndarray:
    """Bellman targets ``r + V_next(s')`` for the selected rows."""
    y = site.r[rows] + V_next(site.s_next[rows])
    bad = ~np.isfinite(y)
    if bad.any():
        n = rows[np.flatnonzero(bad)[0]]
        raise DataError(f"site {site_label}, trajectory {int(site.traj[n])}, step {int(site.h[n])}: "
                        f"non-finite reward or next-state value")
    return y


def backward_regressions(groups: Sequence[SiteData], feature_map, H: int, lam: float, beta: float,
                         keep: bool = False):
    """Run the pessimistic backward loop treating each entry of ``groups`` as one site.

    Returns ``(w, m, regressions)``; ``regressions[h-1][g]`` is filled only when ``keep``.
    """
    d = feature_map.d
    w = np.zeros((H, d))
    m = np.zeros((H, d))
    art = PolicyArtifact(feature_map, w, m, beta, lam)
    kept = [] if keep else None
    for h in range(H, 0, -1):
        nus, roots, regs = [], [], []
        for g, site in enumerate(groups):
            rows = site.rows(h)
            phi = feature_map.batch(site.s[rows], site.a[rows]) if len(rows) else np.zeros((0, d))
            y = targets(site, rows, lambda s: art.value(h + 1, s), g) if len(rows) else np.zeros(0)
            reg = site_ridge_step(phi, y, lam)
            nus.append(reg.nu_hat)
            roots.append(np.sqrt(reg.Lambda_inv_diag))
            regs.append(reg)
        w[h - 1] = rowmin(nus)
        m[h - 1] = rowmax(roots)
        if keep:
            kept.append(regs)
    if keep:
        kept.reverse()
    return w, m, kept


def sitewise_beta(dataset: OfflineDataset, feature_map, config: RunConfig) -> float:
    n_max = max([1] + dataset.sizes)
    return beta_schedule(feature_map.d, dataset.K, dataset.H, n_max, config.xi, config.c)


def fit_sitewise(dataset: OfflineDataset, feature_map, config: RunConfig,
                 beta: float | None = None) -> PolicyArtifact:
    if beta is None:
        beta = sitewise_beta(dataset, feature_map, config)
    w, m, _ = backward_regressions(dataset.sites, feature_map, dataset.H, config.lam, beta)
    return PolicyArtifact(feature_map, w, m, float(beta), config.lam, "sitewise")


@dataclass(frozen=True)
class ClusterPlan:
    partition: tuple
    beta_pool: float


def make_cluster_plan(dataset: OfflineDataset, feature_map, config: RunConfig,
                      partition=None) -> ClusterPlan:
    part = check_partition(config.clusters if partition is None else partition, dataset.K)
    sizes = dataset.sizes
    n_pool = max([1] + [sum(sizes[k] for k in c) for c in part])
    beta = beta_schedule(feature_map.d, len(part), dataset.H, n_pool, config.xi, config.c)
    return ClusterPlan(part, beta)


def pooled_groups(dataset: OfflineDataset, partition) -> list[SiteData]:
    return [concat_sites([dataset.sites[k] for k in c]) for c in partition]


def fit_cluster(dataset: OfflineDataset, feature_map, config: RunConfig,
                plan: ClusterPlan | None = None) -> PolicyArtifact:
    """Same backward loop with each cluster's merged data acting as one super-site."""
    if plan is None:
        plan = make_cluster_plan(dataset, feature_map, config)
    check_partition(plan.partition, dataset.K)
    groups = pooled_groups(dataset, plan.partition)
    w, m, _ = backward_regressions(groups, feature_map, dataset.H, config.lam, plan.beta_pool)
    return PolicyArtifact(feature_map, w, m, float(plan.beta_pool), config.lam, "cluster")


def empirical_discrepancy_proxy(dataset: OfflineDataset, feature_map, plan: ClusterPlan,
                                config: RunConfig, artifact: PolicyArtifact | None = None) -> np.ndarray:
    """Per-step ``max_m max_{k in C_m} ||nu_hat^k - nu_hat^m||_2`` at the realized cluster-fit values.

    This is a data-driven stand-in for the within-cluster discrepancy, which is a
    supremum over a value-function class and cannot be computed. The pooled
    comparison fit uses ``|C_m| * lambda`` so that ridge shrinkage alone does not
    register as discrepancy (duplicated sites give exactly zero).
    """
    if artifact is None:
        artifact = fit_cluster(dataset, feature_map, config, plan)
    fm = feature_map
    out = np.zeros(dataset.H)
    for h in range(1, dataset.H + 1):
        V_next = lambda s: artifact.value(h + 1, s)
        gap = 0.0
        for cluster in plan.partition:
            fits = []
            for site in [dataset.sites[k] for k in cluster] + [concat_sites([dataset.sites[k] for k in cluster])]:
                rows = site.rows(h)
                phi = fm.batch(site.s[rows], site.a[rows]) if len(rows) else np.zeros((0, fm.d))
                y = targets(site, rows, V_next) if len(rows) else np.zeros(0)
                lam = config.lam * (len(cluster) if len(fits) == len(cluster) else 1)
                fits.append(site_ridge_step(phi, y, lam).nu_hat)
            pooled = fits[-1]
            gap = max([gap] + [float(np.linalg.norm(nu - pooled)) for nu in fits[:-1]])
        out[h - 1] = gap
    return out

