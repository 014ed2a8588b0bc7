"""Multi-trial experiment drivers: benchmark comparison, convergence rate, pessimism ablation.

Every trial is a pure function of its recorded integer seed. Trials may run in a
process pool, but results are always folded in trial-index order.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable

import numpy as np

from .baselines import fit_pevi, fit_persite_ensemble
from .envs import (BenchmarkEnvParams, TrapEnvParams, gen_benchmark_env, gen_hard_instance, gen_trap_env,
                   hard_instance_subopt, sample_trajectories, uniform_states)
from .estimator import fit_cluster, fit_sitewise
from .model import S0, ConfigError, RewardNoise, RunConfig
from .planning import build_pool, robust_optimal_plan, robust_policy_value
from .serialize import fingerprint
from .stats import FitError, FitResult, loglog_fit, mean_ci

log = logging.getLogger(__name__)

METHODS = ("sitewise", "cluster", "pool_pevi", "persite_avg", "persite_min")
PLATEAU_SLOPE = -0.25

# seed streams
_ENV, _POOL, _DATA, _STATES = 1, 2, 3, 4


def derive_seed(seed: int, *keys: int) -> int:
    """A 32-bit seed derived from ``seed`` and integer keys."""
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class TrialResult:
    method: str
    seed: int
    suboptimality: float
    value_gap: float
    N: int | None = None
    trial: int = 0
    wall_time: float = 0.0


@dataclass(frozen=True)
class Point:
    x: int
    mean: float
    half_width: float
    count: int

    @property
    def ci_low(self) -> float:
        return self.mean - self.half_width

    @property
    def ci_high(self) -> float:
        return self.mean + self.half_width


@dataclass
class Curve:
    """Aggregated means over trials, one point per N (or a single point for the benchmark)."""

    name: str
    metric: str
    points: list = field(default_factory=list)
    fit: FitResult | None = None
    fitted: int = 0
    excluded: int = 0


@dataclass
class ExperimentReport:
    kind: str
    config: dict
    fingerprint: str
    trials: list = field(default_factory=list)
    curves: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)

    def curve(self, name: str, metric: str = "suboptimality") -> Curve:
        for c in self.curves:
            if c.name == name and c.metric == metric:
                return c
        raise KeyError((name, metric))

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "fingerprint": self.fingerprint,
            "config": self.config,
            "ci": "95% t-interval over trials; half-width 0 when R = 1",
            "seeds": sorted({t.seed for t in self.trials}),
            "curves": [{"name": c.name, "metric": c.metric, "fitted_points": c.fitted,
                        "excluded_zero_points": c.excluded,
                        "fit": None if c.fit is None else c.fit.to_dict(),
                        "points": [asdict(p) for p in c.points]} for c in self.curves],
            "flags": self.flags,
        }


def aggregate(name: str, metric: str, xs, values_by_x, fit: bool) -> Curve:
    """Mean/CI per x, then a log-log fit over positive means (zeros are excluded and counted)."""
    points = [Point(int(x), *mean_ci(values_by_x[x]), len(values_by_x[x])) for x in xs]
    curve = Curve(name, metric, points)
    if fit:
        keep = [p for p in points if p.mean > 0]
        curve.fitted = len(keep)
        curve.excluded = len(points) - len(keep)
        if curve.excluded:
            log.info("%s/%s: %d nonpositive point(s) excluded from the log-log fit", name, metric, curve.excluded)
        try:
            curve.fit = loglog_fit([p.x for p in keep], [p.mean for p in keep])
        except FitError as exc:
            log.info("%s/%s: no fit (%s)", name, metric, exc)
    return curve


def _run_all(fn, tasks, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks))


def _config_dict(cfg) -> dict:
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, RunConfig):
            v = v.to_dict()
        elif isinstance(v, RewardNoise):
            v = asdict(v)
        elif isinstance(v, (BenchmarkEnvParams, TrapEnvParams)):
            v = _config_dict(v)
        elif isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    return out


# ---------------------------------------------------------------------------
# benchmark


@dataclass(frozen=True)
class BenchmarkConfig:
    R: int = 20
    N: tuple = (300, 200, 500)
    m: int = 200
    methods: tuple = ("sitewise", "pool_pevi", "persite_avg", "persite_min")
    env: BenchmarkEnvParams = field(default_factory=BenchmarkEnvParams)
    run: RunConfig = field(default_factory=RunConfig)
    seed: int = 0
    workers: int = 1

    @classmethod
    def fast(cls, **kw) -> "BenchmarkConfig":
        return cls(**kw)

    @classmethod
    def paper(cls, **kw) -> "BenchmarkConfig":
        return cls(**{"R": 50, "N": (3000, 2000, 5000), **kw})

    def to_dict(self) -> dict:
        return _config_dict(self)


Fitter = Callable  # (env, dataset, run_config, pool) -> policy with .act and .value


def _fit_method(name, env, data, run: RunConfig, pool):
    fm = env.feature_map
    if name == "sitewise":
        return fit_sitewise(data, fm, run)
    if name == "cluster":
        return fit_cluster(data, fm, run)
    if name == "pool_pevi":
        return fit_pevi(data.sites, fm, env.H, run)
    if name == "persite_avg":
        return fit_persite_ensemble(data, fm, run, "average")
    if name == "persite_min":
        return fit_persite_ensemble(data, fm, run, "pointwise_min")
    raise ConfigError(f"unknown method {name!r}")


def _check_methods(cfg: BenchmarkConfig, extra) -> None:
    unknown = [m for m in cfg.methods if m not in METHODS and m not in extra]
    if unknown:
        raise ConfigError(f"unknown methods {unknown}; choose from {list(METHODS)}")
    if "cluster" in cfg.methods:
        if cfg.run.clusters is None:
            raise ConfigError("method 'cluster' needs run.clusters")
        cfg.run.check_partition(len(cfg.N))
    if cfg.R < 1 or cfg.m < 1:
        raise ConfigError("R and m must be positive")


def benchmark_trial(cfg: BenchmarkConfig, r: int, extra=None, make_env=None) -> list[TrialResult]:
    """One paired trial: every method sees the same env, data, pool and evaluation states."""
    extra = extra or {}
    seed = derive_seed(cfg.seed, r)
    t0 = time.perf_counter()
    env = make_env(derive_seed(seed, _ENV)) if make_env else gen_benchmark_env(cfg.env, derive_seed(seed, _ENV))
    pool = build_pool(env, cfg.run.mc_samples, derive_seed(seed, _POOL))
    data = sample_trajectories(env, cfg.N, "uniform", derive_seed(seed, _DATA))
    states = uniform_states(env, cfg.m, np.random.default_rng(derive_seed(seed, _STATES)))
    plan = robust_optimal_plan(env, pool)
    v_star = plan.value(1, states)
    out = []
    for name in cfg.methods:
        t1 = time.perf_counter()
        fitter = extra.get(name)
        policy = fitter(env, data, cfg.run, pool) if fitter else _fit_method(name, env, data, cfg.run, pool)
        sub = float(np.mean(v_star - robust_policy_value(env, policy, states, pool)))
        gap = float(np.mean(v_star - policy.value(1, states)))
        out.append(TrialResult(name, seed, sub, gap, min(cfg.N), r, time.perf_counter() - t1))
    log.debug("benchmark trial %d done in %.1fs", r, time.perf_counter() - t0)
    return out


def _benchmark_task(args):
    return benchmark_trial(*args)


def run_benchmark(cfg: BenchmarkConfig, extra: dict | None = None, make_env=None) -> ExperimentReport:
    """Compare methods over ``R`` trials.

    ``extra`` maps additional method names to fitters ``(env, dataset, run, pool) -> policy``;
    ``make_env`` replaces the benchmark generator with any ``seed -> EnvSpec``.
    """
    extra = extra or {}
    _check_methods(cfg, extra)
    workers = cfg.workers if not extra and make_env is None else 1
    per_trial = _run_all(_benchmark_task, [(cfg, r, extra, make_env) for r in range(cfg.R)], workers)
    trials = [t for batch in per_trial for t in batch]
    d = cfg.to_dict()
    report = ExperimentReport("benchmark", d, fingerprint(d), trials)
    x = min(cfg.N)
    for metric in ("suboptimality", "value_gap"):
        for name in cfg.methods:
            vals = [getattr(t, metric) for t in trials if t.method == name]
            report.curves.append(aggregate(name, metric, [x], {x: vals}, fit=False))
    return report


# ---------------------------------------------------------------------------
# convergence on the hard instance


@dataclass(frozen=True)
class ConvergenceConfig:
    R: int = 20
    grid: tuple = (50, 100, 500, 1000, 2000, 5000, 8000)
    K: int = 4
    A: int = 7
    H: int = 40
    run: RunConfig = field(default_factory=RunConfig)
    seed: int = 0
    workers: int = 1

    @classmethod
    def fast(cls, **kw) -> "ConvergenceConfig":
        return cls(**kw)

    @classmethod
    def paper(cls, **kw) -> "ConvergenceConfig":
        return cls(**{"R": 50, **kw})

    def to_dict(self) -> dict:
        return _config_dict(self)


def _check_grid(grid) -> None:
    g = list(grid)
    if not g or any(n < 1 for n in g) or any(b <= a for a, b in zip(g, g[1:])):
        raise ConfigError("N grid must be nonempty, positive and strictly ascending")


def convergence_trial(args) -> TrialResult:
    cfg, N, r = args
    seed = derive_seed(cfg.seed, N, r)
    t0 = time.perf_counter()
    env, data = gen_hard_instance(seed, cfg.K, cfg.A, cfg.H, [N] * cfg.K)
    art = fit_sitewise(data, env.feature_map, cfg.run)
    s0 = np.array([S0])
    sub = hard_instance_subopt(env, int(art.act(1, s0)[0]))
    v_star = (cfg.H - 1) * min(env.meta["p1"])
    gap = float(v_star - art.value(1, s0)[0])
    return TrialResult("sitewise", seed, float(sub), gap, N, r, time.perf_counter() - t0)


def run_convergence(cfg: ConvergenceConfig) -> ExperimentReport:
    _check_grid(cfg.grid)
    if cfg.R < 1:
        raise ConfigError("R must be positive")
    tasks = [(cfg, N, r) for N in cfg.grid for r in range(cfg.R)]
    trials = _run_all(convergence_trial, tasks, cfg.workers)
    d = cfg.to_dict()
    report = ExperimentReport("convergence", d, fingerprint(d), trials)
    for metric in ("suboptimality", "value_gap"):
        by_n = {N: [getattr(t, metric) for t in trials if t.N == N] for N in cfg.grid}
        report.curves.append(aggregate("sitewise", metric, cfg.grid, by_n, fit=True))
    return report


# ---------------------------------------------------------------------------
# pessimism ablation on the trap environment


@dataclass(frozen=True)
class AblationConfig:
    R: int = 20
    grid: tuple = (20, 200, 2000, 20000, 200000)
    c_grid: tuple = (0.0, 5e-4, 1e-3)
    m: int = 200
    env: TrapEnvParams = field(default_factory=TrapEnvParams)
    run: RunConfig = field(default_factory=lambda: RunConfig(lam=1e-5, mc_samples=1024))
    seed: int = 0
    workers: int = 1

    @classmethod
    def fast(cls, **kw) -> "AblationConfig":
        return cls(**kw)

    @classmethod
    def paper(cls, **kw) -> "AblationConfig":
        return cls(**{"R": 50, "grid": (20, 200, 2000, 20000, 200000, 2000000), **kw})

    def to_dict(self) -> dict:
        return _config_dict(self)


def arm_name(c: float) -> str:
    return f"c={c:g}"


def ablation_trial(args) -> list[TrialResult]:
    """All c arms on one shared env, pool, dataset and state set; arms differ only in beta."""
    cfg, N, r = args
    seed = derive_seed(cfg.seed, N, r)
    t0 = time.perf_counter()
    env = gen_trap_env(cfg.env, derive_seed(seed, _ENV))
    pool = build_pool(env, cfg.run.mc_samples, derive_seed(seed, _POOL))
    data = sample_trajectories(env, [N] * cfg.env.K, ("trap_capped", cfg.env.trap_count_cap),
                               derive_seed(seed, _DATA))
    states = uniform_states(env, cfg.m, np.random.default_rng(derive_seed(seed, _STATES)))
    v_star = robust_optimal_plan(env, pool).value(1, states)
    out = []
    for c in cfg.c_grid:
        t1 = time.perf_counter()
        art = fit_sitewise(data, env.feature_map, replace(cfg.run, c=c))
        sub = float(np.mean(v_star - robust_policy_value(env, art, states, pool)))
        gap = float(np.mean(v_star - art.value(1, states)))
        out.append(TrialResult(arm_name(c), seed, sub, gap, N, r, time.perf_counter() - t1))
    log.debug("ablation N=%d trial %d done in %.1fs", N, r, time.perf_counter() - t0)
    return out


def run_pessimism_ablation(cfg: AblationConfig) -> ExperimentReport:
    _check_grid(cfg.grid)
    if 0 not in cfg.c_grid:
        raise ConfigError("c grid must contain 0")
    if cfg.R < 1 or cfg.m < 1:
        raise ConfigError("R and m must be positive")
    tasks = [(cfg, N, r) for N in cfg.grid for r in range(cfg.R)]
    trials = [t for batch in _run_all(ablation_trial, tasks, cfg.workers) for t in batch]
    d = cfg.to_dict()
    report = ExperimentReport("ablation", d, fingerprint(d), trials)
    for c in cfg.c_grid:
        name = arm_name(c)
        by_n = {N: [t.suboptimality for t in trials if t.N == N and t.method == name] for N in cfg.grid}
        report.curves.append(aggregate(name, "suboptimality", cfg.grid, by_n, fit=True))
    base = report.curve(arm_name(0.0)).fit
    report.flags["plateau"] = bool(base is not None and base.slope > PLATEAU_SLOPE)
    return report
