"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 IO error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import envs
from .experiments import (METHODS, AblationConfig, BenchmarkConfig, ConvergenceConfig, _fit_method,
                          run_benchmark, run_convergence, run_pessimism_ablation)
from .model import ConfigError, DataError, RewardNoise, RunConfig, validate_dataset
from .planning import build_pool, robust_optimal_plan, robust_policy_value
from .report import emit_report, render_svg
from .serialize import (dumps, fingerprint, read_artifact, read_dataset, read_env, read_json, write_artifact,
                        write_dataset, write_env, write_text)

log = logging.getLogger("grmdp")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_IO = 0, 2, 3, 4
CONFIG_BLOCKS = ("run", "benchmark", "convergence", "ablation")


# ---------------------------------------------------------------------------
# config file


def load_config(path) -> dict:
    """Read a JSON config document; only the known top-level blocks are allowed."""
    if path is None:
        return {}
    try:
        doc = read_json(path)
    except DataError as exc:
        raise ConfigError(str(exc)) from exc
    if not isinstance(doc, dict):
        raise ConfigError("config document must be an object")
    unknown = set(doc) - set(CONFIG_BLOCKS)
    if unknown:
        raise ConfigError(f"unknown config blocks {sorted(unknown)}; allowed: {list(CONFIG_BLOCKS)}")
    _merge_run(RunConfig(), doc.get("run"))  # fail early even for commands that ignore the run block
    return doc


def _merge_run(base: RunConfig, *blocks) -> RunConfig:
    d = base.to_dict()
    for b in blocks:
        if b:
            d.update(b)
    return RunConfig.from_dict(d)


def _params(cls, base, block: dict | None):
    if not block:
        return base
    names = {f.name for f in fields(cls)}
    unknown = set(block) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys {sorted(unknown)}")
    kw = dict(block)
    if "noise" in kw:
        kw["noise"] = RewardNoise(**kw["noise"])
    try:
        return replace(base, **kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def experiment_config(kind: str, args, doc: dict):
    cls = {"benchmark": BenchmarkConfig, "convergence": ConvergenceConfig, "ablation": AblationConfig}[kind]
    base = cls.paper() if args.paper else cls.fast()
    block = dict(doc.get(kind) or {})
    run_block = block.pop("run", None)
    env_block = block.pop("env", None)
    names = {f.name for f in fields(cls)} - {"run", "env"}
    unknown = set(block) - names
    if unknown:
        raise ConfigError(f"unknown {kind} keys {sorted(unknown)}")
    for key in ("N", "grid", "c_grid", "methods"):
        if key in block:
            block[key] = tuple(block[key])
    kw = dict(block, run=_merge_run(base.run, doc.get("run"), run_block))
    if env_block is not None:
        env_cls = envs.BenchmarkEnvParams if kind == "benchmark" else envs.TrapEnvParams
        if kind == "convergence":
            raise ConfigError("convergence has no env block")
        kw["env"] = _params(env_cls, base.env, env_block)
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.workers is not None:
        kw["workers"] = args.workers
    try:
        return replace(base, **kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def run_config(args, doc: dict) -> RunConfig:
    cfg = _merge_run(RunConfig(), doc.get("run"))
    return cfg if args.seed is None else replace(cfg, seed=args.seed)


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_env(args, doc) -> int:
    seed = 0 if args.seed is None else args.seed
    out = Path(args.out)
    if args.kind == "benchmark":
        env = envs.gen_benchmark_env(envs.BenchmarkEnvParams(), seed)
    elif args.kind == "trap":
        env = envs.gen_trap_env(envs.TrapEnvParams(), seed)
    else:
        # the gap depends on realized first-step counts, so the dataset is written too
        if not args.N:
            raise ConfigError("--N is required for the hard instance")
        env, data = envs.gen_hard_instance(seed, len(args.N), args.A, args.H, args.N)
        print(write_dataset(data, out / "data.csv"))
    print(write_env(env, out / "env.json"))
    return EXIT_OK


def cmd_gen_data(args, doc) -> int:
    env = read_env(args.env)
    if not args.N:
        raise ConfigError("--N is required")
    behavior = args.behavior
    if behavior == "trap_capped":
        behavior = ("trap_capped", args.cap if args.cap is not None else env.meta.get("trap_count_cap", 1))
    seed = 0 if args.seed is None else args.seed
    data = envs.sample_trajectories(env, args.N, behavior, seed)
    print(write_dataset(data, Path(args.out) / "data.csv"))
    return EXIT_OK


def _load_pair(args):
    env = read_env(args.env)
    data = read_dataset(args.data, H=env.H, K=env.K)
    problems = validate_dataset(data, (env.H, env.n_actions))
    if problems:
        shown = "; ".join(str(v) for v in problems[:5])
        raise DataError(f"{len(problems)} dataset violation(s): {shown}")
    return env, data


def cmd_fit(args, doc) -> int:
    env, data = _load_pair(args)
    run = run_config(args, doc)
    art = _fit_method(args.method, env, data, run, None)
    if hasattr(art, "fingerprint"):
        art = replace(art, fingerprint=fingerprint(run.to_dict()))
    print(write_artifact(art, Path(args.out) / f"artifact_{args.method}.json"))
    return EXIT_OK


def cmd_eval(args, doc) -> int:
    env = read_env(args.env)
    art = read_artifact(args.artifact)
    fm = art.members[0].feature_map if hasattr(art, "members") else art.feature_map
    if art.H != env.H or fm.to_dict() != env.feature_map.to_dict():
        raise DataError("artifact does not match the environment's horizon or feature map")
    run = run_config(args, doc)
    pool = build_pool(env, run.mc_samples, run.seed)
    states = envs.uniform_states(env, args.m, np.random.default_rng(run.seed))
    v_star = robust_optimal_plan(env, pool).value(1, states)
    sub = v_star - robust_policy_value(env, art, states, pool)
    gap = v_star - art.value(1, states)
    result = {"method": art.method, "m": args.m, "seed": run.seed,
              "suboptimality": float(np.mean(sub)), "value_gap": float(np.mean(gap))}
    write_text(Path(args.out) / "eval.json", dumps(result) + "\n")
    print(json.dumps(result))
    return EXIT_OK


def _experiment(kind, runner):
    def cmd(args, doc) -> int:
        cfg = experiment_config(kind, args, doc)
        report = runner(cfg)
        for path in emit_report(report, ("csv", "json", "svg"), args.out):
            print(path)
        for c in report.curves:
            if c.fit is not None:
                log.info("%s %s slope %.3f +/- %.3f (R^2 %.3f)", c.name, c.metric, c.fit.slope,
                         c.fit.half_width, c.fit.r2)
        return EXIT_OK
    return cmd


def cmd_plot(args, doc) -> int:
    summary = read_json(args.summary)
    out = Path(args.out)
    for metric in sorted({c["metric"] for c in summary.get("curves", [])}):
        print(write_text(out / f"{summary.get('kind', 'report')}_{metric}.svg", render_svg(summary, metric)))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="base seed (overrides the config file)")
    common.add_argument("--config", default=None, help="JSON config file")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--workers", type=int, default=None, help="parallel trial workers")
    prof = common.add_mutually_exclusive_group()
    prof.add_argument("--fast", dest="paper", action="store_false", help="desk-scale profile (default)")
    prof.add_argument("--paper", dest="paper", action="store_true", help="paper-scale profile")
    common.add_argument("-v", "--verbose", action="store_true")
    common.set_defaults(paper=False)

    p = argparse.ArgumentParser(prog="grmdp", description="Group-robust offline RL across sites.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-env", parents=[common], help="generate an environment file")
    g.add_argument("--kind", choices=("benchmark", "trap", "hard"), default="benchmark")
    g.add_argument("--N", type=_int_list, default=None, help="per-site sizes (hard instance)")
    g.add_argument("--A", type=int, default=7)
    g.add_argument("--H", type=int, default=40)
    g.set_defaults(func=cmd_gen_env)

    g = sub.add_parser("gen-data", parents=[common], help="sample an offline dataset")
    g.add_argument("--env", required=True)
    g.add_argument("--N", type=_int_list, required=True, help="per-site trajectory counts")
    g.add_argument("--behavior", choices=("uniform", "trap_capped"), default="uniform")
    g.add_argument("--cap", type=int, default=None)
    g.set_defaults(func=cmd_gen_data)

    g = sub.add_parser("fit", parents=[common], help="fit a policy artifact")
    g.add_argument("--env", required=True)
    g.add_argument("--data", required=True)
    g.add_argument("--method", choices=METHODS, default="sitewise")
    g.set_defaults(func=cmd_fit)

    g = sub.add_parser("eval", parents=[common], help="robust suboptimality of an artifact")
    g.add_argument("--env", required=True)
    g.add_argument("--artifact", required=True)
    g.add_argument("--m", type=int, default=200)
    g.set_defaults(func=cmd_eval)

    for name, kind, runner, text in (("bench", "benchmark", run_benchmark, "method comparison"),
                                     ("converge", "convergence", run_convergence, "hard-instance convergence"),
                                     ("ablate", "ablation", run_pessimism_ablation, "pessimism ablation")):
        g = sub.add_parser(name, parents=[common], help=text)
        g.set_defaults(func=_experiment(kind, runner))

    g = sub.add_parser("plot", parents=[common], help="redraw SVGs from a summary JSON")
    g.add_argument("--summary", required=True)
    g.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        doc = load_config(args.config)
        return args.func(args, doc)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except OSError as exc:
        log.error("io error: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
