"""Group-robust offline RL across heterogeneous sites with linear function approximation."""

from .baselines import EnsembleArtifact, PeviArtifact, fit_persite_ensemble, fit_pevi
from .envs import (BenchmarkEnvParams, TrapEnvParams, gen_benchmark_env, gen_hard_instance, gen_trap_env,
                   hard_instance_delta, hard_instance_env, hard_instance_subopt, sample_trajectories)
from .estimator import PolicyArtifact, fit_cluster, fit_sitewise, make_cluster_plan
from .model import (BlockedFeatures, ConfigError, DataError, EnvSpec, HardInstanceFeatures, OfflineDataset,
                    RunConfig, SiteData, beta_schedule, validate_dataset)
from .planning import build_pool, robust_optimal_plan, robust_policy_value, suboptimality

__version__ = "0.1.0"
