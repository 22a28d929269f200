"""Reinforcement learning with recursive reward aggregation."""

from .aggregation import (
    Aggregation,
    AggregationError,
    ArityError,
    CapabilityError,
    Composite,
    DiscountedMax,
    DiscountedMin,
    DiscountedSum,
    LogSumExp,
    Mean,
    Range,
    RunningMean,
    Sharpe,
    Statistic,
    TopK,
    UndefinedAtInit,
    Variance,
    WelfordVariance,
    aggregate,
    blend,
    catalog,
    combine,
    compare,
    fold,
    post,
    update,
)
from .algos import (
    AdvantageSeries,
    QLearnConfig,
    critic_targets,
    dsum_gae_closed_form,
    q_learning,
    recursive_gae,
    twin_min_target,
)
from .contraction import ContractionReport, check_contraction
from .envs import GridSpec, grid_world, load_mdp, save_mdp, toy_dag
from .mdp import (
    NonConvergence,
    Policy,
    StatisticTable,
    TabularMdp,
    Trajectory,
    bellman_backup,
    enumerate_policies,
    evaluate_policy,
    generate,
    state_action_statistics,
    value_iteration,
)
from .parse import ParseError, parse_aggregation
from .stochastic import (
    EmpiricalDistribution,
    StochasticMdp,
    StochasticPolicy,
    exact_aggregate_distribution,
    expectation_gap,
    mc_aggregate_distribution,
)

__version__ = "0.1.0"

__all__ = [
    "AdvantageSeries",
    "Aggregation",
    "AggregationError",
    "ArityError",
    "CapabilityError",
    "Composite",
    "ContractionReport",
    "DiscountedMax",
    "DiscountedMin",
    "DiscountedSum",
    "EmpiricalDistribution",
    "GridSpec",
    "LogSumExp",
    "Mean",
    "NonConvergence",
    "ParseError",
    "Policy",
    "QLearnConfig",
    "Range",
    "RunningMean",
    "Sharpe",
    "Statistic",
    "StatisticTable",
    "StochasticMdp",
    "StochasticPolicy",
    "TabularMdp",
    "TopK",
    "Trajectory",
    "UndefinedAtInit",
    "Variance",
    "WelfordVariance",
    "aggregate",
    "bellman_backup",
    "blend",
    "catalog",
    "check_contraction",
    "combine",
    "compare",
    "critic_targets",
    "dsum_gae_closed_form",
    "enumerate_policies",
    "evaluate_policy",
    "exact_aggregate_distribution",
    "expectation_gap",
    "fold",
    "generate",
    "grid_world",
    "load_mdp",
    "mc_aggregate_distribution",
    "parse_aggregation",
    "post",
    "q_learning",
    "recursive_gae",
    "save_mdp",
    "state_action_statistics",
    "toy_dag",
    "twin_min_target",
    "update",
    "value_iteration",
]
