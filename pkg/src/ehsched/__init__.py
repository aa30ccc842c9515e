"""Throughput-optimal scheduling for an energy-harvesting multi-antenna
broadcast transmitter with hybrid (fast + lossy bulk) energy storage.

The package covers the full pipeline: zero-forcing dirty-paper channel
decomposition, weighted water-filling, the optimal single-epoch burst
rule under circuit power, whole-horizon offline optimization with dual
certificates, causal online policies, and a Monte-Carlo benchmark
harness with a small CLI.
"""

from .channels import (
    ChannelSet,
    CovarianceSet,
    EffectiveChannels,
    UserConfig,
    channelset_from_json,
    channelset_to_json,
    decompose_zf_dpc,
    generate_channels,
    weighted_rate,
)
from .energy import (
    ArrivalSplit,
    EpochTimeline,
    FeasibilityReport,
    HybridStorage,
    build_timeline,
    check_feasibility,
    generate_compound_poisson,
)
from .experiments import (
    ExperimentSpec,
    default_parameters,
    reference_profile,
    run_sweep,
    run_trial,
)
from .offline import (
    DualCertificate,
    LemmaReport,
    OfflineInstance,
    OfflineSolution,
    Schedule,
    SolverError,
    TransformedVariables,
    brute_force_oracle,
    objective_from_covariances,
    objective_from_transformed,
    solve_offline_circuit,
    solve_offline_general,
    solve_offline_ideal,
    verify_structure,
)
from .online import OnlineResult, policy_circuit, policy_ideal, run_online, split_arrival
from .single_epoch import PoTable, build_po_table, solve_p_o, solve_single_epoch
from .waterfill import (
    WaterLevelSolution,
    WaterSystem,
    covariances_for_level,
    level_for_budget,
    rate_at_power,
    solve_budget,
    sum_power_for_level,
)

__version__ = "0.1.0"

__all__ = [
    "ChannelSet",
    "CovarianceSet",
    "EffectiveChannels",
    "UserConfig",
    "channelset_from_json",
    "channelset_to_json",
    "decompose_zf_dpc",
    "generate_channels",
    "weighted_rate",
    "ArrivalSplit",
    "EpochTimeline",
    "FeasibilityReport",
    "HybridStorage",
    "build_timeline",
    "check_feasibility",
    "generate_compound_poisson",
    "ExperimentSpec",
    "default_parameters",
    "reference_profile",
    "run_sweep",
    "run_trial",
    "DualCertificate",
    "LemmaReport",
    "OfflineInstance",
    "OfflineSolution",
    "Schedule",
    "SolverError",
    "TransformedVariables",
    "brute_force_oracle",
    "objective_from_covariances",
    "objective_from_transformed",
    "solve_offline_circuit",
    "solve_offline_general",
    "solve_offline_ideal",
    "verify_structure",
    "OnlineResult",
    "policy_circuit",
    "policy_ideal",
    "run_online",
    "split_arrival",
    "PoTable",
    "build_po_table",
    "solve_p_o",
    "solve_single_epoch",
    "WaterLevelSolution",
    "WaterSystem",
    "covariances_for_level",
    "level_for_budget",
    "rate_at_power",
    "solve_budget",
    "sum_power_for_level",
    "__version__",
]
