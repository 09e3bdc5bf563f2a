"""Joint user identification and channel estimation with clustered activity.

A numpy/scipy library for grant-free random access simulation: a two-level
MAP-ADMM solver that detects active user clusters and estimates spatially
correlated channels without exact covariance knowledge, the synthetic
system model generating such scenarios, reference baselines (oracle MMSE,
iteratively reweighted l2,1), detection/estimation metrics, and a seeded
Monte-Carlo experiment harness with a CLI (``juice``).
"""

from .baselines import OracleInfo, ir_l21_admm, oracle_mmse
from .harness import (
    AlgoConfig,
    ExperimentConfig,
    ExperimentResult,
    ResultRow,
    TrialResult,
    emit_results,
    load_config,
    parse_results,
    preset,
    run_experiment,
    run_trial,
)
from .metrics import NmseAccumulator, detect_support, srr
from .model import (
    ActivityPattern,
    ChannelParams,
    ClusterLayout,
    ConfigurationError,
    PrecisionSet,
    ProblemInstance,
    build_cluster_layout,
    build_prior_guess,
    gen_covariance,
    gen_orthonormal_pilots,
    gen_pilots,
    gen_precision_set,
    load_instance,
    sample_activity,
    sample_channels,
    save_instance,
    synthesize,
)
from .priors import (
    MMWeights,
    eval_cluster_prior,
    eval_map_objective,
    eval_separable_prior,
    eval_wishart_neglog,
    mm_weights,
    surrogate_value,
)
from .solver import (
    JuiceSolution,
    SolverFault,
    SolverParams,
    SolverState,
    compute_alpha,
    compute_mu,
    detect_active_clusters,
    lagrangian_value,
    primal_sweep,
    solve,
    update_duals,
    update_sigma,
    update_v,
    update_x,
    update_z,
)

__version__ = "0.1.0"
