"""Sparse LSTD policy evaluation with a projective minimax-concave penalty,
solved by forward-reflected-backward splitting, plus exact chain-walk MDP
oracles and a benchmark harness."""

from .benchmark import (
    ConfigError,
    ExperimentConfig,
    ResultRow,
    load_config,
    load_dataset,
    nmse,
    run_sweep,
    save_dataset,
    write_results,
)
from .features import (
    FeatureMapSpec,
    build_lstd_data,
    evaluate_features,
    feature_table,
)
from .lstd import (
    LstdData,
    LstdOperatorData,
    LstdRegressor,
    PmcLstd,
    PmcSolverConfig,
    assemble_operator,
    check_convexity_condition,
    default_config,
    lstd_closed_form,
    pmc_lstd_solve,
    pmc_operator_T,
    solve_assembled,
)
from .mdp import (
    ACTION_NAMES,
    LEFT,
    RIGHT,
    ChainMdpModel,
    ExactSolution,
    SampleBatch,
    bellman_backup,
    chain_transition,
    exact_optimal,
    exact_q_policy,
    optimal_bellman_backup,
    sample_batch,
)
from .policy_iteration import (
    BoundCheck,
    PiDiagnostics,
    PolicyIterationRun,
    approximate_policy_iteration,
    greedy_policy,
    pi_bound_check,
)
from .prox import (
    SubspaceBasis,
    mc_penalty,
    moreau_env_l1,
    pmc_penalty,
    project_subspace,
    resolvent_l1_minus_id,
    soft_threshold,
)
from .splitting import (
    DivergenceError,
    LipschitzMonotoneMap,
    ResolventOperator,
    SolveReport,
    StepSchedule,
    fixed_point_residual,
    frbs_solve,
    validate_step_schedule,
)

__version__ = "0.1.0"
