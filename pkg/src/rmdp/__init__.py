"""Reductive Markov decision processes: verification and one-pass solving.

A chain or MDP is reductive when the number of states reachable from x
strictly drops on every transient transition that is not a self-loop,
and some absorbing part exists.  For such models the optimal values can
be computed in a single backward pass over the potential level sets,
with self-loops folded away by a closed-form update.  This package
verifies the property, builds the canonical decomposition, solves by the
one-pass scheme and by conventional baselines, and ships the benchmark
domains used to compare them.
"""

from .backends import active_backend, warmup
from .errors import (
    DivergentSelfLoop,
    DomainError,
    DuplicateSuccessor,
    EmptyMask,
    InvalidParams,
    InvalidPolicy,
    MaxSweepsExceeded,
    ModelError,
    NegativeProbability,
    NonContractive,
    NonStochasticRow,
    NotReductive,
    RmdpError,
    ScheduleMismatch,
    SolverError,
)
from .mdp import (
    MarkovChain,
    Mdp,
    Policy,
    ValueTable,
    build_mdp,
    induced_chain,
    mdp_from_chain,
    mdp_to_spec,
    successors,
    validate_policy,
)
from .reachability import (
    CERTAIN_SELF_LOOP_MARKED_TRANSIENT,
    NO_ABSORBING_SET,
    NON_DECREASING_TRANSIENT,
    AbsorbingDecomposition,
    CanonicalPermutation,
    LevelSetSchedule,
    PotentialTable,
    ReductivityVerdict,
    Violation,
    absorbing_decomposition,
    canonical_permutation,
    counting_potential,
    level_set_schedule,
    potential_difference,
    predecessors,
    reachable_set,
    self_loop_states,
    verify_reductive,
    verify_reductive_mdp,
)
from .solvers import (
    NATURAL,
    RANDOM_PER_SWEEP,
    REVERSED_LEVEL_SETS,
    SolveResult,
    SolveStats,
    SolverConfig,
    Trajectory,
    bellman_residual,
    bvi_solve,
    q_update,
    qvi_solve,
    rvi_solve,
    simulate_policy,
    solve_absorbing_subspace,
)
from .domains import (
    DELTA_INTERVAL,
    MULTIPLICATIVE,
    SPIRAL_EDGES,
    LiquidationParams,
    ShrinkParams,
    ShrinkResult,
    build_fig2,
    build_liquidation,
    build_spiral,
    liquidation_reward,
    liquidation_state,
    liquidation_state_id,
    shrink_expected_drift,
    shrink_simulate,
    spiral_chain,
    spiral_state_id,
)

__version__ = "0.1.0"

__all__ = [
    "AbsorbingDecomposition",
    "CanonicalPermutation",
    "CERTAIN_SELF_LOOP_MARKED_TRANSIENT",
    "DELTA_INTERVAL",
    "DivergentSelfLoop",
    "DomainError",
    "DuplicateSuccessor",
    "EmptyMask",
    "InvalidParams",
    "InvalidPolicy",
    "LevelSetSchedule",
    "LiquidationParams",
    "MarkovChain",
    "MaxSweepsExceeded",
    "Mdp",
    "ModelError",
    "MULTIPLICATIVE",
    "NATURAL",
    "NegativeProbability",
    "NO_ABSORBING_SET",
    "NON_DECREASING_TRANSIENT",
    "NonContractive",
    "NonStochasticRow",
    "NotReductive",
    "Policy",
    "PotentialTable",
    "RANDOM_PER_SWEEP",
    "REVERSED_LEVEL_SETS",
    "ReductivityVerdict",
    "RmdpError",
    "ScheduleMismatch",
    "ShrinkParams",
    "ShrinkResult",
    "SolveResult",
    "SolveStats",
    "SolverConfig",
    "SolverError",
    "SPIRAL_EDGES",
    "Trajectory",
    "ValueTable",
    "Violation",
    "absorbing_decomposition",
    "active_backend",
    "bellman_residual",
    "build_fig2",
    "build_liquidation",
    "build_mdp",
    "build_spiral",
    "bvi_solve",
    "canonical_permutation",
    "counting_potential",
    "induced_chain",
    "level_set_schedule",
    "liquidation_reward",
    "liquidation_state",
    "liquidation_state_id",
    "mdp_from_chain",
    "mdp_to_spec",
    "potential_difference",
    "predecessors",
    "q_update",
    "qvi_solve",
    "reachable_set",
    "rvi_solve",
    "self_loop_states",
    "shrink_expected_drift",
    "shrink_simulate",
    "simulate_policy",
    "solve_absorbing_subspace",
    "spiral_chain",
    "spiral_state_id",
    "successors",
    "validate_policy",
    "verify_reductive",
    "verify_reductive_mdp",
    "warmup",
]
