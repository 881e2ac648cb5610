"""Zero-sum Markov games: value iteration for upper, lower and relaxed values,
Markov chain approximation of regime-switching diffusion games, and
experiment tooling (h-sweeps, Monte-Carlo cost estimates, CLI)."""

from .errors import (
    ConsistencyViolation,
    DegenerateDiffusion,
    HTooLarge,
    InvalidGame,
    MaxIterExceeded,
    MismatchedStateSpaces,
    NotContractive,
    SaddleGameError,
    UnreachableAbsorption,
)
from .game import (
    ControlGrid,
    CostModel,
    MarkovGame,
    StateSpace,
    StructureTag,
    TransitionKernel,
    check_absorption,
    make_game,
    probe_convex_concave,
    validate_game,
)
from .harness import SimulationEstimate, SweepResult, h_sweep, simulate_cost
from .mca import (
    ChainApproximation,
    DiffusionGameSpec,
    build_chain,
    check_local_consistency,
    diagonal_dominance_check,
    max_h_bound,
    spec_from_config,
)
from .problems import builtin_examples, game_from_config, load_problem
from .solver import (
    MODES,
    FeedbackPolicy,
    SolveReport,
    ValueFunction,
    bellman_lower_step,
    bellman_relaxed_step,
    bellman_upper_step,
    extract_policies,
    saddle_gap,
    solve,
)
from .static import mixed_value, pure_lower, pure_upper

__version__ = "0.1.0"
