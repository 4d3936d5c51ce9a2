"""Structured perfect Bayesian equilibria of finite dynamic games.

Players hold private Markov types and take public actions. Equilibria are
built backwards over common-information beliefs by solving one fixed-point
problem per (stage, belief), then unrolled forwards over the public history
tree. :mod:`spbe.verify` certifies the result independently.
"""

from .belief import BeliefVector, quantize_key, update_marginal, update_vector
from .game import (
    EnumerationTooLarge,
    GameSpec,
    InvalidGameError,
    ValidatedGame,
    check_game,
    enumerate_outcome_distribution,
    expected_total_reward,
    validate_game,
)
from .solver import (
    BeliefSystem,
    EquilibriumGenerator,
    FixedPointConfig,
    NoFixedPointFound,
    StageSolution,
    StrategyProfile,
    best_response_row,
    forward_construct,
    solve_stage_fixed_point,
    solve_value,
    stage_objective,
)
from .verify import (
    VerificationReport,
    best_response_values,
    check_belief_consistency,
    check_sequential_rationality,
    project_to_s,
    simulate,
)

__version__ = "0.1.0"

__all__ = [
    "BeliefSystem",
    "BeliefVector",
    "EnumerationTooLarge",
    "EquilibriumGenerator",
    "FixedPointConfig",
    "GameSpec",
    "InvalidGameError",
    "NoFixedPointFound",
    "StageSolution",
    "StrategyProfile",
    "ValidatedGame",
    "VerificationReport",
    "best_response_row",
    "best_response_values",
    "check_belief_consistency",
    "check_game",
    "check_sequential_rationality",
    "enumerate_outcome_distribution",
    "expected_total_reward",
    "forward_construct",
    "project_to_s",
    "quantize_key",
    "simulate",
    "solve_stage_fixed_point",
    "solve_value",
    "stage_objective",
    "update_marginal",
    "update_vector",
    "validate_game",
]
