"""Hierarchy/behaviour mean-field game toolkit.

A population spread over hierarchy levels and behaviour types evolves under
level pressure, same-level stimulated interactions, and payoff-driven
behaviour switching.  The package integrates the coupled forward occupation
and backward payoff flows, builds stationary expansions in the interaction
and discount scales, classifies linear stability around them, and checks the
mean-field limit against an exact finite-population simulator.
"""
from .model import (
    Control,
    GameConfig,
    Occupation,
    Payoff,
    Regime,
    SinkRates,
    dominant_level,
    effective_rewards,
    regime_scales,
    validate,
)
from .kinetics import (
    KineticsError,
    Trajectory,
    integrate_forward,
    kinetic_rhs,
    kinetic_rhs_sink,
    stationary_residual,
)
from .hjb import (
    HjbError,
    consistency_margin,
    hjb_rhs,
    integrate_backward,
    optimal_control,
    stationary_payoff_residual,
    switch_gains,
)
from .stationary import (
    DegenerateChainError,
    LevelChain,
    StationaryError,
    StationarySolution,
    build_level_chain,
    g0_term,
    g1_term,
    g2_term,
    kernel,
    kernel_product_forms,
    realized_sign,
    solve_on_complement,
    stationary_solution,
    x1_correction,
)
from .stability import (
    SpectrumReport,
    StabilityError,
    build_reduced_linearization,
    compare_d_block,
    lift_tangent,
    reduce_states,
    spectrum,
)
from .solver import (
    MfgSolveResult,
    SolverError,
    TurnpikeMetrics,
    boundary_tangent_condition,
    cone_check,
    default_dt,
    default_horizon,
    rate_ordering_check,
    solve_mfg,
    turnpike_metrics,
)
from .simulator import (
    ConvergenceStudy,
    CountState,
    SimPath,
    Transition,
    convergence_study,
    enumerate_transitions,
    simulate,
)
from .io import ConfigError, read_config

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # model
    "GameConfig", "Regime", "SinkRates", "Occupation", "Payoff", "Control",
    "validate", "effective_rewards", "dominant_level", "regime_scales",
    # kinetics
    "Trajectory", "KineticsError", "kinetic_rhs", "kinetic_rhs_sink",
    "integrate_forward", "stationary_residual",
    # hjb
    "HjbError", "hjb_rhs", "switch_gains", "optimal_control",
    "consistency_margin", "integrate_backward", "stationary_payoff_residual",
    # stationary
    "StationaryError", "DegenerateChainError", "LevelChain",
    "StationarySolution", "build_level_chain", "kernel",
    "kernel_product_forms", "realized_sign", "solve_on_complement",
    "g0_term", "g1_term", "g2_term", "x1_correction", "stationary_solution",
    # stability
    "StabilityError", "SpectrumReport", "build_reduced_linearization",
    "spectrum", "compare_d_block", "lift_tangent", "reduce_states",
    # solver
    "SolverError", "MfgSolveResult", "TurnpikeMetrics", "solve_mfg",
    "cone_check", "boundary_tangent_condition", "rate_ordering_check",
    "turnpike_metrics", "default_horizon", "default_dt",
    # simulator
    "CountState", "Transition", "SimPath", "ConvergenceStudy",
    "enumerate_transitions", "simulate", "convergence_study",
    # io
    "ConfigError", "read_config",
]
