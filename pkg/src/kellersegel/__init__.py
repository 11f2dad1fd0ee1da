"""Spectral solver and convergence diagnostics for the 1D Keller-Segel system."""

from .analysis import (ConvergenceReport, analyze, angle_condition, detect_convergence,
                       fit_lojasiewicz, rate_check, rate_holdout)
from .config import RunConfig, load_config, parse_config
from .dynamics import (DiagnosticsRow, StepControl, Trajectory, choose_dt, simulate,
                       simulate_validated, step)
from .grid import Field, Grid, NormKind, derivative, integrate, make_grid, norm_field, norm_state
from .model import (Params, State, TangentState, chain_rate, dissipation, evolution_rhs,
                    extended_log, gradient_norm, hessian_apply, lyapunov, lyapunov_gradient)
from .stationary import (StationaryState, constant_state, kernel_of_hessian, linear_stability,
                         solve_stationary, stationary_residual)

__all__ = [
    "ConvergenceReport",
    "DiagnosticsRow",
    "Field",
    "Grid",
    "NormKind",
    "Params",
    "RunConfig",
    "State",
    "StationaryState",
    "StepControl",
    "TangentState",
    "Trajectory",
    "analyze",
    "angle_condition",
    "chain_rate",
    "choose_dt",
    "constant_state",
    "derivative",
    "detect_convergence",
    "dissipation",
    "evolution_rhs",
    "extended_log",
    "fit_lojasiewicz",
    "gradient_norm",
    "hessian_apply",
    "integrate",
    "kernel_of_hessian",
    "linear_stability",
    "load_config",
    "lyapunov",
    "lyapunov_gradient",
    "make_grid",
    "norm_field",
    "norm_state",
    "parse_config",
    "rate_check",
    "rate_holdout",
    "simulate",
    "simulate_validated",
    "solve_stationary",
    "stationary_residual",
    "step",
]

__version__ = "0.1.0"
