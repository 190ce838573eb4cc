"""Randomized Lagrangian stochastic approximation for constrained monotone VIs."""

from .core import ProblemInstance, certified_bounds, check_monotonicity, estimate_bounds
from .errors import (ConfigurationError, CouplingError, InvalidArgumentError, OracleError,
                     RLSAError)
from .problems import (InstanceDescriptor, make_affine_vi, make_bilinear_minimax,
                       make_nash_cournot)
from .solver import RunResult, SolverConfig, run

__all__ = [
    "ProblemInstance", "certified_bounds", "check_monotonicity", "estimate_bounds",
    "ConfigurationError", "CouplingError", "InvalidArgumentError", "OracleError", "RLSAError",
    "InstanceDescriptor", "make_affine_vi", "make_bilinear_minimax", "make_nash_cournot",
    "RunResult", "SolverConfig", "run",
]
