"""NAPP-AL: a first-order primal-dual augmented Lagrangian method for

    minimize    G(u, v) + J(u) + H(v)
    subject to  Omega(u) + Phi(u) + B v = 0,   u in U.
"""

from .bregman import BregmanKernel
from .diagnostics import (
    check_descent_inequalities,
    estimate_rate,
    finite_difference_check,
    residual_xi,
)
from .exceptions import ConfigurationError, NumericalBreakdown
from .model import Iterate, ProblemSpec, augmented_lagrangian, validate_problem
from .problems import (
    ErmParams,
    GridSpec,
    SharingParams,
    brute_force_stationary,
    build_erm,
    build_sharing,
    convex_qp_params,
    sharing_kkt_solution,
)
from .prox import Box, Regularizer, prox_separable, register_block_solver
from .solver import SolveResult, SolverConfig, default_gamma, solve
from .trace import Trace, TraceRecord

__version__ = "0.1.0"

__all__ = [
    "Box", "BregmanKernel", "ConfigurationError", "ErmParams", "GridSpec", "Iterate",
    "NumericalBreakdown", "ProblemSpec", "Regularizer", "SharingParams", "SolveResult",
    "SolverConfig", "Trace", "TraceRecord", "augmented_lagrangian", "brute_force_stationary",
    "build_erm", "build_sharing", "check_descent_inequalities", "convex_qp_params",
    "default_gamma", "estimate_rate", "finite_difference_check", "prox_separable",
    "register_block_solver", "residual_xi", "sharing_kkt_solution", "solve",
    "validate_problem",
]
