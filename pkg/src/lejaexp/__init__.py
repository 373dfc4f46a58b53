"""Exponential time integrators driven by real Leja point interpolation."""
from lejaexp.integrators import REGISTRY, SolverContext, StepResult, step
from lejaexp.jacobian import jac_vec, nonlinear_remainder, power_iterations, spectrum_to_leja
from lejaexp.leja import (InterpolationConfig, leja_nodes, real_leja_exp, real_leja_phi,
                          real_leja_phi_nl)

__version__ = "0.1.0"

__all__ = [
    "REGISTRY", "SolverContext", "StepResult", "step",
    "jac_vec", "nonlinear_remainder", "power_iterations", "spectrum_to_leja",
    "InterpolationConfig", "leja_nodes", "real_leja_exp", "real_leja_phi", "real_leja_phi_nl",
]
