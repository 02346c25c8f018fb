"""Singular-control reflection values of linear diffusions and their
expected-supremum representations, with quadrature and Monte Carlo
cross-verification."""

from .control import ControlProblem, ControlSolution, PayoffSpec, power_exp_payoff
from .diffusion import (BoundaryClassification, DiffusionSpec, FundamentalSolutions,
                        classify_boundaries, fundamental_solutions, gbm_spec,
                        generic_spec, killed_psi, scale_density, speed_density)
from .montecarlo import McEstimate, SimConfig
from .resolvent import L_functional, ResolventKernel, generator_apply
from .stopping import HatDiffusionSpec, StoppingProblem, StoppingSolution

__all__ = [
    "BoundaryClassification",
    "ControlProblem",
    "ControlSolution",
    "DiffusionSpec",
    "FundamentalSolutions",
    "HatDiffusionSpec",
    "L_functional",
    "McEstimate",
    "PayoffSpec",
    "ResolventKernel",
    "SimConfig",
    "StoppingProblem",
    "StoppingSolution",
    "classify_boundaries",
    "fundamental_solutions",
    "gbm_spec",
    "generator_apply",
    "generic_spec",
    "killed_psi",
    "power_exp_payoff",
    "scale_density",
    "speed_density",
]

__version__ = "0.1.0"
