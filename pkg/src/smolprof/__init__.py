"""Self-similar profiles of the Smoluchowski coagulation equation.

Kernels are sums of ``w (x^alpha y^beta + x^beta y^alpha)`` with
``alpha <= 0``; profiles are computed on logarithmic grids and checked
against their known structural properties.
"""

from .grid import Grid, GridFunction, make_geometric_grid, make_uniform_grid, moment, resample
from .kernel import KernelSpec, KernelTerm
from .profiles import ProfileSolution, SolverOptions, solve, solve_alpha_neg, solve_alpha_zero
from .dynamics import EvolutionState, RelaxOptions, relax_to_profile
from .analyzer import VerificationReport, verify
from .estimators import FractionalDerivative, FractionalIntegral, ProfileEstimator

__version__ = "0.1.0"

__all__ = [
    "Grid", "GridFunction", "make_geometric_grid", "make_uniform_grid", "moment", "resample",
    "KernelSpec", "KernelTerm",
    "ProfileSolution", "SolverOptions", "solve", "solve_alpha_neg", "solve_alpha_zero",
    "EvolutionState", "RelaxOptions", "relax_to_profile",
    "VerificationReport", "verify",
    "FractionalDerivative", "FractionalIntegral", "ProfileEstimator",
]
