"""Fundamental solutions of time-fractional diffusion equations.

Closed-form kernels for constant coefficients, the parametrix construction
for variable coefficients, and a Cauchy-problem solver built on both.
"""

__version__ = "0.1.0"

from .fractional import (
    SampledFunction,
    TimeGrid,
    caputo_derivative,
    rl_derivative,
    rl_integral,
)
from .kernels import (
    KernelQuery,
    SPDOperator,
    fourier_oracle_z0,
    y0_derivative,
    y0_eval,
    z0_derivative,
    z0_eval,
    z0_time_derivative,
)
from .levi import (
    CoefficientField,
    GreenMatrixTable,
    OperatorSpec,
    QKernelTable,
    SpaceTimeGrid,
    assemble_Y,
    assemble_Z,
    green_tables,
    solve_Psi,
    solve_Q,
)
from .solver import (
    CauchyProblem,
    SolutionGrid,
    heat_potential,
    initial_potential,
    residual,
    solve_cauchy,
)
from .specfun import HFunctionSpec, hfun_eval, mittag_leffler

__all__ = [
    "CauchyProblem",
    "CoefficientField",
    "GreenMatrixTable",
    "HFunctionSpec",
    "KernelQuery",
    "OperatorSpec",
    "QKernelTable",
    "SPDOperator",
    "SampledFunction",
    "SolutionGrid",
    "SpaceTimeGrid",
    "TimeGrid",
    "__version__",
    "assemble_Y",
    "assemble_Z",
    "caputo_derivative",
    "fourier_oracle_z0",
    "green_tables",
    "heat_potential",
    "hfun_eval",
    "initial_potential",
    "mittag_leffler",
    "residual",
    "rl_derivative",
    "rl_integral",
    "solve_Psi",
    "solve_Q",
    "solve_cauchy",
    "y0_derivative",
    "y0_eval",
    "z0_derivative",
    "z0_eval",
    "z0_time_derivative",
]
