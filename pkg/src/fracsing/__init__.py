"""Numerical toolkit for boundary singularities of semilinear fractional problems.

Modules
-------
params      dimension/order constants and critical exponents
kernels     Green, Martin, Poisson kernels on ball and half-space
sphere_ops  zonal kernels and Galerkin operator pairs on the sphere
eigen       principal eigenpair of the spherical operator pencil
separable   constant and hemisphere nonlinear profiles
ball_solver damped Picard solver for the disc problem with a boundary atom
trace_diag  boundary-trace and kernel-ratio diagnostics
cli         experiment runner emitting CSV/SVG/PNG/JSON
"""

import os as _os


def _thread_override():
    # FRACSING_THREADS caps the BLAS pools; it must land in the environment
    # before numpy loads, which is why this sits above the imports below
    count = _os.environ.get("FRACSING_THREADS", "")
    if count.isdigit() and int(count) > 0:
        for name in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                     "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            _os.environ.setdefault(name, count)


_thread_override()

from .params import (
    CriticalExponents,
    FracParams,
    beta_of_p,
    critical_exponents,
    gamma,
    marcinkiewicz_exponent,
    normalization_constant,
    p_of_beta,
)
from .sphere_ops import (
    CircleAssembler,
    LatGrid,
    OperatorPair,
    SphereAssembler,
    SphericalField,
    assemble_operator_pair,
    b_const,
    b_kernel,
    c35,
    gagliardo_norm_sq,
    radial_kernel_K,
    zonal_reduce,
)
from .eigen import (
    EigenResult,
    PowerIterationError,
    find_beta_unit_lambda,
    lambda_sweep,
    principal_eigenpair,
)
from .separable import (
    ProfileResult,
    constant_profile,
    constant_profile_residual,
    energy_J,
    hemisphere_profile,
    nonexistence_check,
    profile_beta,
)
from .ball_solver import (
    DiscField,
    DiscMesh,
    GreenOperator,
    SolveReport,
    SweepResult,
    apply_green,
    k_sweep,
    scaling_transform,
    similarity_profile,
    solve_uk,
)
from .trace_diag import (
    GmpCheck,
    LevelSetIntegral,
    TraceFit,
    gfm_ratio,
    gmp_bound_check,
    level_set_integral,
    strace_fit,
    weak_norm_probe,
)

__all__ = [
    "CircleAssembler",
    "CriticalExponents",
    "DiscField",
    "DiscMesh",
    "EigenResult",
    "FracParams",
    "GmpCheck",
    "GreenOperator",
    "LatGrid",
    "LevelSetIntegral",
    "OperatorPair",
    "PowerIterationError",
    "ProfileResult",
    "SolveReport",
    "SphereAssembler",
    "SphericalField",
    "SweepResult",
    "TraceFit",
    "apply_green",
    "assemble_operator_pair",
    "b_const",
    "b_kernel",
    "beta_of_p",
    "c35",
    "constant_profile",
    "constant_profile_residual",
    "critical_exponents",
    "energy_J",
    "find_beta_unit_lambda",
    "gagliardo_norm_sq",
    "gamma",
    "gfm_ratio",
    "gmp_bound_check",
    "hemisphere_profile",
    "k_sweep",
    "lambda_sweep",
    "level_set_integral",
    "marcinkiewicz_exponent",
    "nonexistence_check",
    "normalization_constant",
    "p_of_beta",
    "principal_eigenpair",
    "profile_beta",
    "radial_kernel_K",
    "scaling_transform",
    "similarity_profile",
    "solve_uk",
    "strace_fit",
    "weak_norm_probe",
    "zonal_reduce",
]

__version__ = "0.1.0"
