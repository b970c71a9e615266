"""Principal eigenpair of the spherical operator pencil.

The hemisphere energy form A and the kernel form L define a generalized
eigenproblem A psi = lambda L psi.  The largest mu of A^{-1} L is found by
power iteration with Cholesky solves; lambda = 1/mu is positive, simple, and
strictly decreasing in the kernel exponent beta, so the unique beta with
lambda = 1 is located by bisection.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .params import FracParams
from .sphere_ops import (CircleAssembler, LatGrid, OperatorPair,
                         SphereAssembler, SphericalField)

__all__ = [
    "EigenResult", "PowerIterationError", "principal_eigenpair",
    "lambda_sweep", "find_beta_unit_lambda",
]


class PowerIterationError(RuntimeError):
    """Power iteration failed to converge; carries the Rayleigh history."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = list(history)


@dataclass(frozen=True)
class EigenResult:
    """Principal eigenpair of the hemisphere pencil.

    Attributes
    ----------
    lambda_ : float
        Principal eigenvalue, positive.
    psi : SphericalField
        Eigenfunction, strictly positive on the open hemisphere and
        normalized to psi^T M psi = 1.
    residual : float
        Mass-dual norm of A psi - lambda L psi.
    grid_size : int
        Positive-node count of the latitude grid used.
    """

    lambda_: float
    psi: SphericalField
    residual: float
    grid_size: int


def _solver_for(params: FracParams, grid: LatGrid):
    if params.n == 2:
        return CircleAssembler(params, grid)
    return SphereAssembler(params, grid)


def principal_eigenpair(ops: OperatorPair, tol: float = 1e-13,
                        max_iter: int = 500) -> EigenResult:
    """Largest-mu eigenpair of A^{-1} L, reported as lambda = 1/mu.

    Parameters
    ----------
    ops : OperatorPair
        Assembled hemisphere pair with beta in (N-2s, N), so the L form is
        positive and the principal eigenvector can be taken positive.
    tol : float, optional
        Relative change of the Rayleigh quotient at which to stop.
    max_iter : int, optional
        Iteration cap; exceeding it raises PowerIterationError.

    Returns
    -------
    EigenResult
        Eigenvalue, mass-normalized positive eigenfunction, and the
        mass-dual residual norm of the discrete eigenequation.

    Raises
    ------
    ValueError
        If the energy form has no Cholesky factorization, or the converged
        eigenvector is not strictly positive (a positivity violation points
        at an assembly defect, not a spectral one).
    PowerIterationError
        If the Rayleigh quotient has not settled within max_iter sweeps.
    """
    crit = ops.params.n - 2.0 * ops.params.s
    if ops.beta <= crit:
        raise ValueError(
            f"beta = {ops.beta} <= N - 2s = {crit}: the kernel form is not "
            "positive there and the pencil has no positive eigenpair")
    a_mat, l_mat, mass = ops.a_form, ops.l_form, ops.mass
    try:
        a_cho = sla.cho_factor(a_mat)
    except np.linalg.LinAlgError:
        raise ValueError(
            "discrete energy form not positive definite; refine the grid")
    v = ops.lumped_mass / math.sqrt(
        ops.lumped_mass @ a_mat @ ops.lumped_mass)
    mu = v @ l_mat @ v
    history = [mu]
    for _ in range(max_iter):
        w = sla.cho_solve(a_cho, l_mat @ v)
        v = w / math.sqrt(w @ a_mat @ w)
        mu_new = v @ l_mat @ v
        history.append(mu_new)
        done = abs(mu_new - mu) <= tol * abs(mu_new)
        mu = mu_new
        if done:
            break
    else:
        raise PowerIterationError(
            f"power iteration stagnated after {max_iter} sweeps "
            f"(last Rayleigh change {abs(history[-1] - history[-2]):.3e})",
            history)
    lam = 1.0 / mu
    v = v * np.sign(v[np.argmax(np.abs(v))])
    if np.any(v <= 0.0):
        raise ValueError(
            "principal eigenvector is not strictly positive on the "
            "hemisphere; the assembled forms violate positivity")
    v = v / math.sqrt(v @ mass @ v)
    res_vec = a_mat @ v - lam * (l_mat @ v)
    residual = math.sqrt(res_vec @ sla.solve(mass, res_vec, assume_a="pos"))
    psi = SphericalField.from_hemisphere(ops.grid, v)
    return EigenResult(lambda_=lam, psi=psi, residual=residual,
                       grid_size=ops.grid.m)


def lambda_sweep(params: FracParams, grid: LatGrid, betas):
    """Principal eigenvalue along a grid of kernel exponents.

    Parameters
    ----------
    params : FracParams
        Dimension and order.
    grid : LatGrid
        Latitude grid shared by all solves.
    betas : array_like
        Exponents, each in (N-2s, N).  The solves are independent; they
        run serially here because a single solve is milliseconds at the
        default grid.

    Returns
    -------
    betas, lambdas, residuals : ndarray
        The input exponents with the eigenvalue and eigenequation residual
        at each.  lambdas is strictly decreasing for an exact pencil.
    """
    betas = np.asarray(betas, dtype=float)
    solver = _solver_for(params, grid)
    lambdas = np.empty(betas.size)
    residuals = np.empty(betas.size)
    for i, beta in enumerate(betas):
        res = principal_eigenpair(solver.pair(beta))
        lambdas[i] = res.lambda_
        residuals[i] = res.residual
    return betas, lambdas, residuals


def find_beta_unit_lambda(params: FracParams, grid: LatGrid,
                          tol: float = 1e-3) -> float:
    """The exponent beta at which the principal eigenvalue crosses 1.

    Bisection on the strictly decreasing map beta -> lambda, stopping when
    |lambda - 1| < tol.  The crossing sits at N - s up to discretization
    error.

    Raises
    ------
    ValueError
        If lambda - 1 does not change sign over the admissible interval.
    """
    solver = _solver_for(params, grid)
    width = 2.0 * params.s
    lo = params.n - 2.0 * params.s + 1e-3 * width
    hi = params.n - 1e-3 * width

    def lam(beta):
        return principal_eigenpair(solver.pair(beta)).lambda_

    f_lo, f_hi = lam(lo) - 1.0, lam(hi) - 1.0
    if not (f_lo > 0.0 > f_hi):
        raise ValueError(
            f"unit eigenvalue not bracketed: lambda - 1 is {f_lo:.3e} at "
            f"beta = {lo:.6g} and {f_hi:.3e} at beta = {hi:.6g}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = lam(mid) - 1.0
        if abs(f_mid) < tol:
            return mid
        if f_mid > 0.0:
            lo = mid
        else:
            hi = mid
    raise ValueError("bisection interval collapsed before |lambda - 1| "
                     f"< {tol}; the eigenvalue curve is too flat here")
