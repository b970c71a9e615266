"""Boundary-trace diagnostics for disc fields.

Level sets of the boundary distance are exact circles here, so every
diagnostic samples fields on the circle of radius 1 - beta and works with
the scaled integrals beta^{1-s} * integral.  Fields are interpolated as
ratios against the Martin kernel, which stays smooth where the fields
themselves blow up.
"""

import math
from dataclasses import dataclass

import numpy as np

from .params import FracParams, critical_exponents
from .kernels import martin_ball
from .ball_solver import DiscMesh, DiscField, GreenOperator, Z_ATOM

__all__ = [
    "LevelSetIntegral", "TraceFit", "GmpCheck", "level_set_integral",
    "strace_fit", "gfm_ratio", "gmp_bound_check", "weak_norm_probe",
]


@dataclass
class LevelSetIntegral:
    """Integral of a field over the circle at boundary distance beta."""

    beta: float
    raw: float
    scaled: float


@dataclass
class TraceFit:
    """Atom weights fitted on the innermost resolved circle.

    defects holds the scaled L1 defect curve over dyadic beta; accepted
    means the defect decreased over the three smallest beta values.
    """

    weights: np.ndarray
    defects: list
    accepted: bool


@dataclass
class GmpCheck:
    """Ray profile of G[M^p] / rho^s with its fitted log-log slope."""

    dists: np.ndarray
    ratios: np.ndarray
    slope: float
    classification: str


def _beta_ceiling(mesh: DiscMesh) -> float:
    # circles inside the innermost ring of nodes cannot be interpolated
    return 1.0 - mesh.r_centers[0]


def _circle_points(beta: float, n_phi: int) -> np.ndarray:
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    r = 1.0 - beta
    return np.column_stack([r * np.cos(phi), r * np.sin(phi)])


def _sample(mesh, params, values, pts, atoms=None):
    """Field values at off-node points via Martin-ratio interpolation.

    The reference is the kernel sum over atoms (default: the distinguished
    atom alone); dividing it out before interpolating keeps the nodal data
    smooth across every kernel peak it names.
    """
    if atoms is None:
        atoms = [Z_ATOM]
    mart_n = sum(martin_ball(params, mesh.points, z) for z in atoms)
    mart_p = sum(martin_ball(params, pts, z) for z in atoms)
    ratio = mesh.interpolate(np.asarray(values, float) / mart_n, pts)
    return np.atleast_1d(ratio) * mart_p


def level_set_integral(mesh: DiscMesh, params: FracParams, v, beta: float,
                       n_phi: int = None) -> LevelSetIntegral:
    """Integrate a field over the circle at boundary distance beta.

    Parameters
    ----------
    mesh : DiscMesh
    params : FracParams
    v : array_like or callable
        Nodal values (interpolated onto the circle) or a callable taking
        an (n, 2) point array.
    beta : float
        Boundary distance of the circle, within (0, beta0) for the mesh's
        collar beta0 = 1 - innermost node radius.
    n_phi : int, optional
        Circle sample count for the trapezoid rule.  Defaults to 32
        samples per beta of arc so kernel-type peaks at the atom stay
        resolved, capped at 2^19.

    Returns
    -------
    LevelSetIntegral
        With scaled = beta^{1-s} * raw attached.

    Raises
    ------
    ValueError
        If beta lies outside (0, beta0).
    """
    beta0 = _beta_ceiling(mesh)
    if not 0.0 < beta < beta0:
        raise ValueError(
            f"beta = {beta:g} outside the mesh collar (0, {beta0:g})")
    if n_phi is None:
        n_phi = int(min(2 ** 19, max(1024, 64.0 * math.pi / beta)))
    pts = _circle_points(beta, n_phi)
    vals = v(pts) if callable(v) else _sample(mesh, params, v, pts)
    raw = float(np.mean(vals)) * 2.0 * math.pi * (1.0 - beta)
    return LevelSetIntegral(beta=beta, raw=raw,
                            scaled=beta ** (1.0 - params.s) * raw)


def _graded_circle(atoms, beta, n_coarse=256, per_side=80):
    """Circle sample angles clustered at each atom, with trapezoid weights.

    The kernels peak over an angular width of order beta around their
    atoms; uniform grids at practical sizes never land there.
    """
    angles = [2.0 * math.pi * np.arange(n_coarse) / n_coarse]
    for z in atoms:
        alpha = math.atan2(z[1], z[0])
        off = beta * np.geomspace(0.125, 0.95 * math.pi / beta, per_side)
        angles.append(np.mod(alpha + np.concatenate([-off[::-1], [0.0],
                                                     off]), 2.0 * math.pi))
    phi = np.unique(np.concatenate(angles))
    gaps = np.diff(np.concatenate([phi, [phi[0] + 2.0 * math.pi]]))
    w = 0.5 * (gaps + np.roll(gaps, 1))
    return phi, w


def strace_fit(mesh: DiscMesh, params: FracParams, u, atoms,
               beta_fit: float = None) -> TraceFit:
    """Recover atom weights of a field from its innermost resolved circle.

    Weighted least-squares fit of k_i in u ~ sum k_i M(., z_i) over the
    circle at distance beta_fit (default: the innermost ring of nodes,
    the smallest scale the interpolation resolves), sampled on a grid
    graded into each kernel peak.  The defect curve reports
    beta^{1-s} * integral of |u - sum k_i M| over dyadic beta from
    beta_fit up to the collar; the fit is accepted when the defect
    decreases over the three smallest beta values, or already sits at
    the relative noise floor there.

    Raises
    ------
    ValueError
        Near-duplicate atoms (closer than one sector of the mesh), or a
        design matrix that is ill-conditioned anyway.
    """
    values = u.values if isinstance(u, DiscField) else np.asarray(u, float)
    if not np.all(np.isfinite(values)):
        raise ValueError("strace_fit requires finite field values")
    atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
    if atoms.shape[0] > 1:
        diff = atoms[:, None, :] - atoms[None, :, :]
        gap = np.sqrt((diff ** 2).sum(axis=-1))
        gap[np.diag_indices_from(gap)] = np.inf
        if gap.min() < 2.0 * math.pi / mesh.n_theta:
            pair = np.unravel_index(np.argmin(gap), gap.shape)
            raise ValueError(
                f"atoms {pair[0]} and {pair[1]} are nearer than one mesh "
                "sector; the fit is ill-conditioned")
    if beta_fit is None:
        beta_fit = float(mesh.rho[(mesh.n_r - 1) * mesh.n_theta])

    def circle_fields(beta):
        phi, w = _graded_circle(atoms, beta)
        r = 1.0 - beta
        pts = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
        design = np.column_stack(
            [martin_ball(params, pts, z) for z in atoms])
        return pts, w * r, design

    pts, w, design = circle_fields(beta_fit)
    target = _sample(mesh, params, values, pts, atoms)
    gram = design.T @ (w[:, None] * design)
    rhs = design.T @ (w * target)
    sv = np.linalg.svd(gram, compute_uv=False)
    if sv[-1] <= 1e-14 * sv[0]:
        raise ValueError("trace design matrix is ill-conditioned; atoms "
                         "are too close for this mesh")
    sol = np.linalg.solve(gram, rhs)
    beta0 = _beta_ceiling(mesh)
    defects, scales = [], []
    beta = beta_fit
    while beta < min(0.2, beta0):
        cpts, cw, cdesign = circle_fields(beta)
        res = _sample(mesh, params, values, cpts, atoms)
        scales.append(float(cw @ np.abs(res)))
        res = res - cdesign @ sol
        raw = float(cw @ np.abs(res))
        defects.append(LevelSetIntegral(
            beta=beta, raw=raw, scaled=beta ** (1.0 - params.s) * raw))
        beta *= 2.0
    small = [d.scaled for d in defects[:3]]
    floor = [1e-6 * b ** (1.0 - params.s) * sc
             for b, sc in zip((d.beta for d in defects[:3]), scales[:3])]
    accepted = len(small) == 3 and (
        small[0] < small[1] < small[2]
        or all(d < f for d, f in zip(small, floor)))
    return TraceFit(weights=sol, defects=defects, accepted=accepted)


def gfm_ratio(mesh: DiscMesh, params: FracParams, p: float, points,
              green: GreenOperator = None) -> np.ndarray:
    """Ratio G[M^p] / M at points approaching the atom.

    The ratio field is interpolated directly; it tends to 0 at z while
    both numerator and denominator blow up.

    Raises
    ------
    ValueError
        p outside (0, p2), or points below the mesh resolution around z.
    """
    p2 = critical_exponents(params).p2
    if not 0.0 < p < p2:
        raise ValueError(
            f"gfm_ratio needs p in (0, {p2:g}) for an integrable power")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    dist = np.linalg.norm(points - Z_ATOM, axis=1)
    if np.any(dist < mesh.min_z_distance):
        raise ValueError(
            "points lie below the mesh resolution around the atom "
            f"(min distance {mesh.min_z_distance:.3e})")
    if green is None:
        green = GreenOperator(params, mesh)
    mart = martin_ball(params, mesh.points, Z_ATOM)
    ratio_nodes = green.apply_power(mart, p) / mart
    out = mesh.interpolate(ratio_nodes, points)
    return np.atleast_1d(out)


def gmp_bound_check(mesh: DiscMesh, params: FracParams, p: float,
                    green: GreenOperator = None, d_lo: float = 1e-5,
                    d_hi: float = 0.05) -> GmpCheck:
    """Classify the growth of G[M^p] / rho^s along the ray to the atom.

    Fits the log-log slope of the ratio against |x - z| over rings with
    ray distance inside [d_lo, d_hi] and classifies the profile: "power"
    for a clearly negative slope, otherwise "logarithmic" when the
    per-decade increments stay level and "bounded" when they die out.

    Raises
    ------
    ValueError
        p outside (0, p2), or fewer than two resolved decades in the
        fitting window.
    """
    p2 = critical_exponents(params).p2
    if not 0.0 < p < p2:
        raise ValueError(
            f"gmp_bound_check needs p in (0, {p2:g}) for an integrable "
            "power")
    if green is None:
        green = GreenOperator(params, mesh)
    rho_rings = mesh.rho[::mesh.n_theta]
    keep = (rho_rings >= d_lo) & (rho_rings <= d_hi)
    dists = rho_rings[keep]
    if dists.size < 4 or dists.max() / dists.min() < 100.0:
        raise ValueError(
            "fewer than two resolved decades of ray distance in "
            f"[{d_lo:g}, {d_hi:g}]; refine the mesh or widen the window")
    mart = martin_ball(params, mesh.points, Z_ATOM)
    pot = green.apply_power(mart, p)
    ray = np.column_stack([1.0 - dists, np.zeros(dists.size)])
    ratios = mesh.interpolate(pot / mesh.rho ** params.s, ray)
    ratios = np.atleast_1d(ratios)
    order = np.argsort(dists)[::-1]
    dists, ratios = dists[order], ratios[order]
    slope = float(np.polyfit(np.log(dists), np.log(ratios), 1)[0])
    if slope < -0.2:
        cls = "power"
    else:
        # compare increments per log-step early vs late along the ray
        third = dists.size // 3
        early = ratios[third] - ratios[0]
        late = ratios[-1] - ratios[-1 - third]
        logspan_e = math.log(dists[0] / dists[third])
        logspan_l = math.log(dists[-1 - third] / dists[-1])
        g_early = early / logspan_e
        g_late = late / logspan_l
        if g_late > 0.5 * g_early and g_early > 0.0:
            cls = "logarithmic"
        else:
            cls = "bounded"
    return GmpCheck(dists=dists, ratios=ratios, slope=slope,
                    classification=cls)


def weak_norm_probe(mesh: DiscMesh, params: FracParams, field, q: float,
                    n_levels: int = 60) -> float:
    """Empirical weak quasi-norm sup_t t * mu(|field| > t)^{1/q}.

    mu is the rho^s-weighted area measure on the mesh; t runs over a
    dyadic grid down from the field maximum.

    Raises
    ------
    ValueError
        q <= 1.
    """
    if q <= 1.0:
        raise ValueError("weak_norm_probe needs q > 1")
    values = np.abs(np.asarray(
        field.values if isinstance(field, DiscField) else field, float))
    t_max = float(values.max(initial=0.0))
    if t_max == 0.0:
        return 0.0
    wgt = mesh.weights * mesh.rho ** params.s
    best = 0.0
    for j in range(1, n_levels + 1):
        t = t_max * 2.0 ** (-j)
        mu = float(np.sum(wgt[values > t]))
        best = max(best, t * mu ** (1.0 / q))
    return best
