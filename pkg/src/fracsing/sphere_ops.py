"""Spherical kernels K and B_beta, their integrals, and Galerkin operator pairs.

Both kernels are integrals of the form int_0^1 tau^a (1+tau^2-2*tau*u)^{-q} dtau
with q = N/2 + s, singular as the inner product u -> 1.  They are evaluated in
terms of the chord kappa = sqrt(2-2u): away from the singularity a Gauss-Jacobi
rule absorbs the tau^a weight; near it the upper half is substituted to
x = (1-tau)/kappa, which normalizes the (x^2 + O(1))^{-q} ridge to unit scale
and integrates with geometrically doubling panels.  Assemblies read the
kernels from cubic-spline tables in log kappa of kappa-scaled values.

Operator pairs use piecewise-linear latitude hats, clamped to constants over
the polar caps so the basis sums to one everywhere.  On the circle (N=2) the
energy form is reduced by stationarity of the kernel to a single convolution
variable and integrated by parts twice, which trades the hypersingular kernel
for its second antiderivative against exact piecewise-constant slope
correlations; on S^2 (N=3) the azimuth is pre-integrated and the difference
form is kept, so positive semidefiniteness and zero row sums of the A form
hold structurally, not just to quadrature accuracy.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import roots_jacobi

from .params import FracParams, gamma, normalization_constant
from .quadrature import _leggauss, gauss_jacobi01, panel_rule, power_graded_rule

_GJ_NODES = 32


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere S^{d-1} in R^d."""
    return 2.0 * math.pi ** (0.5 * d) / gamma(0.5 * d)


def b_const(params: FracParams) -> float:
    """b_{N,s} = 2 a_{N,s} int_0^infty (1+x^2)^{-N/2-s} dx.

    The tail integral is computed by quadrature: Gauss-Legendre on [0, 1]
    plus a Gauss-Jacobi rule for the inverted tail, where x -> 1/x exposes
    the weight x^{2q-2}.  Tests cross-check the Beta-function closed form.
    """
    q = params.q
    t, w = _leggauss(32)
    x = 0.5 * (t + 1.0)
    head = 0.5 * float(w @ (1.0 + x * x) ** (-q))
    tj, wj = gauss_jacobi01(32, 2.0 * q - 2.0)
    tail = float(wj @ (1.0 + tj * tj) ** (-q))
    return 2.0 * normalization_constant(params) * (head + tail)


def _kernel_kappa_eval(params: FracParams, kap, terms, factor):
    """int_0^1 F(tau) (1+tau^2-2*tau*u)^{-q} dtau against the chord kappa.

    F is given twice: as signed power terms (a, sign) meaning
    F = sum sign * tau^a, used with Gauss-Jacobi rules away from the
    singularity, and as the callable factor(kx) = F(1 - kx), a
    cancellation-free form of the same combination used on the upper half
    once tau = 1 - kappa*x (kx = kappa*x may sit far below machine epsilon,
    so factor must not form 1 - kx itself).  The substitution normalizes the
    (x^2+O(1))^{-q} ridge; panels double geometrically out to x = 0.5/kappa.
    """
    kap = np.atleast_1d(np.asarray(kap, dtype=float))
    q = params.q
    out = np.zeros(kap.size)
    u = 1.0 - 0.5 * kap * kap
    far = kap >= 1.0
    if np.any(far):
        uf = u[far][:, None]
        for a, sign in terms:
            t, w = gauss_jacobi01(_GJ_NODES, a)
            out[far] += sign * (((1.0 + t * t - 2.0 * t * uf) ** (-q)) @ w)
    near = ~far
    if np.any(near):
        kn = kap[near]
        un = u[near][:, None]
        # lower half [0, 1/2]: the quadratic stays bounded away from zero
        lower = np.zeros(kn.size)
        for a, sign in terms:
            t, w = gauss_jacobi01(_GJ_NODES, a)
            tau = 0.5 * t
            lower += sign * 0.5 ** (a + 1.0) * (
                ((1.0 + tau * tau - 2.0 * tau * un) ** (-q)) @ w)
        # upper half, x = (1-tau)/kappa on [0, 0.5/kappa]
        xmax = 0.5 / kn
        npan = np.where(xmax <= 1.0, 0,
                        np.ceil(np.log2(np.maximum(xmax, 1.0)))).astype(int)
        upper = np.zeros(kn.size)
        glx, glw = _leggauss(16)
        for jp in np.unique(npan):
            sel = npan == jp
            ks = kn[sel][:, None]
            if jp == 0:
                lead = 0.0
                val = 0.0
            else:
                edges = np.concatenate([[0.0], 2.0 ** np.arange(jp)])
                xc, wc = panel_rule(edges, 16)
                val = (factor(ks * xc)
                       * (1.0 + xc * xc - ks * xc) ** (-q)) @ wc
                lead = edges[-1]
            mid = 0.5 * (lead + xmax[sel])[:, None]
            half = 0.5 * (xmax[sel] - lead)[:, None]
            xf = mid + half * glx
            val = val + (factor(ks * xf)
                         * (1.0 + xf * xf - ks * xf) ** (-q) * (half * glw)).sum(-1)
            upper[sel] = val
        out[near] = lower + kn ** (1.0 - 2.0 * q) * upper
    return out


def _radial_kernel_kappa(params: FracParams, kap):
    n, s = params.n, params.s

    def factor(kx):
        lt = np.log1p(-kx)
        return np.exp((n - 1.0) * lt) + np.exp((2.0 * s - 1.0) * lt)

    return _kernel_kappa_eval(params, kap,
                              ((n - 1.0, 1.0), (2.0 * s - 1.0, 1.0)), factor)


def _b_kernel_kappa(params: FracParams, beta: float, kap):
    n, s = params.n, params.s
    cs = beta + 2.0 * s - n

    def factor(kx):
        # tau^{N-1} (tau^{-beta} - 1)(1 - tau^{c_s}) at tau = 1 - kx; the
        # log1p/expm1 forms keep the quadratic vanishing at kx = 0
        # cancellation-free
        lt = np.log1p(-kx)
        return -np.exp((n - 1.0) * lt) * np.expm1(-beta * lt) * np.expm1(cs * lt)

    terms = ((n - 1.0 - beta, 1.0), (2.0 * s - 1.0, -1.0),
             (n - 1.0, -1.0), (beta + 2.0 * s - 1.0, 1.0))
    return _kernel_kappa_eval(params, kap, terms, factor)


def _check_inner_product(u):
    u = np.asarray(u, dtype=float)
    if np.any(u >= 1.0):
        raise ValueError("kernel singular at u >= 1")
    if np.any(u < -1.0):
        raise ValueError("inner product u must lie in [-1, 1)")
    return u


def radial_kernel_K(params: FracParams, u):
    """K(u) = int_0^1 (tau^{N-1}+tau^{2s-1})(1+tau^2-2*tau*u)^{-N/2-s} dtau."""
    uin = _check_inner_product(u)
    kap = np.sqrt(np.maximum(2.0 - 2.0 * uin, 0.0))
    val = _radial_kernel_kappa(params, kap).reshape(uin.shape)
    return float(val) if np.isscalar(u) or uin.ndim == 0 else val


def _check_beta(params: FracParams, beta: float) -> float:
    beta = float(beta)
    if beta >= params.n:
        raise ValueError(f"beta = {beta} >= N = {params.n}: divergent integral")
    if beta <= -2.0 * params.s:
        raise ValueError(f"beta = {beta} <= -2s: divergent integral")
    return beta


def b_kernel(params: FracParams, beta: float, u):
    """B_{s,beta}(u) = int_0^1 (tau^{-beta}-1)(tau^{N-1}-tau^{N-1+c_s}) (...)^{-q} dtau.

    c_s = beta + 2s - N; the kernel vanishes identically at beta = N-2s and
    its sign equals sign(beta - (N-2s)).
    """
    beta = _check_beta(params, beta)
    uin = _check_inner_product(u)
    kap = np.sqrt(np.maximum(2.0 - 2.0 * uin, 0.0))
    val = _b_kernel_kappa(params, beta, kap).reshape(uin.shape)
    return float(val) if np.isscalar(u) or uin.ndim == 0 else val


class KernelTable:
    """Cubic spline in log kappa of a kappa-scaled kernel.

    The kernel times kappa**scale_power is bounded and slowly varying on the
    table range, so the spline holds ~1e-10 relative accuracy; below
    kappa_min the scaled value is frozen at its endpoint (the relative error
    of that asymptote is O(kappa_min)).
    """

    def __init__(self, fn, scale_power: float, kappa_min: float = 1e-9,
                 kappa_max: float = 2.0, n_points: int = 2000):
        self.scale_power = float(scale_power)
        self.kappa_min = float(kappa_min)
        self.kappa_max = float(kappa_max)
        lk = np.linspace(math.log(kappa_min), math.log(kappa_max), n_points)
        self._spline = CubicSpline(lk, fn(np.exp(lk)) * np.exp(lk) ** scale_power)

    def __call__(self, kap):
        kap = np.asarray(kap, dtype=float)
        if np.any(kap <= 0.0):
            raise ValueError("kappa must be positive")
        if np.any(kap > self.kappa_max * (1.0 + 1e-9)):
            raise ValueError("kappa beyond table domain")
        lk = np.log(np.clip(kap, self.kappa_min, self.kappa_max))
        return self._spline(lk) * kap ** (-self.scale_power)


_TABLES: dict = {}


def radial_table(params: FracParams) -> KernelTable:
    """Cached spline table of the K kernel, keyed by (N, s)."""
    key = ("K", params.n, params.s)
    if key not in _TABLES:
        _TABLES[key] = KernelTable(lambda kk: _radial_kernel_kappa(params, kk),
                                   params.n + 2.0 * params.s - 1.0)
    return _TABLES[key]


def b_table(params: FracParams, beta: float) -> KernelTable:
    """Cached spline table of B_{s,beta}, keyed by (N, s, beta)."""
    beta = _check_beta(params, beta)
    key = ("B", params.n, params.s, beta)
    if key not in _TABLES:
        _TABLES[key] = KernelTable(lambda kk: _b_kernel_kappa(params, beta, kk),
                                   max(0.0, params.n + 2.0 * params.s - 3.0))
    return _TABLES[key]


def zonal_reduce(params: FracParams, f, n_nodes: int = 64) -> float:
    """int_{S^{N-1}} f(<e_N, eta>) dS by Gauss-Jacobi matched to the zonal weight.

    Reduces to |S^{N-2}| int_{-1}^{1} f(u) (1-u^2)^{(N-3)/2} du.
    """
    alpha = 0.5 * (params.n - 3.0)
    x, w = roots_jacobi(n_nodes, alpha, alpha)
    vals = np.asarray(f(x), dtype=float)
    if not np.all(np.isfinite(vals)):
        bad = x[~np.isfinite(vals)][0]
        raise ValueError(f"non-finite integrand at quadrature node u = {bad}")
    return sphere_area(params.n - 1) * float(w @ vals)


def _zonal_singular_kappa(params: FracParams, g, n_graded: int = 16,
                          n_smooth: int = 8, n_gl: int = 14) -> float:
    # same sphere integral in the polar angle with kappa = 2 sin(theta/2)
    # passed to g, for integrands with an integrable divergence at theta = 0
    m = max(6.0, math.ceil(2.0 / (1.0 - params.s)))
    xs, ws = power_graded_rule(0.0, 0.5 * math.pi, m=m, n_panels=n_graded,
                               n_gl=n_gl)
    xr, wr = panel_rule(np.linspace(0.5 * math.pi, math.pi, n_smooth + 1), n_gl)
    theta = np.concatenate([xs, xr])
    w = np.concatenate([ws, wr])
    vals = np.asarray(g(2.0 * np.sin(0.5 * theta)), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite integrand in singular zonal reduction")
    return sphere_area(params.n - 1) * float(
        w @ (vals * np.sin(theta) ** (params.n - 2)))


def c35(params: FracParams, beta: float) -> float:
    """a_{N,s} * int_{S^{N-1}} B_{s,beta}(<e_N, eta>) dS, for beta in (N-2s, N).

    The a_{N,s} prefactor is included so that the constant separable profile
    is exactly c35**(1/(p-1)).
    """
    lo = params.n - 2.0 * params.s
    if not lo < beta < params.n:
        raise ValueError(f"beta must lie in (N-2s, N) = ({lo}, {params.n}); "
                         f"got {beta}")
    return normalization_constant(params) * _zonal_singular_kappa(
        params, lambda kk: _b_kernel_kappa(params, beta, kk))


# ----------------------------------------------------------------------
# latitude grids and fields


class LatGrid:
    """Symmetric latitude grid on S^{N-1} with hat basis clamped at the poles.

    Positive nodes follow (pi/2)*(k/(m+1))**grading, packing resolution
    toward the equator where the profiles of interest behave like
    (sin phi)^s; the node set is mirrored through zero.  The end hats
    continue as constants over the polar caps, so the basis is an exact
    partition of unity on the whole sphere.
    """

    def __init__(self, n: int, nodes, grading: float):
        self.n = int(n)
        self.nodes = np.asarray(nodes, dtype=float)
        self.grading = float(grading)
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("latitude nodes must be strictly increasing")
        self._weights = None
        self._mass = None
        self._segments = None

    @classmethod
    def make(cls, n: int, m: int, grading: float = 2.0) -> "LatGrid":
        if n not in (2, 3):
            raise ValueError("ambient dimension must be 2 or 3")
        if m < 3:
            raise ValueError(
                f"grid too coarse for the grading rule: need at least 3 "
                f"positive latitude nodes, got {m}")
        pos = 0.5 * math.pi * (np.arange(1, m + 1) / (m + 1.0)) ** grading
        nodes = np.concatenate([-pos[::-1], [0.0], pos])
        return cls(n, nodes, grading)

    @property
    def m(self) -> int:
        return (self.nodes.size - 1) // 2

    @property
    def hemisphere_mask(self):
        return self.nodes > 0.0

    def refine(self) -> "LatGrid":
        """Grid with twice the positive-node count, same grading law."""
        return LatGrid.make(self.n, 2 * self.m, self.grading)

    def cell_edges(self):
        half = 0.5 * math.pi
        return np.concatenate([[-half], self.nodes, [half]])

    def basis_matrix(self, phis):
        """Hat values at given latitudes, shape (n_nodes, len(phis)).

        The first and last rows extend as constants over the polar caps.
        """
        phis = np.asarray(phis, dtype=float)
        nn = self.nodes.size
        out = np.empty((nn, phis.size))
        eye = np.eye(nn)
        for i in range(nn):
            out[i] = np.interp(phis, self.nodes, eye[i],
                               left=eye[i, 0], right=eye[i, -1])
        return out

    def _quad_nodes(self, n_gl: int = 12):
        return panel_rule(self.cell_edges(), n_gl)

    def weights(self):
        """Lumped masses int_{S^{N-1}} h_i dS; they sum to the sphere area."""
        if self._weights is None:
            phi, w = self._quad_nodes()
            zonal = w * np.cos(phi) ** (self.n - 2)
            self._weights = sphere_area(self.n - 1) * (self.basis_matrix(phi) @ zonal)
        return self._weights

    def mass_matrix(self):
        """Exact Gram matrix of the clamped hat basis on S^{N-1}."""
        if self._mass is None:
            phi, w = self._quad_nodes()
            zonal = w * np.cos(phi) ** (self.n - 2)
            h = self.basis_matrix(phi)
            self._mass = sphere_area(self.n - 1) * ((h * zonal) @ h.T)
        return self._mass


@dataclass
class SphericalField:
    """Axisymmetric nodal field on a LatGrid; hemisphere fields vanish for phi <= 0."""

    grid: LatGrid
    values: np.ndarray
    hemisphere: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.nodes.shape:
            raise ValueError("field values must match the grid node count")
        if self.hemisphere and np.any(self.values[~self.grid.hemisphere_mask] != 0.0):
            raise ValueError("hemisphere field must vanish at and below the equator")

    def hemisphere_values(self):
        return self.values[self.grid.hemisphere_mask]

    @classmethod
    def from_hemisphere(cls, grid: LatGrid, hemi_values) -> "SphericalField":
        values = np.zeros(grid.nodes.size)
        values[grid.hemisphere_mask] = np.asarray(hemi_values, dtype=float)
        return cls(grid, values, hemisphere=True)


# ----------------------------------------------------------------------
# exact circle segment algebra (N = 2)


def _circle_profile_segments(grid: LatGrid, nodal_values):
    """Linear pieces (start, end, value_at_start, slope) of the circle profile.

    The circle is parametrized by alpha in [-pi/2, 3pi/2); latitudes phi map
    to alpha = phi on the right half and alpha = pi - phi on the left half,
    and the polar caps carry the clamped end values.  Zero pieces are
    dropped.
    """
    phi = grid.nodes
    v = np.asarray(nodal_values, dtype=float)
    segs = []

    def add(a, b, va, q):
        if b > a and (va != 0.0 or q != 0.0):
            segs.append((a, b, va, q))

    for k in range(phi.size - 1):
        h = phi[k + 1] - phi[k]
        if v[k] != 0.0 or v[k + 1] != 0.0:
            add(phi[k], phi[k + 1], v[k], (v[k + 1] - v[k]) / h)
            add(math.pi - phi[k + 1], math.pi - phi[k], v[k + 1],
                (v[k] - v[k + 1]) / h)
    add(phi[-1], math.pi - phi[-1], v[-1], 0.0)
    add(math.pi - phi[0], 1.5 * math.pi, v[0], 0.0)
    add(-0.5 * math.pi, phi[0], v[0], 0.0)
    return segs


def _segment_arrays(seg_lists, width: int):
    """Pad per-function segment lists into (n, width) arrays (a, b, v, q)."""
    n = len(seg_lists)
    a = np.zeros((n, width))
    b = np.zeros((n, width))
    v = np.zeros((n, width))
    q = np.zeros((n, width))
    for i, segs in enumerate(seg_lists):
        if len(segs) > width:
            raise ValueError("segment list exceeds padding width")
        for k, (sa, sb, sv, sq) in enumerate(segs):
            a[i, k], b[i, k], v[i, k], q[i, k] = sa, sb, sv, sq
    return a, b, v, q


def _pair_tensors(seg1, seg2, deltas, want_slopes: bool, want_values: bool):
    """Exact shift correlations of piecewise-linear circle profiles.

    Returns (D, C) with D[i,j,t] = int f_i'(alpha) f_j'(alpha - deltas[t])
    and C[i,j,t] the same for the functions themselves; either may be None.
    Segment endpoints live in [-pi/2, 3pi/2) and shifts by {0, -2pi} cover
    the wrap-around for deltas in [0, pi].
    """
    a1s, b1s, v1s, q1s = seg1
    a2s, b2s, v2s, q2s = seg2
    deltas = np.asarray(deltas, dtype=float)
    n1, w1 = a1s.shape
    n2, w2 = a2s.shape
    nd = deltas.size
    dmat = None
    cmat = None
    if want_slopes:
        dmat = np.zeros((n1, n2, nd))
    if want_values:
        cmat = np.zeros((n1, n2, nd))
    for k1 in range(w1):
        a1 = a1s[:, k1][:, None, None]
        b1 = b1s[:, k1][:, None, None]
        q1 = q1s[:, k1][:, None, None]
        v1 = v1s[:, k1][:, None, None]
        for k2 in range(w2):
            a2 = a2s[:, k2][None, :, None]
            q2 = q2s[:, k2][None, :, None]
            for shift in (0.0, -2.0 * math.pi):
                off = (deltas + shift)[None, None, :]
                lo = np.maximum(a1, a2 + off)
                hi = np.minimum(b1, b2s[:, k2][None, :, None] + off)
                hi = np.maximum(hi, lo)
                width = hi - lo
                if want_slopes:
                    dmat += (q1 * q2) * width
                if want_values:
                    # expanded about the interval midpoint: the linear
                    # factors stay O(1) there, unlike global intercepts
                    mid = 0.5 * (lo + hi)
                    fa = q1 * (mid - a1) + v1
                    fb = q2 * (mid - off - a2) + v2s[:, k2][None, :, None]
                    cmat += (q1 * q2) * width ** 3 / 12.0 + (fa * fb) * width
    return dmat, cmat


def _basis_segment_arrays(grid: LatGrid):
    nn = grid.nodes.size
    eye = np.eye(nn)
    return _segment_arrays(
        [_circle_profile_segments(grid, eye[i]) for i in range(nn)], 4)


def _psi_values(params: FracParams, ktable: KernelTable, deltas):
    """Psi(d) = int_d^pi (t-d) * K(cos t) dt, the second antiderivative of the
    circle kernel with Psi(pi) = Psi'(pi) = 0.

    Substituting t = d*e^tau makes the integrand smooth on panels of unit
    width in tau, uniformly over d down to the smallest graded node.
    """
    out = np.empty(deltas.size)
    for i, d in enumerate(deltas):
        span = math.log(math.pi / d)
        n_pan = max(16, int(math.ceil(span)))
        tq, wq = panel_rule(np.linspace(0.0, span, n_pan + 1), 12)
        et = np.exp(tq)
        kvals = ktable(2.0 * np.sin(0.5 * d * et))
        out[i] = d * d * float(wq @ (et * (et - 1.0) * kvals))
    return out


# ----------------------------------------------------------------------
# operator pairs


@dataclass(frozen=True)
class OperatorPair:
    """Hemisphere Galerkin matrices of the energy and B-kernel forms.

    a_form, l_form, mass and lumped_mass are restricted to nodes with
    phi > 0 (zero-extended basis); the full_* fields carry the augmented
    full-sphere basis, whose A form annihilates constants.
    """

    params: FracParams
    grid: LatGrid
    beta: float
    a_form: np.ndarray
    l_form: np.ndarray
    mass: np.ndarray
    lumped_mass: np.ndarray
    full_a_form: np.ndarray
    full_l_form: np.ndarray
    full_mass: np.ndarray
    full_lumped_mass: np.ndarray

    def export_csv(self, directory):
        """Write a_form.csv, l_form.csv, mass.csv into directory."""
        import os
        paths = {}
        for name, mat in (("a_form", self.a_form), ("l_form", self.l_form),
                          ("mass", self.mass)):
            path = os.path.join(directory, f"{name}.csv")
            np.savetxt(path, mat, fmt="%.17g", delimiter=",")
            paths[name] = path
        return paths


def _finish_pair(params, grid, beta, a_full, l_full):
    a_full = 0.5 * (a_full + a_full.T)
    np.fill_diagonal(a_full, np.diag(a_full) - a_full.sum(axis=1))
    l_full = 0.5 * (l_full + l_full.T)
    mass = grid.mass_matrix()
    lumped = grid.weights()
    idx = np.where(grid.hemisphere_mask)[0]
    sub = np.ix_(idx, idx)
    return OperatorPair(
        params=params, grid=grid, beta=beta,
        a_form=a_full[sub], l_form=l_full[sub], mass=mass[sub],
        lumped_mass=lumped[idx], full_a_form=a_full, full_l_form=l_full,
        full_mass=mass, full_lumped_mass=lumped)


class CircleAssembler:
    """Caches the beta-independent parts of the N=2 operator pair.

    The A form is assembled once per grid; pair(beta) only re-weights the
    cached shift-correlation tensor with the B kernel, which makes beta
    sweeps cheap.
    """

    def __init__(self, params: FracParams, grid: LatGrid,
                 n_panels: int = None, n_gl: int = 12):
        if params.n != 2 or grid.n != 2:
            raise ValueError("CircleAssembler handles the circle (n=2) only")
        if grid.m < 3:
            raise ValueError(
                "grid too coarse for the grading rule: need at least 3 "
                f"positive latitude nodes, got {grid.m}")
        self.params = params
        self.grid = grid
        if n_panels is None:
            # tie the shift-variable rule to the grid so that refining the
            # grid also refines the quadrature floor
            n_panels = max(24, grid.m + 8)
        m = max(6.0, math.ceil(2.0 / (1.0 - params.s)) + 2.0)
        self.deltas, self.dweights = power_graded_rule(
            0.0, math.pi, m=m, n_panels=n_panels, n_gl=n_gl)
        segs = _basis_segment_arrays(grid)
        dmat, cmat = _pair_tensors(segs, segs, self.deltas, True, True)
        ds = dmat + dmat.transpose(1, 0, 2)
        self._xs = cmat + cmat.transpose(1, 0, 2)
        psi = _psi_values(params, radial_table(params), self.deltas)
        a = normalization_constant(params)
        self._a_full = a * np.tensordot(ds, self.dweights * psi, axes=([2], [0]))

    def pair(self, beta: float) -> OperatorPair:
        beta = _check_beta(self.params, beta)
        bvals = b_table(self.params, beta)(2.0 * np.sin(0.5 * self.deltas))
        a = normalization_constant(self.params)
        l_full = a * np.tensordot(self._xs, self.dweights * bvals,
                                  axes=([2], [0]))
        return _finish_pair(self.params, self.grid, beta,
                            self._a_full.copy(), l_full)


class SphereAssembler:
    """Caches the beta-independent parts of the N=3 operator pair.

    Both latitude integrals run cell by cell so panels line up with the hat
    breakpoints; within the outer node's own cell the inner rule is
    power-graded toward the outer node, where the azimuth-integrated kernel
    behaves like |phi - phi'|^{1-N-2s}.  The azimuth integral itself uses
    panels doubling away from a plateau below the pair separation.
    """

    def __init__(self, params: FracParams, grid: LatGrid,
                 n_outer_gl: int = 6, n_plain_gl: int = 6,
                 graded_panels: int = 4, graded_gl: int = 6,
                 azimuth_gl: int = 10):
        if params.n != 3 or grid.n != 3:
            raise ValueError("SphereAssembler handles S^2 (n=3) only")
        if grid.m < 3:
            raise ValueError(
                "grid too coarse for the grading rule: need at least 3 "
                f"positive latitude nodes, got {grid.m}")
        self.params = params
        self.grid = grid
        self.azimuth_gl = azimuth_gl
        edges = grid.cell_edges()
        n_cells = edges.size - 1
        oph, ow = panel_rule(edges, n_outer_gl)
        cell_of_outer = np.repeat(np.arange(n_cells), n_outer_gl)
        sph, sw = panel_rule(edges, n_plain_gl)
        cell_of_shared = np.repeat(np.arange(n_cells), n_plain_gl)
        m_in = max(4.0, math.ceil(2.0 / (1.0 - params.s)))
        # pairs: every outer node against all plain cells except its own,
        # plus a rule graded toward the outer node inside its own cell
        keep = cell_of_shared[None, :] != cell_of_outer[:, None]
        n_q = oph.size
        shared_idx = np.broadcast_to(np.arange(sph.size), (n_q, sph.size))[keep]
        outer_idx = np.broadcast_to(np.arange(n_q)[:, None],
                                    (n_q, sph.size))[keep]
        iph_parts = [sph[shared_idx]]
        iw_parts = [sw[shared_idx]]
        idx_parts = [outer_idx]
        for iq, p in enumerate(oph):
            lo, hi = edges[cell_of_outer[iq]], edges[cell_of_outer[iq] + 1]
            for a, b, flip in ((lo, p, True), (p, hi, False)):
                xs, ws = power_graded_rule(a, b, m=m_in,
                                           n_panels=graded_panels,
                                           n_gl=graded_gl, from_right=flip)
                iph_parts.append(xs)
                iw_parts.append(ws)
                idx_parts.append(np.full(xs.size, iq))
        iph = np.concatenate(iph_parts)
        iw = np.concatenate(iw_parts)
        self._iph = iph
        self._outer_of_pair = np.concatenate(idx_parts)
        self._oph = oph
        self._pair_w = ow[self._outer_of_pair] * iw \
            * np.cos(oph[self._outer_of_pair]) * np.cos(iph)
        self._delta = np.abs(oph[self._outer_of_pair] - iph)
        self._cc = np.cos(oph[self._outer_of_pair]) * np.cos(iph)
        self._h_out = grid.basis_matrix(oph)
        a = normalization_constant(params)
        self._a_full = (0.5 * a * 2.0 * math.pi) * self._accumulate(
            radial_table(params), difference=True)

    def _accumulate(self, table: KernelTable, difference: bool):
        """Sum w * kernel_azimuth * v v^T over latitude pairs, chunked.

        v is the hat difference h(phi) - h(phi') for the energy form or the
        product structure h(phi) h(phi')^T for the B form.
        """
        nn = self.grid.nodes.size
        out = np.zeros((nn, nn))
        k0sq = 4.0 * np.sin(0.5 * self._delta) ** 2
        decades = np.floor(np.log10(np.maximum(self._delta, 1e-15))).astype(int)
        for dec in np.unique(decades):
            idx = np.where(decades == dec)[0]
            e0 = min(10.0 ** dec / 8.0, 0.5 * math.pi)
            psi_edges = [0.0, e0]
            while psi_edges[-1] < math.pi:
                psi_edges.append(min(2.0 * psi_edges[-1], math.pi))
            psi, wpsi = panel_rule(np.array(psi_edges), self.azimuth_gl)
            sin2 = np.sin(0.5 * psi) ** 2
            for lo in range(0, idx.size, 8192):
                rows = idx[lo:lo + 8192]
                kap = np.sqrt(k0sq[rows][:, None]
                              + 4.0 * self._cc[rows][:, None] * sin2[None, :])
                pw = 2.0 * (table(kap) @ wpsi) * self._pair_w[rows]
                h_in = self.grid.basis_matrix(self._iph[rows])
                h_out = self._h_out[:, self._outer_of_pair[rows]]
                if difference:
                    v = h_out - h_in
                    out += (v * pw) @ v.T
                else:
                    out += (h_out * pw) @ h_in.T
        return out

    def pair(self, beta: float) -> OperatorPair:
        beta = _check_beta(self.params, beta)
        a = normalization_constant(self.params)
        l_full = (a * 2.0 * math.pi) * self._accumulate(
            b_table(self.params, beta), difference=False)
        return _finish_pair(self.params, self.grid, beta,
                            self._a_full.copy(), l_full)


def assemble_operator_pair(grid: LatGrid, params: FracParams,
                           beta: float) -> OperatorPair:
    """Assemble the (A, L, mass) operator pair on the given latitude grid.

    For repeated beta on one grid, construct a CircleAssembler or
    SphereAssembler directly and call pair(); this convenience wrapper
    rebuilds the beta-independent parts each time.
    """
    if params.n == 2:
        return CircleAssembler(params, grid).pair(beta)
    return SphereAssembler(params, grid).pair(beta)


def gagliardo_norm_sq(params: FracParams, grid: LatGrid, values) -> float:
    """Squared W^{s,2} norm of a nodal circle field by direct double quadrature.

    Independent route from the assembled A form: the Gagliardo seminorm is
    reduced to the shift variable and integrated against the exact
    autocorrelation of the piecewise-linear profile,

        [f]^2 = 2 int_0^pi (2 sin(d/2))^{-1-2s} int (f(a) - f(a-d))^2 da dd,

    plus the L^2 term.  Circle only.
    """
    if params.n != 2 or grid.n != 2:
        raise ValueError("direct Gagliardo route is implemented on the circle (n=2)")
    segs = _circle_profile_segments(grid, values)
    if not segs:
        return 0.0
    arrays = _segment_arrays([[s] for s in segs], 1)
    s = params.s
    # below the smallest gap between profile breakpoints the autocorrelation
    # deficit is exactly quadratic-plus-cubic, F = A d^2 + B d^3; forming
    # 2*(gram - cross) there would cancel catastrophically against the
    # d^{-1-2s} weight, so that piece is integrated in closed form
    breaks = np.unique(np.concatenate([arrays[0].ravel(), arrays[1].ravel()]))
    cut = float(np.min(np.diff(breaks)[np.diff(breaks) > 1e-13]))
    m = max(6.0, math.ceil(2.0 / (1.0 - s)))
    deltas, dw = power_graded_rule(cut, math.pi, m=m, n_panels=20, n_gl=12)
    dgrid = np.concatenate([[0.0, cut], deltas])
    dmat, cmat = _pair_tensors(arrays, arrays, dgrid, True, True)
    slopes_sq = float(dmat.sum(axis=(0, 1))[0])
    cross = cmat.sum(axis=(0, 1))
    gram = cross[0]
    f2 = 2.0 * (gram - cross[2:])
    semi = 2.0 * float(dw @ (f2 * (2.0 * np.sin(0.5 * deltas)) ** (-1.0 - 2.0 * s)))
    f_cut = 2.0 * (gram - cross[1])
    b_cub = (f_cut - slopes_sq * cut * cut) / cut ** 3
    # (2 sin(d/2))^{-1-2s} = d^{-1-2s} (1 + (1+2s)/24 d^2 + O(d^4))
    head = slopes_sq * cut ** (2.0 - 2.0 * s) / (2.0 - 2.0 * s) \
        + b_cub * cut ** (3.0 - 2.0 * s) / (3.0 - 2.0 * s) \
        + slopes_sq * (1.0 + 2.0 * s) / 24.0 * cut ** (4.0 - 2.0 * s) / (4.0 - 2.0 * s)
    return gram + semi + 2.0 * head
