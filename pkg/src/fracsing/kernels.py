"""Green, Martin, and Poisson kernels of the fractional operator on the unit ball.

The Green kernel uses the classical explicit formula

    G(x, y) = kappa_{N,s} |x-y|^{2s-N} * int_0^{r0} t^{s-1} (1+t)^{-N/2} dt,
    r0 = (1-|x|^2)(1-|y|^2) / |x-y|^2,

with the r0-integral evaluated by Gauss-Jacobi rules that absorb the t^{s-1}
endpoint weight.  For r0 > 1 the complement identity (t -> 1/t maps the tail
onto the same form with exponent N/2 - s) keeps a single fixed pair of rules
uniformly accurate over all r0.  The Martin kernel is exposed both as the
closed form (1-|x|^2)^s / |x-z|^N and as the defining Green-ratio limit with
Richardson extrapolation; they are cross-validated in the tests.
"""

import math
from dataclasses import dataclass

import numpy as np

from .params import FracParams, beta_function, gamma
from .quadrature import gauss_jacobi01, power_graded_rule

_XI_NODES = 48


class BallGeometry:
    """Unit-ball helper: boundary distance and point classification."""

    def __init__(self, n: int):
        if n < 2:
            raise ValueError("ball dimension must be >= 2")
        self.n = int(n)

    def rho(self, x):
        """Distance 1 - |x| to the boundary (negative outside)."""
        x = np.asarray(x, dtype=float)
        return 1.0 - np.linalg.norm(x, axis=-1)

    def require_interior(self, x, name: str = "x"):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[-1] != self.n:
            raise ValueError(f"{name} must have {self.n} coordinates")
        if np.any(np.linalg.norm(x, axis=-1) >= 1.0):
            raise ValueError(f"{name} must be interior to the unit ball")
        return x

    def require_boundary(self, z, name: str = "z", tol: float = 1e-12):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if np.any(np.abs(np.linalg.norm(z, axis=-1) - 1.0) > tol):
            raise ValueError(f"{name} must lie on the unit sphere")
        return z

    def require_exterior(self, y, name: str = "y"):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        r = np.linalg.norm(y, axis=-1)
        if np.any(np.abs(r - 1.0) < 1e-14):
            raise ValueError(f"{name} on the boundary: kernel degenerates")
        if np.any(r <= 1.0):
            raise ValueError(f"{name} must be exterior to the unit ball")
        return y


@dataclass(frozen=True)
class KernelSample:
    """One kernel evaluation, ready for CSV export."""

    x: tuple
    y: tuple
    value: float


def kappa_constant(params: FracParams) -> float:
    """kappa_{N,s} = Gamma(N/2) / (2^{2s} pi^{N/2} Gamma(s)^2)."""
    n, s = params.n, params.s
    return gamma(0.5 * n) / (2.0 ** (2.0 * s) * math.pi ** (0.5 * n) * gamma(s) ** 2)


def xi_integral(params: FracParams, r0):
    """int_0^{r0} t^{s-1} (1+t)^{-N/2} dt, vectorized over r0 >= 0."""
    n, s = params.n, params.s
    r0 = np.asarray(r0, dtype=float)
    if np.any(r0 < 0):
        raise ValueError("r0 must be nonnegative")
    t_lo, w_lo = gauss_jacobi01(_XI_NODES, s - 1.0)
    t_hi, w_hi = gauss_jacobi01(_XI_NODES, 0.5 * n - s - 1.0)
    out = np.empty_like(r0, dtype=float)
    lo = r0 <= 1.0
    if np.any(lo):
        r = r0[lo][..., None]
        out[lo] = (r[..., 0] ** s) * np.sum(
            w_lo * (1.0 + r * t_lo) ** (-0.5 * n), axis=-1)
    if np.any(~lo):
        r = r0[~lo][..., None]
        tail = (r[..., 0] ** (s - 0.5 * n)) * np.sum(
            w_hi * (1.0 + t_hi / r) ** (-0.5 * n), axis=-1)
        out[~lo] = beta_function(s, 0.5 * n - s) - tail
    return out


def green_ball(params: FracParams, x, y):
    """Green kernel of the unit ball, vectorized over trailing point axes.

    Parameters
    ----------
    params : FracParams
    x, y : array_like, shape (..., n)
        Interior points; x = y raises (the kernel is singular there).

    Returns
    -------
    ndarray or float
        Kernel values, same leading shape as the broadcast inputs.
    """
    geom = BallGeometry(params.n)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    scalar = x.ndim == 1 and y.ndim == 1
    x, y = np.broadcast_arrays(np.atleast_2d(x), np.atleast_2d(y))
    geom.require_interior(x.reshape(-1, params.n))
    geom.require_interior(y.reshape(-1, params.n), "y")
    d2 = np.sum((x - y) ** 2, axis=-1)
    if np.any(d2 == 0.0):
        raise ValueError("green_ball singular at x = y")
    nx2 = 1.0 - np.sum(x * x, axis=-1)
    ny2 = 1.0 - np.sum(y * y, axis=-1)
    r0 = nx2 * ny2 / d2
    val = kappa_constant(params) * d2 ** (0.5 * (2.0 * params.s - params.n)) \
        * xi_integral(params, r0)
    return float(val[0]) if scalar else val


def martin_ball(params: FracParams, x, z):
    """Martin kernel of the unit ball, closed form (1-|x|^2)^s / |x-z|^N.

    Normalized so martin_ball(0, z) = 1.  The defining Green-ratio limit is
    implemented in :func:`martin_ball_limit` and agrees to ~1e-6.
    """
    geom = BallGeometry(params.n)
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    scalar = x.ndim == 1 and z.ndim == 1
    x, z = np.broadcast_arrays(np.atleast_2d(x), np.atleast_2d(z))
    geom.require_interior(x.reshape(-1, params.n))
    geom.require_boundary(z.reshape(-1, params.n))
    d2 = np.sum((x - z) ** 2, axis=-1)
    val = (1.0 - np.sum(x * x, axis=-1)) ** params.s * d2 ** (-0.5 * params.n)
    return float(val[0]) if scalar else val


def martin_ball_limit(params: FracParams, x, z, t0: float = 1e-2,
                      levels: int = 6, rtol: float = 1e-7) -> float:
    """Martin kernel by its definition: lim_{y->z} G(x,y)/G(0,y).

    Evaluates the ratio along y = (1-t) z at t = t0 / 2^j and Richardson
    extrapolates (Neville on the polynomial expansion in t).  Raises when the
    extrapolation error estimate exceeds ``rtol`` times the value, reporting
    the last iterates.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    x0 = np.zeros_like(z)
    ts = t0 / 2.0 ** np.arange(levels)
    ys = (1.0 - ts)[:, None] * z[None, :]
    ratios = green_ball(params, x[None, :], ys) / green_ball(params, x0[None, :], ys)
    # Richardson: the ratio is analytic in t (the (1-|y|^2)^s factors cancel),
    # so eliminating integer powers with halved steps converges geometrically.
    tab = ratios.copy()
    prev_last = float(tab[-1])
    for k in range(1, levels):
        tab = (2.0 ** k * tab[1:] - tab[:-1]) / (2.0 ** k - 1.0)
        if k < levels - 1:
            prev_last = float(tab[-1])
    val = float(tab[-1])
    est = abs(val - prev_last)
    if not math.isfinite(val) or est > rtol * abs(val):
        raise RuntimeError(
            "Martin Green-ratio extrapolation did not converge: "
            f"last iterates {ratios[-3:].tolist()}, error estimate {est:.3e}")
    return val


def martin_halfspace(params: FracParams, x, y):
    """Half-space Martin kernel x_N^s |x-y|^{-N}, normalization constant 1.

    The reference normalization is martin_halfspace(e_N, 0) = 1.  y must lie
    on the boundary hyperplane {x_N = 0}.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    scalar = x.ndim == 1 and y.ndim == 1
    x, y = np.broadcast_arrays(np.atleast_2d(x), np.atleast_2d(y))
    if np.any(x[..., -1] <= 0.0):
        raise ValueError("x on or below the boundary hyperplane: kernel degenerates")
    if np.any(y[..., -1] != 0.0):
        raise ValueError("y must lie on the boundary hyperplane x_N = 0")
    d2 = np.sum((x - y) ** 2, axis=-1)
    val = x[..., -1] ** params.s * d2 ** (-0.5 * params.n)
    return float(val[0]) if scalar else val


def minus_a_negative(params: FracParams) -> float:
    """-a_{N,-s} = Gamma(N/2-s) s(1+s) / (pi^{N/2} Gamma(2+s)), positive."""
    n, s = params.n, params.s
    return gamma(0.5 * n - s) * s * (1.0 + s) / (math.pi ** (0.5 * n) * gamma(2.0 + s))


def poisson_ball(params: FracParams, x, y, n_alpha: int = 10) -> float:
    """Poisson kernel -a_{N,-s} int_Omega G(x,zeta) |zeta-y|^{-N-2s} dzeta.

    Quadrature in polar coordinates about x.  The radial integrand carries
    algebraic terms rho^{2s-1} and rho^{2s-1+2k(1-s)} near rho = 0 (from the
    large-argument tail of the Green r0-integral) and vanishes like the
    boundary distance to the power s at the outer end, so both radial ends
    use power-graded rules; the angular rule is graded toward the direction
    of y where |zeta-y|^{-N-2s} peaks.  Disc only; accuracy is tuned for
    moderately exterior y (|y| - 1 of order 0.1 or larger).
    """
    if params.n != 2:
        raise ValueError("poisson_ball quadrature is implemented for the disc (n=2)")
    geom = BallGeometry(2)
    x = np.asarray(x, dtype=float).reshape(2)
    y = np.asarray(y, dtype=float).reshape(2)
    geom.require_interior(x[None, :])
    geom.require_exterior(y[None, :])
    s = params.s
    kap = kappa_constant(params)
    q2 = 0.5 * (params.n + 2.0 * s)

    alpha_y = math.atan2(y[1] - x[1], y[0] - x[0])
    a_lo, w_lo = power_graded_rule(0.0, math.pi, m=3.0, n_panels=n_alpha, n_gl=10)
    alphas = np.concatenate([alpha_y - a_lo, alpha_y + a_lo])
    w_alpha = np.concatenate([w_lo, w_lo])

    e = np.stack([np.cos(alphas), np.sin(alphas)], axis=-1)
    xe = e @ x
    rmax = -xe + np.sqrt(1.0 - x @ x + xe ** 2)

    # grading strong enough that rho^{2s-1} maps to y^{>=3} after substitution
    m_in = max(4.0, math.ceil(2.0 / s))
    t_in, w_in = power_graded_rule(0.0, 1.0, m=m_in, n_panels=10, n_gl=12)
    t_out, w_out = power_graded_rule(0.0, 1.0, m=4.0, n_panels=10, n_gl=12,
                                     from_right=True)

    total = 0.0
    half = 0.5 * rmax
    for ts, ws, inner in ((t_in, w_in, True), (t_out, w_out, False)):
        if inner:
            rr = half[:, None] * ts[None, :]
            fac = half[:, None] * ws[None, :]
        else:
            rr = half[:, None] + half[:, None] * ts[None, :]
            fac = half[:, None] * ws[None, :]
        zeta = x[None, None, :] + rr[..., None] * e[:, None, :]
        nz2 = np.maximum(1.0 - np.sum(zeta * zeta, axis=-1), 0.0)
        r0 = (1.0 - x @ x) * nz2 / rr ** 2
        xi = xi_integral(params, r0)
        dy2 = np.sum((zeta - y[None, None, :]) ** 2, axis=-1)
        vals = kap * rr ** (2.0 * s - 1.0) * xi * dy2 ** (-q2)
        total += np.sum(w_alpha[:, None] * fac * vals)
    return minus_a_negative(params) * total


@dataclass(frozen=True)
class EnvelopeFit:
    """Two-sided envelope comparison: smallest c with c^-1 env <= val <= c env."""

    constant: float
    passed: bool
    worst_index: int


def envelope_check(values, envelope, ceiling: float) -> EnvelopeFit:
    """Fit the smallest two-sided constant between samples and an envelope.

    Raises when an envelope entry vanishes or a value is non-finite, naming
    the offending sample index.
    """
    values = np.asarray(values, dtype=float)
    envelope = np.asarray(envelope, dtype=float)
    if values.size == 0:
        raise ValueError("envelope_check needs at least one sample")
    bad = ~np.isfinite(values)
    if np.any(bad):
        raise ValueError(f"non-finite kernel value at sample index {int(np.argmax(bad))}")
    bad = ~(np.isfinite(envelope) & (envelope > 0.0))
    if np.any(bad):
        raise ValueError(f"envelope vanishes at sample index {int(np.argmax(bad))}")
    ratios = values / envelope
    c = float(max(np.max(ratios), np.max(1.0 / ratios)))
    worst = int(np.argmax(np.maximum(ratios, 1.0 / ratios)))
    return EnvelopeFit(constant=c, passed=bool(c <= ceiling), worst_index=worst)


def green_envelope(params: FracParams, x, y):
    """min(|x-y|^{2s-N}, rho(x)^s rho(y)^s |x-y|^{-N}) comparison envelope."""
    geom = BallGeometry(params.n)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    d = np.linalg.norm(x - y, axis=-1)
    s = params.s
    return np.minimum(d ** (2.0 * s - params.n),
                      geom.rho(x) ** s * geom.rho(y) ** s * d ** (-float(params.n)))


def martin_envelope(params: FracParams, x, z):
    """rho(x)^s |x-z|^{-N} comparison envelope for the ball Martin kernel."""
    geom = BallGeometry(params.n)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    z = np.atleast_2d(np.asarray(z, dtype=float))
    d = np.linalg.norm(x - z, axis=-1)
    return geom.rho(x) ** params.s * d ** (-float(params.n))


def poisson_envelope(params: FracParams, x, y):
    """rho(x)^s / (rho(y)^s (1+rho(y))^s |x-y|^N) envelope; rho(y) = |y| - 1."""
    geom = BallGeometry(params.n)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    d = np.linalg.norm(x - y, axis=-1)
    rho_y = np.linalg.norm(y, axis=-1) - 1.0
    s = params.s
    return geom.rho(x) ** s / (rho_y ** s * (1.0 + rho_y) ** s) * d ** (-float(params.n))
