"""Fixed-point solver for the disc problem with a single boundary atom.

The problem (-Delta)^s u + u^p = 0 with s-boundary trace k*delta_z is solved
on the unit disc through its integral form u = k M(., z) - G[u^p].  A polar
mesh graded toward the boundary and toward z carries a dense, precomputed
Green matrix; the solve is a damped Picard iteration whose limit is polished
so the sandwich k M - G[(k M)^p] <= u <= k M holds nodewise by construction.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .params import FracParams, beta_function, critical_exponents
from .kernels import kappa_constant, martin_ball, xi_integral
from .quadrature import gauss_legendre, gauss_jacobi01

__all__ = [
    "DiscMesh", "DiscField", "SolveReport", "SweepResult", "GreenOperator",
    "apply_green", "solve_uk", "k_sweep", "similarity_profile",
    "scaling_transform",
]

Z_ATOM = np.array([1.0, 0.0])


class DiscMesh:
    """Polar cells on the unit disc, graded toward r = 1 and theta = 0.

    Cell edges follow power laws, so widths shrink like the g-th power of
    the index toward the boundary and toward the atom direction while the
    largest cell stays of size g/m.  That keeps every cell diameter small
    against its distance to the rest of the mesh, which the midpoint
    quadrature of the Green matrix relies on.  Nodes sit at cell centers in
    (r, theta); weights are exact cell areas.
    """

    def __init__(self, n_r: int = 64, n_theta: int = 128,
                 grading: float = 7.0):
        if n_r < 8 or n_theta < 16 or n_theta % 2:
            raise ValueError(
                "mesh needs n_r >= 8 and even n_theta >= 16")
        if grading < 1.0:
            raise ValueError("grading exponent must be >= 1")
        self.n_r = n_r
        self.n_theta = n_theta
        self.grading = grading
        rho_edges = (np.arange(n_r + 1) / n_r) ** grading
        self.r_edges = (1.0 - rho_edges)[::-1].copy()
        self.r_edges[0] = 0.0
        self.r_edges[-1] = 1.0
        pos = math.pi * (np.arange(n_theta // 2 + 1)
                         / (n_theta // 2)) ** grading
        self.th_edges = np.concatenate([-pos[::-1], pos[1:]])
        # boundary gaps from the edge powers directly; 1 - r quantizes at
        # the float spacing of 1.0 and the innermost rings sit far below it
        rho_c = 0.5 * (rho_edges[1:] + rho_edges[:-1])[::-1].copy()
        self.r_centers = 1.0 - rho_c
        self.th_centers = 0.5 * (self.th_edges[1:] + self.th_edges[:-1])
        rr, tt = np.meshgrid(self.r_centers, self.th_centers, indexing="ij")
        self.points = np.column_stack(
            [(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()])
        area_r = 0.5 * (self.r_edges[1:] ** 2 - self.r_edges[:-1] ** 2)
        self.weights = (area_r[:, None]
                        * np.diff(self.th_edges)[None, :]).ravel()
        self.rho = np.repeat(rho_c, n_theta)
        self.min_z_distance = float(np.min(np.hypot(
            self.rho, 2.0 * np.sqrt(rr.ravel())
            * np.abs(np.sin(0.5 * tt.ravel())))))

    @property
    def n_nodes(self) -> int:
        return self.n_r * self.n_theta

    def node_nearest(self, point) -> int:
        """Flat index of the node closest to a Cartesian point."""
        return int(np.argmin(
            np.linalg.norm(self.points - np.asarray(point, float), axis=1)))

    def interpolate(self, values, points):
        """Bilinear interpolation of nodal values in (r, theta).

        Radial coordinates clamp to the node range; theta wraps.  points is
        (..., 2) Cartesian.
        """
        values = np.asarray(values, dtype=float).reshape(
            self.n_r, self.n_theta)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.linalg.norm(pts, axis=-1)
        th = np.arctan2(pts[..., 1], pts[..., 0])
        # periodic padding in theta
        th_nodes = np.concatenate([[self.th_centers[-1] - 2.0 * math.pi],
                                   self.th_centers,
                                   [self.th_centers[0] + 2.0 * math.pi]])
        vals = np.concatenate(
            [values[:, -1:], values, values[:, :1]], axis=1)
        r = np.clip(r, self.r_centers[0], self.r_centers[-1])
        ir = np.clip(np.searchsorted(self.r_centers, r) - 1, 0,
                     self.n_r - 2)
        it = np.clip(np.searchsorted(th_nodes, th) - 1, 0,
                     th_nodes.size - 2)
        fr = (r - self.r_centers[ir]) \
            / (self.r_centers[ir + 1] - self.r_centers[ir])
        ft = (th - th_nodes[it]) / (th_nodes[it + 1] - th_nodes[it])
        out = ((1 - fr) * (1 - ft) * vals[ir, it]
               + fr * (1 - ft) * vals[ir + 1, it]
               + (1 - fr) * ft * vals[ir, it + 1]
               + fr * ft * vals[ir + 1, it + 1])
        return out if out.size > 1 else float(out[0])


@dataclass
class DiscField:
    """Nodal values on a DiscMesh with the (s, p, k) of the producing solve."""

    values: np.ndarray
    s: float = None
    p: float = None
    k: float = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("disc field values must be finite")


@dataclass(frozen=True)
class SolveReport:
    """Iteration diary of one Picard solve."""

    iterations: int
    final_update: float
    sandwich_violations: int
    update_monotone: bool
    nonnegative: bool


@dataclass(frozen=True)
class SweepResult:
    """Probe curves and dichotomy classification of a k sweep."""

    ks: np.ndarray
    probe_points: np.ndarray
    probe_values: np.ndarray
    classification: str
    fields: list = field(repr=False, default=None)
    reports: list = field(repr=False, default=None)


_XI_TABLES: dict = {}


def _xi_table(params: FracParams):
    """Cubic spline of xi_integral in log argument, with exact tails."""
    key = (params.n, params.s)
    if key not in _XI_TABLES:
        lo, hi = 1e-14, 1e16
        u = np.linspace(math.log(lo), math.log(hi), 3001)
        spline = CubicSpline(u, xi_integral(params, np.exp(u)))
        s, half_n = params.s, 0.5 * params.n
        full = beta_function(s, half_n - s)

        def table(r0):
            r0 = np.asarray(r0, dtype=float)
            out = np.empty_like(r0)
            small = r0 < lo
            big = r0 > hi
            mid = ~(small | big)
            out[small] = r0[small] ** s / s
            out[big] = full - r0[big] ** (s - half_n) / (half_n - s)
            out[mid] = spline(np.log(r0[mid]))
            return out

        _XI_TABLES[key] = table
    return _XI_TABLES[key]


class GreenOperator:
    """Dense Green matrix of the disc with quadrature weights absorbed.

    Entries are cell integrals of the kernel.  Far cells use the center
    rule; any cell whose angular or radial extent is large against the
    pair distance is subdivided until subcell extents drop below phi times
    the distance; the self cell is integrated by rays from the node with a
    Gauss-Jacobi radial rule that absorbs the |x - y|^{2s-2} singularity.
    """

    def __init__(self, params: FracParams, mesh: DiscMesh,
                 n_angle: int = 8, n_ray: int = 8, phi: float = 0.25):
        if params.n != 2:
            raise ValueError("GreenOperator is implemented on the disc (n=2)")
        self.params = params
        self.mesh = mesh
        self._moments = {}
        self._corrections = {}
        self._matrix = self._assemble(n_angle, n_ray, phi)

    def _green_vals(self, x, nx2, y, ny2):
        """Kernel between point sets; x (m,2) against y (k,2).

        Coincident pairs produce inf; the assembler overwrites them.
        """
        s = self.params.s
        d2 = ((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            r0 = nx2[:, None] * ny2[None, :] / d2
            vals = kappa_constant(self.params) * d2 ** (s - 1.0) \
                * _xi_table(self.params)(r0)
        return vals

    def _assemble(self, n_angle, n_ray, phi):
        mesh, params = self.mesh, self.params
        pts = mesh.points
        nn = mesh.n_nodes
        nx2 = 1.0 - (pts ** 2).sum(axis=1)
        mat = np.empty((nn, nn))
        arcw = (mesh.r_edges[1:, None]
                * np.diff(mesh.th_edges)[None, :]).ravel()
        radw = np.repeat(np.diff(mesh.r_edges), mesh.n_theta)
        diam = np.hypot(arcw, radw)
        need_rows, need_cols, need_nt, need_nr = [], [], [], []
        chunk = max(1, int(2e6) // nn)
        for lo in range(0, nn, chunk):
            hi = min(lo + chunk, nn)
            block = self._green_vals(pts[lo:hi], nx2[lo:hi], pts, nx2)
            mat[lo:hi] = block
            d = np.sqrt(((pts[lo:hi, None, :] - pts[None, :, :]) ** 2)
                        .sum(axis=-1))
            d_eff = np.maximum(d - 0.5 * diam[None, :], 0.25 * d)
            with np.errstate(divide="ignore"):
                sel = arcw[None, :] > phi * d_eff
            sel[np.arange(lo, hi) - lo, np.arange(lo, hi)] = False
            ii, jj = np.nonzero(sel)
            if ii.size:
                de = d_eff[ii, jj]
                nt = np.clip(np.ceil(arcw[jj] / (phi * de)), 2, 64)
                nr = np.clip(np.ceil(radw[jj] / (phi * de)), 1, 8)
                need_rows.append(ii.astype(np.int32) + lo)
                need_cols.append(jj.astype(np.int32))
                need_nt.append((2 ** np.ceil(np.log2(nt))).astype(np.int16))
                need_nr.append((2 ** np.ceil(np.log2(nr))).astype(np.int16))
        np.fill_diagonal(mat, 0.0)
        mat *= mesh.weights[None, :]
        if need_rows:
            self._refine_close(
                mat, nx2,
                np.concatenate(need_rows), np.concatenate(need_cols),
                np.concatenate(need_nt), np.concatenate(need_nr))
        self._add_self_cells(mat, nx2, n_angle, n_ray)
        return mat

    def _refine_close(self, mat, nx2, rows, cols, nts, nrs):
        """Re-integrate close-pair entries on subdivided cells.

        Pairs are grouped by (cell, subdivision counts) so each group is one
        vectorized kernel evaluation of shape (rows, subcells).
        """
        mesh = self.mesh
        n_t = mesh.n_theta
        order = np.lexsort((nrs, nts, cols))
        rows, cols = rows[order], cols[order]
        nts, nrs = nts[order], nrs[order]
        key = (cols.astype(np.int64) << 20) \
            + (nts.astype(np.int64) << 8) + nrs
        starts = np.flatnonzero(np.concatenate(
            [[True], key[1:] != key[:-1]]))
        starts = np.append(starts, rows.size)
        pts = mesh.points
        for g in range(starts.size - 1):
            sl = slice(starts[g], starts[g + 1])
            j = int(cols[sl.start])
            m_t, m_r = int(nts[sl.start]), int(nrs[sl.start])
            j_r, j_t = divmod(j, n_t)
            ra, rb = mesh.r_edges[j_r], mesh.r_edges[j_r + 1]
            ta, tb = mesh.th_edges[j_t], mesh.th_edges[j_t + 1]
            r_sub = np.linspace(ra, rb, m_r + 1)
            t_sub = np.linspace(ta, tb, m_t + 1)
            rc = 0.5 * (r_sub[1:] + r_sub[:-1])
            tc = 0.5 * (t_sub[1:] + t_sub[:-1])
            w = (0.5 * (r_sub[1:] ** 2 - r_sub[:-1] ** 2)[:, None]
                 * np.diff(t_sub)[None, :]).ravel()
            rr = np.repeat(rc, m_t)
            tt = np.tile(tc, m_r)
            ys = np.column_stack([rr * np.cos(tt), rr * np.sin(tt)])
            ny2 = 1.0 - rr ** 2
            ridx = rows[sl]
            vals = self._green_vals(pts[ridx], nx2[ridx], ys, ny2)
            mat[ridx, j] = vals @ w

    def _add_self_cells(self, mat, nx2, n_angle, n_ray):
        mesh, params = self.mesh, self.params
        s = params.s
        tau, tw = gauss_jacobi01(n_ray, 2.0 * s - 1.0)
        n_r, n_t = mesh.n_r, mesh.n_theta
        kap = kappa_constant(params)
        xi = _xi_table(params)
        for i in range(n_r):
            rc = mesh.r_centers[i]
            a_half = 0.5 * (mesh.r_edges[i + 1] - mesh.r_edges[i])
            for j in range(n_t):
                tc = mesh.th_centers[j]
                b_half = 0.5 * rc * (mesh.th_edges[j + 1] - mesh.th_edges[j])
                corners = np.array([
                    math.atan2(b_half, a_half),
                    math.atan2(b_half, -a_half),
                    math.atan2(-b_half, -a_half) + 2.0 * math.pi,
                    math.atan2(-b_half, a_half) + 2.0 * math.pi,
                ])
                edges = np.concatenate(
                    [[0.0], corners, [2.0 * math.pi]])
                alpha, aw = np.empty(0), np.empty(0)
                for seg in range(edges.size - 1):
                    x_, w_ = gauss_legendre(edges[seg], edges[seg + 1],
                                            n_angle)
                    alpha = np.concatenate([alpha, x_])
                    aw = np.concatenate([aw, w_])
                ca, sa = np.cos(alpha), np.sin(alpha)
                with np.errstate(divide="ignore"):
                    rad = np.minimum(
                        np.where(ca != 0.0, a_half / np.abs(ca), np.inf),
                        np.where(sa != 0.0, b_half / np.abs(sa), np.inf))
                node = mesh.points[i * n_t + j]
                x2 = nx2[i * n_t + j]
                t = rad[:, None] * tau[None, :]
                r_y = rc + t * ca[:, None]
                th_y = tc + t * sa[:, None] / rc
                ys = np.stack([r_y * np.cos(th_y), r_y * np.sin(th_y)],
                              axis=-1)
                d2 = ((ys - node) ** 2).sum(axis=-1)
                ny2 = 1.0 - r_y ** 2
                g_smooth = kap * d2 ** (s - 1.0) * xi(x2 * ny2 / d2) \
                    * t ** (2.0 - 2.0 * s) * (r_y / rc)
                mat[i * n_t + j, i * n_t + j] = float(
                    aw @ (rad ** (2.0 * s) * (g_smooth @ tw)))

    def apply(self, values) -> np.ndarray:
        """Green potential of nodal values."""
        values = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise ValueError("apply_green requires finite source values")
        return self._matrix @ values

    def source_moments(self, p: float) -> np.ndarray:
        """Quadrature corrections for sources shaped like rho^s M(.,z)^p.

        Returns c with c_j the cell average of rho^s M^p over its nodal
        value, so that applying the matrix to f*c integrates G[f] exactly
        whenever f follows the Martin power shape and to second order for
        smooth deviations from it.  Without the correction, midpoint
        sampling of M^p under-reads the steep cells toward the atom and the
        error surfaces at interior nodes scaled by k^p.  On the boundary
        ring the average is additionally weighted by (1-r^2)^s, the rate at
        which the kernel seen from any far node dies toward the rim.  The
        moment of the cells meeting the atom is integrated in polar
        coordinates around z, where the radial power is integrable exactly
        when p stays below the second critical exponent.
        """
        key = round(float(p), 12)
        got = self._moments.get(key)
        if got is not None:
            return got
        p2 = critical_exponents(self.params).p2
        if not 0.0 < p < p2:
            raise ValueError(
                f"source moments need p in (0, {p2:g}); the Martin power "
                "is not cell-integrable beyond the second critical exponent")
        mesh, s = self.mesh, self.params.s
        mom = np.empty((mesh.n_r, mesh.n_theta))
        for i in range(mesh.n_r):
            mom[i] = self._ring_moments(p, i, 4, 4)
        re, te = mesh.r_edges, mesh.th_edges
        dmin, diam = self._cell_gaps()
        fine_i, fine_j = np.nonzero((dmin < 16.0 * diam) & (dmin > 0.0))
        for i, j in zip(fine_i, fine_j):
            mom[i, j] = self._ring_moments(p, i, 24, 24, j)
        for i, j in zip(*np.nonzero(dmin == 0.0)):
            mom[i, j] = self._atom_cell_moment(
                p, 1.0 - re[i], abs(te[j + 1] - te[j]))
        mart = martin_ball(self.params, mesh.points, Z_ATOM)
        den = mesh.rho ** s * mart ** p * mesh.weights
        bdry = slice((mesh.n_r - 1) * mesh.n_theta, mesh.n_nodes)
        den[bdry] = den[bdry] * (mesh.rho[bdry] * (2.0 - mesh.rho[bdry])) ** s
        c = mom.ravel() / den
        self._moments[key] = c
        return c

    def _cell_gaps(self):
        """Distance from each cell rectangle to the atom, and cell diameters."""
        mesh = self.mesh
        re, te = mesh.r_edges, mesh.th_edges
        r_star = np.clip(1.0, re[:-1], re[1:])
        t_star = np.clip(0.0, te[:-1], te[1:])
        dmin = np.hypot((1.0 - r_star)[:, None],
                        2.0 * np.sqrt(r_star)[:, None]
                        * np.abs(np.sin(0.5 * t_star))[None, :])
        diam = np.hypot(np.diff(re)[:, None],
                        re[1:][:, None] * np.diff(te)[None, :])
        return dmin, diam

    def _ring_moments(self, p, i, n_rad, n_ang, j=None):
        """Cell moments of rho^s M^p on ring i (all sectors or one).

        Boundary-ring moments carry the extra (1-r^2)^s kernel shape (the
        Green function vanishes at that rate toward the rim, so far rows
        weight the cell by it) and absorb the combined rho power through a
        Gauss-Jacobi rule; interior rings fold everything into the
        integrand.
        """
        mesh, s = self.mesh, self.params.s
        sig = s * (1.0 + p)
        ra, rb = mesh.r_edges[i], mesh.r_edges[i + 1]
        if i == mesh.n_r - 1:
            tau, tw = gauss_jacobi01(max(n_rad, 12), sig + s)
            rq = 1.0 - (1.0 - ra) * tau
            rw = tw * (1.0 - ra) ** (sig + s + 1.0)
            one_r = s * (1.0 + p)
        else:
            rq, rw = gauss_legendre(ra, rb, n_rad)
            rw = rw * (1.0 - rq) ** sig
            one_r = s * p
        rho = 1.0 - rq
        sectors = range(mesh.n_theta) if j is None else [j]
        out = np.empty(len(sectors))
        for col, jj in enumerate(sectors):
            tq, twt = gauss_legendre(mesh.th_edges[jj],
                                     mesh.th_edges[jj + 1], n_ang)
            d2 = (rho[:, None] ** 2
                  + 4.0 * rq[:, None] * np.sin(0.5 * tq[None, :]) ** 2)
            vals = (1.0 + rq[:, None]) ** one_r * d2 ** (-p) * rq[:, None]
            out[col] = rw @ vals @ twt
        return out if j is None else float(out[0])

    def _atom_cell_moment(self, p: float, a: float, b: float) -> float:
        """Kernel-shaped moment of rho^s M^p over a cell meeting the atom.

        Locally the cell is the rectangle [0,a] x [0,b] in (rho, arc)
        coordinates with the atom at the origin; curvature corrections are
        O(a) and far below the quadrature tolerance.
        """
        s = self.params.s
        sig = s * (2.0 + p)
        pw = sig - 2.0 * p + 2.0
        split = math.atan2(a, b)
        total = 0.0
        for lo, hi in ((0.0, split), (split, 0.5 * math.pi)):
            al, aw = gauss_legendre(lo, hi, 24)
            with np.errstate(divide="ignore"):
                rad = np.minimum(
                    np.where(np.sin(al) > 0.0, a / np.sin(al), np.inf),
                    np.where(np.cos(al) > 0.0, b / np.cos(al), np.inf))
            total += float(aw @ (np.sin(al) ** sig * rad ** pw)) / pw
        return 2.0 ** (s * (1.0 + p)) * total

    def power_corrections(self, p: float):
        """Joint kernel-source quadrature near the atom.

        The scalar moments of source_moments assume the kernel is flat over
        each cell.  For target nodes close to a steep cell the kernel and
        the source shape vary together (and anti-correlate across the atom
        cells, whose mass sits at the corner), so those entries are
        re-integrated jointly.  Returns a sparse delta matrix D with
        D_ij = [cell integral of G(x_i,.)*phi/phi_j] - matrix_ij*c_j for the
        affected pairs, so the corrected potential is mat@(f*c) + D@f.
        """
        key = round(float(p), 12)
        got = self._corrections.get(key)
        if got is not None:
            return got
        from scipy.sparse import coo_matrix

        mesh, s = self.mesh, self.params.s
        c = self.source_moments(p)
        pts = mesh.points
        nx2 = mesh.rho * (2.0 - mesh.rho)
        n_t = mesh.n_theta
        dmin, diam = self._cell_gaps()
        cg = c.reshape(mesh.n_r, mesh.n_theta)
        steep_i, steep_j = np.nonzero(
            ((np.abs(cg - 1.0) > 0.1) & (dmin < 16.0 * diam))
            | (dmin == 0.0))
        mart = martin_ball(self.params, pts, Z_ATOM)
        phi_node = mesh.rho ** s * mart ** p
        rows_all, cols_all, deltas = [], [], []
        for ic, jc in zip(steep_i, steep_j):
            col = ic * n_t + jc
            dc = np.linalg.norm(pts - pts[col], axis=1)
            rows = np.nonzero(dc < 6.0 * diam[ic, jc])[0]
            if rows.size == 0:
                continue
            if dmin[ic, jc] == 0.0:
                vals = self._joint_atom_entries(p, ic, jc, rows, pts, nx2)
            else:
                self_row = rows == col
                vals = self._joint_cell_entries(p, ic, jc, rows, pts, nx2)
                if self_row.any():
                    # keep the ray-integrated diagonal; phi variation over
                    # the own cell is second order against its G peak
                    vals[self_row] = self._matrix[col, col]
            vals /= phi_node[col]
            rows_all.append(rows)
            cols_all.append(np.full(rows.size, col, dtype=np.int64))
            deltas.append(vals - self._matrix[rows, col] * c[col])
        nn = mesh.n_nodes
        if rows_all:
            d = coo_matrix(
                (np.concatenate(deltas),
                 (np.concatenate(rows_all), np.concatenate(cols_all))),
                shape=(nn, nn)).tocsr()
        else:
            d = coo_matrix((nn, nn)).tocsr()
        self._corrections[key] = d
        return d

    def _joint_cell_entries(self, p, ic, jc, rows, pts, nx2):
        """Integrals of G(x_i,.) rho^s M^p over a steep non-atom cell.

        On the boundary ring the kernel factor (1-r^2)^s is folded into the
        Gauss-Jacobi weight, leaving a smooth radial integrand.
        """
        mesh, s = self.mesh, self.params.s
        sig = s * (1.0 + p)
        ra, rb = mesh.r_edges[ic], mesh.r_edges[ic + 1]
        if ic == mesh.n_r - 1:
            tau, tw = gauss_jacobi01(24, sig + s)
            rq = 1.0 - (1.0 - ra) * tau
            rw = tw * (1.0 - ra) ** (sig + s + 1.0)
            kfold = True
        else:
            rq, rw = gauss_legendre(ra, rb, 24)
            rw = rw * (1.0 - rq) ** sig
            kfold = False
        tq, twt = gauss_legendre(mesh.th_edges[jc], mesh.th_edges[jc + 1], 24)
        rho = 1.0 - rq
        d2z = (rho[:, None] ** 2
               + 4.0 * rq[:, None] * np.sin(0.5 * tq[None, :]) ** 2)
        rest = (1.0 + rq[:, None]) ** (s * p) * d2z ** (-p) * rq[:, None]
        w2 = (rw[:, None] * twt[None, :] * rest).ravel()
        ys = np.column_stack([
            np.repeat(rq, tq.size) * np.cos(np.tile(tq, rq.size)),
            np.repeat(rq, tq.size) * np.sin(np.tile(tq, rq.size))])
        ny2 = np.repeat(rho * (1.0 + rq), tq.size)
        g = self._green_vals(pts[rows], nx2[rows], ys, ny2)
        np.nan_to_num(g, copy=False, posinf=0.0)
        if kfold:
            g = g / np.repeat(rho, tq.size)[None, :] ** s
        return g @ w2

    def _joint_atom_entries(self, p, ic, jc, rows, pts, nx2):
        """Integrals of G(x_i,.) rho^s M^p over a cell cornered on the atom.

        Polar coordinates at z absorb the co-singular source; the flat map
        (rho, arc) -> disc coordinates errs by O(cell size).
        """
        mesh, s = self.mesh, self.params.s
        sig = s * (2.0 + p)
        a = 1.0 - mesh.r_edges[ic]
        ta, tb = mesh.th_edges[jc], mesh.th_edges[jc + 1]
        b = abs(tb - ta)
        sgn = 1.0 if tb > 0.0 else -1.0
        tau, tw = gauss_jacobi01(24, sig - 2.0 * p + 1.0)
        out = np.zeros(rows.size)
        split = math.atan2(a, b)
        for lo, hi in ((0.0, split), (split, 0.5 * math.pi)):
            al, aw = gauss_legendre(lo, hi, 16)
            with np.errstate(divide="ignore"):
                rad = np.minimum(
                    np.where(np.sin(al) > 0.0, a / np.sin(al), np.inf),
                    np.where(np.cos(al) > 0.0, b / np.cos(al), np.inf))
            t = rad[:, None] * tau[None, :]
            rho_y = t * np.sin(al)[:, None]
            th_y = sgn * t * np.cos(al)[:, None]
            r_y = 1.0 - rho_y
            ys = np.column_stack([(r_y * np.cos(th_y)).ravel(),
                                  (r_y * np.sin(th_y)).ravel()])
            ny2 = (rho_y * (2.0 - rho_y)).ravel()
            g = self._green_vals(pts[rows], nx2[rows], ys, ny2)
            np.nan_to_num(g, copy=False, posinf=0.0)
            g = g / ny2[None, :] ** s
            rest = ((2.0 - rho_y) / 2.0) ** (s * (1.0 + p)) * r_y
            w2 = (aw[:, None] * tw[None, :]
                  * np.sin(al)[:, None] ** sig
                  * rad[:, None] ** (sig - 2.0 * p + 2.0) * rest).ravel()
            out += 2.0 ** (s * (1.0 + p)) * (g @ w2)
        return out

    def apply_power(self, values, p: float) -> np.ndarray:
        """Green potential of the p-th power of the positive part.

        Uses source-moment corrected quadrature with joint near-atom
        entries, which keeps the potential accurate when the field rides
        the Martin kernel.
        """
        values = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise ValueError("apply_green requires finite source values")
        src = np.clip(values, 0.0, None) ** p
        return (self._matrix @ (src * self.source_moments(p))
                + self.power_corrections(p) @ src)


def apply_green(green: GreenOperator, f):
    """Green potential of a nodal source; takes the assembled operator.

    Accepts a DiscField or a plain array and returns a DiscField.
    """
    values = f.values if isinstance(f, DiscField) else f
    return DiscField(green.apply(values), s=green.params.s)


def scaling_transform(params: FracParams, p: float, ell: float, fn):
    """Similarity scaling T_ell acting on a field of Cartesian points.

    Returns x -> ell^{2s/(p-1)} * fn(ell * x); the half-space Martin kernel
    with atom at the origin is an exact eigenfunction of this map.
    """
    power = 2.0 * params.s / (p - 1.0)

    def scaled(x):
        return ell ** power * fn(ell * np.asarray(x, dtype=float))

    return scaled


def _check_solver_domain(params: FracParams, p: float) -> None:
    if params.n != 2:
        raise ValueError("the boundary-atom solver runs on the disc (n=2)")
    if not 0.5 < params.s < 1.0:
        raise ValueError(
            f"s = {params.s} outside (1/2, 1): the boundary trace of the "
            "Martin kernel is not integrable against u^p otherwise")
    p2 = critical_exponents(params).p2
    if not 0.0 < p < p2:
        raise ValueError(
            f"p = {p} outside (0, {p2:.6g}): the measure-data problem "
            "loses solvability at the second critical exponent")


def solve_uk(mesh: DiscMesh, params: FracParams, p: float, k: float,
             theta: float = 0.5, tol: float = 1e-6, max_iter: int = 400,
             green: GreenOperator = None, start: DiscField = None):
    """Damped Picard solve of u = k M(., z) - G[u_+^p] from u0 = k M.

    Parameters
    ----------
    mesh : DiscMesh
    params : FracParams
        Requires s in (1/2, 1); the order must make the atom trace finite.
    p : float
        Power in (0, p2); beyond the second critical exponent the boundary
        measure problem has no solution.
    k : float
        Atom mass at z = (1, 0).
    theta : float, optional
        Damping factor in (0, 1]; the undamped map is order-reversing, so
        full steps oscillate.
    tol : float, optional
        Weighted sup-norm threshold on the fixed-point residual, measured
        against the weight 1/(1 + M); the weight flattens the blow-up near
        z while keeping interior values at absolute tolerance for any k.
    max_iter : int, optional
    green : GreenOperator, optional
        Reused operator; assembled on the fly when absent.
    start : DiscField, optional
        Warm start.  The cold start u0 = kM passes through states of size
        kM whose linearized map is expansive for large k; a solution at a
        nearby k stays in the contractive neighborhood of the fixed point.

    Returns
    -------
    (DiscField, SolveReport)
        The polished solution (sandwich-exact by construction) and the
        iteration diary.

    Raises
    ------
    ValueError
        Domain violations, divergence (the update norm grew for 50
        consecutive sweeps), or max_iter exhausted; both iteration errors
        suggest retrying with theta halved or a warm start.
    """
    _check_solver_domain(params, p)
    if green is None:
        green = GreenOperator(params, mesh)
    mart = martin_ball(params, mesh.points, Z_ATOM)
    km = k * mart
    weight = 1.0 / (1.0 + mart)
    u = km.copy() if start is None else np.minimum(start.values, km)
    prev_norm = np.inf
    grow = 0
    norms = []
    iterations = 0
    converged = False
    for it in range(1, max_iter + 1):
        iterations = it
        target = km - green.apply_power(u, p)
        resid = float(np.max(np.abs(u - target) * weight))
        norms.append(resid)
        if resid <= tol:
            converged = True
            break
        if resid > prev_norm:
            grow += 1
            if grow >= 50:
                raise ValueError(
                    "Picard iteration diverged (update norm grew for 50 "
                    f"consecutive sweeps at theta = {theta}); retry with "
                    "theta halved or a warm start from a smaller k")
        else:
            grow = 0
        prev_norm = resid
        u = (1.0 - theta) * u + theta * target
    if not converged:
        raise ValueError(
            f"Picard iteration stalled at residual {norms[-1]:.3e} after "
            f"{max_iter} sweeps (tol {tol:.1e}); retry with theta halved "
            "or a warm start from a smaller k")
    # polish: one exact image of the clipped iterate makes both sandwich
    # sides structural, then the sign clamp keeps them
    u = km - green.apply_power(np.minimum(u, km), p)
    lower = km - green.apply_power(km, p)
    violations = int(np.sum((u > km * (1.0 + 1e-12) + 1e-300)
                            | (u < lower - 1e-12 * np.abs(lower) - 1e-300)))
    u = np.maximum(u, 0.0)
    report = SolveReport(
        iterations=iterations,
        final_update=norms[-1] if norms else 0.0,
        sandwich_violations=violations,
        update_monotone=bool(np.all(np.diff(norms) <= 0)) if len(norms) > 1
        else True,
        nonnegative=bool(np.all(u >= 0.0)),
    )
    return DiscField(u, s=params.s, p=p, k=k), report


DEFAULT_PROBES = np.array([
    [0.0, 0.0], [-0.5, 0.0], [0.0, 0.6], [0.5, 0.0],
])


def _damping_radius(green: GreenOperator, p: float, u: np.ndarray,
                    iters: int = 25) -> float:
    """Power estimate of the Picard linearization radius at a solution."""
    du = np.where(u > 0.0, u, 0.0)
    du = p * du ** (p - 1.0) if p >= 1.0 \
        else p * np.where(u > 0.0, u ** (p - 1.0), 0.0)
    cmom = green.source_moments(p)
    corr = green.power_corrections(p)
    v = np.ones(u.size)
    lam = 0.0
    for _ in range(iters):
        w = green.apply(du * cmom * v) + corr @ (du * v)
        lam = float(np.linalg.norm(w) / np.linalg.norm(v))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
    return lam


def k_sweep(mesh: DiscMesh, params: FracParams, p: float, ks,
            theta: float = 0.5, green: GreenOperator = None,
            probes=None) -> SweepResult:
    """Solve along increasing k and classify the probe-value trend.

    Each solve warm-starts from the previous one, which keeps the damped
    iteration inside its contractive neighborhood at large k.  The probe
    values must be nondecreasing in k (the data-to-solution map is order
    preserving); "saturates" means the relative increment over the last
    doubling of k stayed below 1% at every probe, "diverges" means the
    values kept growing by more than 20% there.

    Raises
    ------
    ValueError
        Empty or non-increasing ks, or probe values decreasing in k.
    """
    ks = np.asarray(ks, dtype=float)
    if ks.size == 0:
        raise ValueError("k_sweep needs at least one k")
    if np.any(np.diff(ks) <= 0.0):
        raise ValueError("ks must be strictly increasing")
    _check_solver_domain(params, p)
    if green is None:
        green = GreenOperator(params, mesh)
    if probes is None:
        probes = DEFAULT_PROBES
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    idx = [mesh.node_nearest(q) for q in probes]
    fields, reports = [], []
    values = np.empty((ks.size, len(idx)))
    warm = None
    th = theta
    for row, k in enumerate(ks):
        for _ in range(6):
            try:
                fld, rep = solve_uk(mesh, params, p, k, theta=th,
                                    max_iter=200 + int(200 / th),
                                    green=green, start=warm)
                break
            except ValueError as exc:
                if "Picard" not in str(exc):
                    raise
                th *= 0.5
        else:
            raise ValueError(f"Picard iteration failed at k = {k} for "
                             "every damping factor tried")
        fields.append(fld)
        reports.append(rep)
        values[row] = fld.values[idx]
        warm = fld
        # the linearization radius grows with k; keep theta inside the
        # stability interval before the next solve
        if row + 1 < ks.size:
            mu = _damping_radius(green, p, fld.values)
            th = min(theta, 1.7 / (1.0 + mu))
    scale = np.max(values, axis=0)
    # slack of a few solver tolerances; genuine dips are far larger
    if np.any(np.diff(values, axis=0) < -1e-5 * scale[None, :]):
        raise ValueError(
            "probe values decreased along increasing k, violating the "
            "monotonicity of the data-to-solution map")
    if ks.size >= 2:
        last, prev = values[-1], values[-2]
        incr = (last - prev) / np.where(prev > 0.0, prev, 1.0)
        if np.max(incr) < 0.01:
            cls = "saturates"
        elif np.min(incr) > 0.20 \
                and bool(np.all(np.diff(values, axis=0) > 0.0)):
            cls = "diverges"
        else:
            cls = "inconclusive"
    else:
        cls = "inconclusive"
    return SweepResult(ks=ks, probe_points=mesh.points[idx],
                       probe_values=values, classification=cls,
                       fields=fields, reports=reports)


def similarity_profile(mesh: DiscMesh, params: FracParams, p: float,
                       u_inf: DiscField, radius: float, n_phi: int = 41):
    """Rescaled arc profile of a saturated solution around the atom.

    Samples radius^{2s/(p-1)} * u on the arc of the given radius around
    z = (1, 0), parameterized by the local half-space angle phi in (0, pi)
    measured from the boundary tangent.

    Returns
    -------
    (phis, values) : ndarray pair

    Raises
    ------
    ValueError
        When the radius is under four local cell sizes of the mesh near z.
    """
    res = 4.0 * mesh.min_z_distance
    if radius < res:
        raise ValueError(
            f"arc radius {radius:.3e} below mesh resolution near the atom "
            f"(needs >= {res:.3e})")
    rho_min = float(np.min(mesh.rho))
    sin_min = min(0.95, 1.2 * (0.5 * radius + rho_min / radius))
    phi_min = math.asin(sin_min)
    phis = np.linspace(phi_min, math.pi - phi_min, n_phi)
    dirs = np.column_stack([-np.sin(phis), np.cos(phis)])
    pts = Z_ATOM[None, :] + radius * dirs
    # interpolate the Martin ratio; it is flat across the rho^s falloff
    # that raw nodal values carry near the rim
    mart_n = martin_ball(params, mesh.points, Z_ATOM)
    vals = mesh.interpolate(u_inf.values / mart_n, pts) \
        * martin_ball(params, pts, Z_ATOM)
    return phis, radius ** (2.0 * params.s / (p - 1.0)) * np.atleast_1d(vals)
