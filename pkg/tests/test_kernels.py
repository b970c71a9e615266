"""Green/Martin/Poisson kernel tests against independently computed values.

Expected literals were produced by tools/oracles.py (mpmath, 30 digits) and
are frozen here; see tools/oracle_values.txt for the full table.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from fracsing.kernels import (
    BallGeometry,
    envelope_check,
    green_ball,
    green_envelope,
    kappa_constant,
    martin_ball,
    martin_ball_limit,
    martin_envelope,
    martin_halfspace,
    minus_a_negative,
    poisson_ball,
    poisson_envelope,
    xi_integral,
)
from fracsing.params import FracParams, beta_function

P2 = FracParams(2, 0.75)
P3 = FracParams(3, 0.6)

XI_SPOTS = [
    (1e-06, 4.2163684065431831e-5),
    (0.01, 0.041984142107435016),
    (0.5, 0.66270537760568862),
    (1.0, 0.9749909887987221),
    (3.0, 1.5755580961970858),
    (50.0, 2.9445927224614305),
    (1e8, 4.4028829382383662),
]

GREEN_SPOTS = [
    ((0.0, 0.0), (0.5, 0.0), 0.16698865333615999),
    ((0.3, 0.2), (-0.2, 0.4), 0.14793998263431619),
    ((0.9, 0.0), (0.85, 0.05), 0.63654974836189075),
]

MARTIN_SPOTS = [
    ((0.5, 0.0), (1.0, 0.0), 3.2237097954706258),
    ((0.0, 0.3), (0.0, -1.0), 0.55130805722462727),
    ((0.9, 0.0), (1.0, 0.0), 28.778304315451396),
]


def interior_points(n, count, rng, rmax=0.999):
    pts = []
    while len(pts) < count:
        x = rng.uniform(-1.0, 1.0, size=n)
        if np.linalg.norm(x) < rmax:
            pts.append(x)
    return np.array(pts)


class TestConstants:
    def test_kappa_half_disc(self):
        # Gamma(1) / (2 pi Gamma(1/2)^2) = 1 / (2 pi^2)
        assert_allclose(kappa_constant(FracParams(2, 0.5)),
                        1.0 / (2.0 * math.pi ** 2), rtol=1e-14)

    def test_kappa_half_ball(self):
        assert_allclose(kappa_constant(FracParams(3, 0.5)),
                        1.0 / (4.0 * math.pi ** 2), rtol=1e-14)

    def test_minus_a_negative_positive(self):
        assert minus_a_negative(P2) > 0
        assert_allclose(minus_a_negative(P2), 0.94177554044374895, rtol=1e-13)


class TestXiIntegral:
    @pytest.mark.parametrize("r0,expected", XI_SPOTS)
    def test_spots(self, r0, expected):
        assert_allclose(float(xi_integral(P2, np.asarray(r0))), expected,
                        rtol=1e-12)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            xi_integral(P2, np.array([-0.1]))

    def test_branch_seam_continuous(self):
        below = float(xi_integral(P2, np.asarray(1.0 - 1e-13)))
        above = float(xi_integral(P2, np.asarray(1.0 + 1e-13)))
        assert_allclose(below, above, rtol=1e-11)

    @given(st.floats(min_value=1e-8, max_value=1e8),
           st.floats(min_value=1.01, max_value=4.0))
    @settings(max_examples=60, deadline=None)
    def test_monotone_and_bounded(self, r0, factor):
        lo = float(xi_integral(P2, np.asarray(r0)))
        hi = float(xi_integral(P2, np.asarray(r0 * factor)))
        cap = beta_function(P2.s, 0.5 * P2.n - P2.s)
        assert 0.0 < lo < hi < cap


class TestGreenBall:
    @pytest.mark.parametrize("x,y,expected", GREEN_SPOTS)
    def test_spots(self, x, y, expected):
        assert_allclose(green_ball(P2, np.array(x), np.array(y)), expected,
                        rtol=1e-12)

    def test_vectorized_matches_scalar(self):
        xs = np.array([x for x, _, _ in GREEN_SPOTS])
        ys = np.array([y for _, y, _ in GREEN_SPOTS])
        vals = green_ball(P2, xs, ys)
        assert_allclose(vals, [v for _, _, v in GREEN_SPOTS], rtol=1e-12)

    def test_singular_diagonal(self):
        with pytest.raises(ValueError, match="singular"):
            green_ball(P2, np.array([0.1, 0.2]), np.array([0.1, 0.2]))

    def test_exterior_rejected(self):
        with pytest.raises(ValueError):
            green_ball(P2, np.array([0.1, 0.0]), np.array([1.2, 0.0]))

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_symmetry(self, seed):
        rng = np.random.default_rng(seed)
        x, y = interior_points(2, 2, rng)
        if np.linalg.norm(x - y) < 1e-9:
            return
        assert_allclose(green_ball(P2, x, y), green_ball(P2, y, x), rtol=1e-14)

    @pytest.mark.parametrize("params", [P2, FracParams(2, 0.6),
                                        FracParams(2, 0.3), P3])
    def test_envelope_two_sided(self, params):
        rng = np.random.default_rng(7)
        pts = interior_points(params.n, 400, rng)
        x, y = pts[:200], pts[200:]
        keep = np.linalg.norm(x - y, axis=-1) > 1e-6
        x, y = x[keep], y[keep]
        vals = green_ball(params, x, y)
        assert np.all(vals > 0)
        fit = envelope_check(vals, green_envelope(params, x, y), ceiling=30.0)
        assert fit.passed, f"two-sided constant {fit.constant}"

    @pytest.mark.parametrize("params", [P2, P3])
    def test_boundary_decay_rate(self, params):
        x = np.zeros(params.n)
        x[0] = 0.2
        z = np.zeros(params.n)
        z[-1] = 1.0
        ds = np.geomspace(1e-4, 1e-2, 12)
        ys = (1.0 - ds)[:, None] * z[None, :]
        g = green_ball(params, x[None, :], ys)
        slope = np.polyfit(np.log(ds), np.log(g), 1)[0]
        assert abs(slope - params.s) < 0.05 * params.s


class TestMartin:
    @pytest.mark.parametrize("x,z,expected", MARTIN_SPOTS)
    def test_closed_form_spots(self, x, z, expected):
        assert_allclose(martin_ball(P2, np.array(x), np.array(z)), expected,
                        rtol=1e-12)

    def test_center_normalization(self):
        for params in (P2, P3):
            z = np.zeros(params.n)
            z[0] = 1.0
            assert martin_ball(params, np.zeros(params.n), z) == 1.0

    @pytest.mark.parametrize("params,x,z", [
        (P2, (0.5, 0.0), (1.0, 0.0)),
        (P2, (-0.2, 0.6), (0.0, 1.0)),
        (P3, (0.3, -0.2, 0.1), (0.0, 0.0, 1.0)),
    ])
    def test_green_ratio_limit_agrees(self, params, x, z):
        closed = martin_ball(params, np.array(x), np.array(z))
        limit = martin_ball_limit(params, np.array(x), np.array(z))
        assert_allclose(limit, closed, rtol=1e-10)

    def test_limit_reports_iterates_when_forced_tight(self):
        with pytest.raises(RuntimeError, match="iterates"):
            martin_ball_limit(P2, np.array([0.5, 0.0]), np.array([1.0, 0.0]),
                              rtol=1e-18)

    def test_off_boundary_pole_rejected(self):
        with pytest.raises(ValueError, match="sphere"):
            martin_ball(P2, np.array([0.1, 0.0]), np.array([0.9, 0.0]))

    def test_envelope_two_sided(self):
        rng = np.random.default_rng(11)
        xs = interior_points(2, 100, rng)
        th = rng.uniform(0.0, 2.0 * math.pi, 100)
        zs = np.stack([np.cos(th), np.sin(th)], axis=-1)
        fit = envelope_check(martin_ball(P2, xs, zs),
                             martin_envelope(P2, xs, zs), ceiling=4.0)
        assert fit.passed, f"two-sided constant {fit.constant}"


class TestMartinHalfspace:
    def test_reference_normalization(self):
        e2 = np.array([0.0, 1.0])
        assert martin_halfspace(P2, e2, np.zeros(2)) == 1.0
        e3 = np.array([0.0, 0.0, 1.0])
        assert martin_halfspace(P3, e3, np.zeros(3)) == 1.0

    @given(st.floats(min_value=0.05, max_value=4.0),
           st.floats(min_value=-3.0, max_value=3.0),
           st.floats(min_value=-3.0, max_value=3.0),
           st.floats(min_value=0.1, max_value=10.0))
    @settings(max_examples=60, deadline=None)
    def test_homogeneity(self, xn, x1, y1, ell):
        x = np.array([x1, xn])
        y = np.array([y1, 0.0])
        if np.linalg.norm(x - y) < 1e-6:
            return
        lhs = martin_halfspace(P2, ell * x, ell * y) * ell ** (P2.n - P2.s)
        assert_allclose(lhs, martin_halfspace(P2, x, y), rtol=1e-12)

    def test_degenerate_inputs_rejected(self):
        with pytest.raises(ValueError, match="degenerates"):
            martin_halfspace(P2, np.array([0.5, 0.0]), np.array([0.0, 0.0]))
        with pytest.raises(ValueError, match="hyperplane"):
            martin_halfspace(P2, np.array([0.5, 1.0]), np.array([0.0, 0.1]))


class TestPoissonBall:
    def test_center_spot(self):
        val = poisson_ball(P2, np.array([0.0, 0.0]), np.array([1.5, 0.0]))
        assert_allclose(val, 0.14819968063477, rtol=1e-10)

    def test_angular_rule_converged(self):
        x = np.array([0.4, -0.3])
        y = np.array([1.3, 0.4])
        coarse = poisson_ball(P2, x, y, n_alpha=10)
        fine = poisson_ball(P2, x, y, n_alpha=20)
        assert_allclose(coarse, fine, rtol=1e-10)

    def test_decreasing_in_source_distance(self):
        vals = [poisson_ball(P2, np.zeros(2), np.array([r, 0.0]))
                for r in (1.3, 1.6, 2.0, 3.0)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_envelope_two_sided(self):
        rng = np.random.default_rng(3)
        vals, env = [], []
        for _ in range(12):
            x = interior_points(2, 1, rng, rmax=0.9)[0]
            ry, ty = rng.uniform(1.2, 2.5), rng.uniform(0.0, 2.0 * math.pi)
            y = ry * np.array([math.cos(ty), math.sin(ty)])
            vals.append(poisson_ball(P2, x, y))
            env.append(float(poisson_envelope(P2, x[None, :], y[None, :])[0]))
        fit = envelope_check(vals, env, ceiling=5.0)
        assert fit.passed, f"two-sided constant {fit.constant}"

    def test_bad_inputs_rejected(self):
        with pytest.raises(ValueError, match="disc"):
            poisson_ball(P3, np.zeros(3), np.array([1.5, 0.0, 0.0]))
        with pytest.raises(ValueError, match="exterior"):
            poisson_ball(P2, np.zeros(2), np.array([0.5, 0.0]))
        with pytest.raises(ValueError, match="degenerates"):
            poisson_ball(P2, np.zeros(2), np.array([1.0, 0.0]))


class TestGeometryAndEnvelopes:
    def test_rho(self):
        geom = BallGeometry(2)
        assert_allclose(geom.rho(np.array([0.6, 0.0])), 0.4, rtol=1e-15)
        assert geom.rho(np.zeros(2)) == 1.0
        assert geom.rho(np.array([2.0, 0.0])) < 0

    def test_dimension_guard(self):
        with pytest.raises(ValueError):
            BallGeometry(1)
        with pytest.raises(ValueError, match="coordinates"):
            BallGeometry(3).require_interior(np.zeros(2))

    def test_envelope_check_flags_bad_samples(self):
        with pytest.raises(ValueError, match="index 1"):
            envelope_check([1.0, np.inf], [1.0, 1.0], ceiling=2.0)
        with pytest.raises(ValueError, match="index 0"):
            envelope_check([1.0, 1.0], [0.0, 1.0], ceiling=2.0)
        with pytest.raises(ValueError, match="at least one"):
            envelope_check([], [], ceiling=2.0)

    def test_envelope_check_constant(self):
        fit = envelope_check([2.0, 0.5], [1.0, 1.0], ceiling=3.0)
        assert_allclose(fit.constant, 2.0)
        assert fit.passed
        assert not envelope_check([4.0], [1.0], ceiling=3.0).passed
