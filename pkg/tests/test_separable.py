"""Tests for constant and hemisphere separable profiles."""

import math

import numpy as np
import pytest
import scipy.linalg as sla
from numpy.testing import assert_allclose

from fracsing.params import FracParams
from fracsing.sphere_ops import (LatGrid, SphericalField,
                                 assemble_operator_pair)
from fracsing.eigen import principal_eigenpair
from fracsing.separable import (ProfileResult, _fixed_point,
                                constant_profile, constant_profile_residual,
                                energy_J, hemisphere_profile,
                                nonexistence_check, profile_beta)

P2 = FracParams(2, 0.75)
P3 = FracParams(3, 0.6)

# reference values via the c35 quadrature oracle in tools/oracles.py
ELL_SPOT_P2 = 0.7396687797971613    # (N=2, s=0.75, p=2)
ELL_SPOT_P3 = 0.25569141802829176   # (N=2, s=0.75, p=3)


@pytest.fixture(scope="module")
def grid24():
    return LatGrid.make(2, 24)


@pytest.fixture(scope="module")
def ops_p2(grid24):
    return assemble_operator_pair(grid24, P2, profile_beta(P2, 2.0))


@pytest.fixture(scope="module")
def profile_p2(grid24):
    return hemisphere_profile(P2, 2.0, grid24)


class TestConstantProfile:
    def test_frozen_spots(self):
        assert_allclose(constant_profile(P2, 2.0), ELL_SPOT_P2, rtol=1e-10)
        assert_allclose(constant_profile(P2, 3.0), ELL_SPOT_P3, rtol=1e-10)

    def test_vanishes_toward_third_exponent(self):
        ps = [3.0, 3.5, 3.9, 3.99]
        ells = [constant_profile(P2, p) for p in ps]
        assert np.all(np.diff(ells) < 0)
        assert ells[-1] < 0.5 * ells[0]

    def test_rejects_beyond_third_exponent(self):
        for p in (4.0, 5.0):
            with pytest.raises(ValueError, match="no positive separable"):
                constant_profile(P2, p)

    def test_rejects_at_or_below_first_exponent(self):
        for p in (1.75, 1.0):
            with pytest.raises(ValueError, match="admissible range"):
                constant_profile(P2, p)

    def test_discrete_residual(self, grid24):
        for p in (2.0, 3.0):
            ops = assemble_operator_pair(grid24, P2, profile_beta(P2, p))
            assert constant_profile_residual(ops, p) <= 1e-8


class TestEnergyJ:
    def test_zero_field(self, grid24, ops_p2):
        zero = SphericalField.from_hemisphere(grid24, np.zeros(24))
        assert energy_J(ops_p2, zero, 2.0) == 0.0

    def test_negative_along_eigenfunction(self, grid24, ops_p2):
        eig = principal_eigenpair(ops_p2)
        assert eig.lambda_ < 1.0
        psi = eig.psi.hemisphere_values()
        q = psi @ ops_p2.l_form @ psi
        t = ops_p2.lumped_mass @ psi ** 3.0
        eps = (1.0 - eig.lambda_) * q / t
        field = SphericalField.from_hemisphere(grid24, eps * psi)
        val = energy_J(ops_p2, field, 2.0)
        closed = (0.5 * eps ** 2 * (eig.lambda_ - 1.0) * q
                  + eps ** 3 / 3.0 * t)
        assert val < 0.0
        assert_allclose(val, closed, rtol=1e-8)

    def test_coercive(self, grid24, ops_p2):
        rng = np.random.default_rng(0)
        w = rng.uniform(0.5, 1.5, 24)
        vals = [energy_J(ops_p2,
                         SphericalField.from_hemisphere(grid24, t * w), 2.0)
                for t in (1e2, 1e3, 1e4)]
        assert np.all(np.diff(vals) > 0)
        assert vals[-1] > 0.0

    def test_rejects_full_sphere_field(self, grid24, ops_p2):
        full = SphericalField(grid24, np.ones(grid24.nodes.size))
        with pytest.raises(ValueError, match="hemisphere"):
            energy_J(ops_p2, full, 2.0)


class TestHemisphereProfile:
    def test_nontrivial_at_p2(self, profile_p2):
        res = profile_p2
        assert isinstance(res, ProfileResult)
        assert res.classification == "nontrivial"
        assert res.energy < 0.0
        v = res.omega.hemisphere_values()
        assert np.all(v >= 0.0)
        assert np.max(v) > 0.0

    def test_bounded_by_constant_profile(self, profile_p2):
        assert np.max(profile_p2.omega.values) <= constant_profile(P2, 2.0)

    def test_euler_lagrange_residual(self, profile_p2, ops_p2):
        res = profile_p2
        v = res.omega.hemisphere_values()
        nl = ops_p2.lumped_mass * v ** 2.0
        cho = sla.cho_factor(ops_p2.mass)
        nl_dual = math.sqrt(nl @ sla.cho_solve(cho, nl))
        assert res.residual <= 1e-4 * nl_dual

    def test_boundary_rate(self, grid24, profile_p2):
        phis = grid24.nodes[grid24.hemisphere_mask]
        ratio = profile_p2.omega.hemisphere_values() / np.sin(phis) ** P2.s
        c = max(ratio.max(), 1.0 / ratio.min())
        assert c <= 10.0

    def test_agrees_with_fixed_point(self, profile_p2, ops_p2):
        v = profile_p2.omega.hemisphere_values()
        fp = _fixed_point(ops_p2, 2.0,
                          np.full(24, constant_profile(P2, 2.0)))
        diff = v - fp
        rel = math.sqrt(diff @ ops_p2.mass @ diff) \
            / math.sqrt(v @ ops_p2.mass @ v)
        assert rel <= 0.01

    def test_deterministic(self):
        grid = LatGrid.make(2, 12)
        a = hemisphere_profile(P2, 2.0, grid, seed=7)
        b = hemisphere_profile(P2, 2.0, grid, seed=7)
        assert np.array_equal(a.omega.values, b.omega.values)

    def test_nontrivial_just_below_second_exponent(self, grid24):
        res = hemisphere_profile(P2, 2.1, grid24)
        assert res.classification == "nontrivial"
        assert res.energy < 0.0

    def test_sphere_profile(self):
        grid = LatGrid.make(3, 12)
        res = hemisphere_profile(P3, 1.45, grid)
        assert res.classification == "nontrivial"
        assert res.energy < 0.0
        assert np.max(res.omega.values) <= constant_profile(P3, 1.45)

    def test_rejects_p_outside_window(self, grid24):
        with pytest.raises(ValueError, match="no positive separable"):
            hemisphere_profile(P2, 2.2, grid24)
        with pytest.raises(ValueError, match="admissible range"):
            hemisphere_profile(P2, 1.7, grid24)


class TestNonexistenceCheck:
    def test_trivial_above_second_exponent(self, grid24):
        assert nonexistence_check(P2, 2.3, grid24) == "trivial"
        assert nonexistence_check(P2, 2.5, grid24) == "trivial"

    def test_trivial_at_second_exponent(self, grid24):
        assert nonexistence_check(P2, 2.2, grid24) == "trivial"

    def test_lambda_at_least_one_in_regime(self, grid24):
        for p in (2.2, 2.5, 3.0):
            ops = assemble_operator_pair(grid24, P2, profile_beta(P2, p))
            assert principal_eigenpair(ops).lambda_ >= 1.0 - 1e-2

    def test_rejects_p_outside_regime(self, grid24):
        with pytest.raises(ValueError, match="applies for p in"):
            nonexistence_check(P2, 2.1, grid24)
        with pytest.raises(ValueError, match="applies for p in"):
            nonexistence_check(P2, 4.0, grid24)
