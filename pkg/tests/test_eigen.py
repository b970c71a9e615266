"""Tests for the principal eigenpair solver and the unit-lambda root."""

import dataclasses
import math

import numpy as np
import pytest
import scipy.linalg as sla
from numpy.testing import assert_allclose

from fracsing.params import FracParams
from fracsing.sphere_ops import CircleAssembler, LatGrid, SphereAssembler
from fracsing.eigen import (EigenResult, PowerIterationError,
                            find_beta_unit_lambda, lambda_sweep,
                            principal_eigenpair)

P2 = FracParams(2, 0.75)
P3 = FracParams(3, 0.6)

# reference value from the dense generalized eigensolver scipy.linalg.eigh
# on the assembled (L, A) matrices at this exact grid
LAMBDA_SPOT_M24 = 0.4343018825454187


@pytest.fixture(scope="module")
def circle24():
    grid = LatGrid.make(2, 24)
    return grid, CircleAssembler(P2, grid)


@pytest.fixture(scope="module")
def sphere12():
    grid = LatGrid.make(3, 12)
    return grid, SphereAssembler(P3, grid)


class TestPrincipalEigenpair:
    def test_matches_dense_oracle_spot(self, circle24):
        grid, asm = circle24
        res = principal_eigenpair(asm.pair(1.6))
        assert_allclose(res.lambda_, LAMBDA_SPOT_M24, rtol=1e-10)

    def test_matches_dense_oracle_fresh(self, circle24):
        grid, asm = circle24
        pair = asm.pair(1.1)
        dense = 1.0 / sla.eigh(pair.l_form, pair.a_form,
                               eigvals_only=True)[-1]
        res = principal_eigenpair(pair)
        assert_allclose(res.lambda_, dense, rtol=1e-12)

    def test_result_structure(self, circle24):
        grid, asm = circle24
        res = principal_eigenpair(asm.pair(1.25))
        assert isinstance(res, EigenResult)
        assert res.grid_size == 24
        assert res.psi.hemisphere
        v = res.psi.hemisphere_values()
        assert np.all(v > 0.0)
        assert_allclose(v @ asm.pair(1.25).mass @ v, 1.0, rtol=1e-12)
        assert res.residual < 1e-6

    def test_rayleigh_consistency(self, circle24):
        grid, asm = circle24
        pair = asm.pair(1.4)
        res = principal_eigenpair(pair)
        v = res.psi.hemisphere_values()
        rq = (v @ pair.a_form @ v) / (v @ pair.l_form @ v)
        assert abs(rq - res.lambda_) <= 1e-10 * res.lambda_

    def test_unit_lambda_at_special_beta(self, circle24):
        grid, asm = circle24
        res = principal_eigenpair(asm.pair(P2.n - P2.s))
        assert abs(res.lambda_ - 1.0) <= 1e-2
        psi_exact = np.sin(grid.nodes[grid.hemisphere_mask]) ** P2.s
        mass = asm.pair(P2.n - P2.s).mass
        psi_exact /= math.sqrt(psi_exact @ mass @ psi_exact)
        diff = res.psi.hemisphere_values() - psi_exact
        assert math.sqrt(diff @ mass @ diff) <= 2e-2

    def test_unit_lambda_sphere(self, sphere12):
        grid, asm = sphere12
        res = principal_eigenpair(asm.pair(P3.n - P3.s))
        assert abs(res.lambda_ - 1.0) <= 1e-2

    def test_rejects_beta_at_or_below_critical(self, circle24):
        grid, asm = circle24
        pair = asm.pair(0.4)  # valid for assembly, L indefinite there
        with pytest.raises(ValueError, match="N - 2s"):
            principal_eigenpair(pair)

    def test_cholesky_failure_message(self, circle24):
        grid, asm = circle24
        pair = asm.pair(1.25)
        bad = dataclasses.replace(
            pair, a_form=-np.eye(pair.a_form.shape[0]))
        with pytest.raises(ValueError, match="refine the grid"):
            principal_eigenpair(bad)

    def test_positivity_violation_detected(self, circle24):
        # rank-one kernel form whose sole eigenvector oscillates: the
        # solver must refuse it rather than report a signed eigenpair
        grid, asm = circle24
        pair = asm.pair(1.25)
        z = (-1.0) ** np.arange(pair.mass.shape[0])
        az = pair.a_form @ z
        bad = dataclasses.replace(
            pair, l_form=np.outer(az, az) / (z @ az))
        with pytest.raises(ValueError, match="positiv"):
            principal_eigenpair(bad)

    def test_stagnation_carries_history(self, circle24):
        grid, asm = circle24
        with pytest.raises(PowerIterationError) as err:
            principal_eigenpair(asm.pair(1.25), max_iter=1)
        assert len(err.value.history) == 2
        assert all(np.isfinite(err.value.history))


class TestLambdaSweep:
    def test_strictly_decreasing(self, circle24):
        grid, _ = circle24
        betas = np.linspace(0.55, 1.95, 20)
        _, lambdas, residuals = lambda_sweep(P2, grid, betas)
        assert np.all(np.diff(lambdas) < 0)
        assert np.all(residuals < 1e-6)

    def test_endpoint_blowup(self, circle24):
        grid, _ = circle24
        betas = np.array([0.505, 1.25, 1.95])
        _, lambdas, _ = lambda_sweep(P2, grid, betas)
        assert lambdas[0] >= 10.0 * lambdas[1]
        assert lambdas[2] < lambdas[1]

    def test_reproducible(self, circle24):
        grid, _ = circle24
        betas = np.linspace(0.7, 1.8, 5)
        first = lambda_sweep(P2, grid, betas)
        second = lambda_sweep(P2, grid, betas)
        for a, b in zip(first, second):
            assert np.array_equal(a, b)

    def test_bad_beta_propagates(self, circle24):
        grid, _ = circle24
        with pytest.raises(ValueError, match="divergent"):
            lambda_sweep(P2, grid, [1.0, 2.5])


class TestFindBetaUnitLambda:
    def test_circle_root_at_n_minus_s(self):
        grid = LatGrid.make(2, 12)
        beta = find_beta_unit_lambda(P2, grid)
        assert abs(beta - (P2.n - P2.s)) < 2e-3

    def test_sphere_root_at_n_minus_s(self, sphere12):
        grid, _ = sphere12
        beta = find_beta_unit_lambda(P3, grid)
        assert abs(beta - (P3.n - P3.s)) < 2e-3

    def test_error_shrinks_under_refinement(self):
        errs = []
        for m in (12, 24):
            grid = LatGrid.make(2, m)
            errs.append(abs(find_beta_unit_lambda(P2, grid) - 1.25))
        assert errs[1] < errs[0]
        assert errs[1] < 1e-6

    def test_bracket_failure_reported(self, circle24, monkeypatch):
        grid, _ = circle24
        import fracsing.eigen as eig

        class FlatSolver:
            def __init__(self, params, grid):
                self.inner = CircleAssembler(params, grid)

            def pair(self, beta):
                return self.inner.pair(1.25)

        monkeypatch.setattr(eig, "CircleAssembler", FlatSolver)
        with pytest.raises(ValueError, match="not bracketed"):
            find_beta_unit_lambda(P2, grid)
