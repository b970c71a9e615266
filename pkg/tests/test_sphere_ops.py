"""Tests for spherical kernels, latitude grids, and operator assembly."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
import scipy.linalg as sla

from fracsing.params import FracParams, beta_function, normalization_constant
from fracsing.sphere_ops import (
    CircleAssembler, KernelTable, LatGrid, SphereAssembler, SphericalField,
    assemble_operator_pair, b_const, b_kernel, b_table, c35,
    gagliardo_norm_sq, radial_kernel_K, radial_table, sphere_area,
    zonal_reduce, _b_kernel_kappa, _basis_segment_arrays, _pair_tensors,
    _radial_kernel_kappa)

P2 = FracParams(2, 0.75)
P26 = FracParams(2, 0.6)
P25 = FracParams(2, 0.5)
P23 = FracParams(2, 0.3)
P3 = FracParams(3, 0.6)

# reference values computed with the mpmath integrators in tools/oracles.py
K_SPOTS = [
    (P2, -1.0, 0.266666666666667),
    (P2, 0.0, 0.666666666666667),
    (P2, 0.9, 12.8270869587821),
    (P2, 0.999, 4131.69739617909),
    (P26, 0.5, 1.82073816785398),
    (P3, 0.0, 0.630568617837285),
    (P3, 0.95, 61.4740995377932),
]

B_SPOTS = [
    (P2, 1.25, 0.0, 0.479671491832362),
    (P2, 1.25, 0.5, 0.684785577091184),
    (P2, 1.5, -0.5, 0.908093100575915),
    (P2, 1.5, 0.9, 2.65169098301498),
    (P2, 0.75, 0.0, 0.0682929326643885),
    (P3, 2.4, 0.0, 0.700695829396999),
    (P3, 2.4, 0.9, 2.54991181703506),
    (P26, 1.1, 0.3, 0.230343537889688),
]

C35_SPOTS = [
    (P2, 1.5, 0.73966877979716),
    (P2, 0.75, 0.065378101253319),
    (P2, 1.25, 0.38397818709036),
    (P2, 1.6, 0.97948720266837),
    (P2, 1.0, 0.18491719494929),
    (P3, 2.4, 0.70134746873835),
]

B_CONST_SPOTS = [
    (P25, 0.15915494309189534),
    (P2, 0.1057855469152043),
    (P3, 0.076932636320673279),
]


class TestRadialKernel:
    def test_frozen_spots(self):
        for p, u, ref in K_SPOTS:
            assert_allclose(radial_kernel_K(p, u), ref, rtol=1e-12)

    def test_vectorized_matches_scalar(self):
        us = np.array([-1.0, -0.3, 0.0, 0.5, 0.99])
        vals = radial_kernel_K(P2, us)
        for u, v in zip(us, vals):
            assert v == radial_kernel_K(P2, float(u))

    def test_monotone_in_u(self):
        us = np.linspace(-1.0, 0.9999, 300)
        vals = radial_kernel_K(P3, us)
        assert np.all(np.diff(vals) > 0)

    def test_singularity_asymptote(self):
        # K(u) * kappa^{N-1+2s} -> 2 int_0^inf (1+x^2)^{-q} dx
        for p in (P2, P3):
            kap = 1e-6
            u = 1.0 - 0.5 * kap * kap
            limit = b_const(p) / normalization_constant(p)
            scaled = radial_kernel_K(p, u) * kap ** (p.n + 2 * p.s - 1)
            assert abs(scaled - limit) < 0.05 * limit

    def test_rejects_u_out_of_range(self):
        with pytest.raises(ValueError, match="singular"):
            radial_kernel_K(P2, 1.0)
        with pytest.raises(ValueError, match="singular"):
            radial_kernel_K(P2, np.array([0.0, 1.5]))
        with pytest.raises(ValueError, match="inner product"):
            radial_kernel_K(P2, -1.0 - 1e-9)

    def test_branch_seam_continuity(self):
        for p in (P2, P3):
            lo = _radial_kernel_kappa(p, np.array([1.0 - 1e-12]))[0]
            hi = _radial_kernel_kappa(p, np.array([1.0 + 1e-12]))[0]
            assert abs(lo - hi) < 1e-10 * hi


class TestBKernel:
    def test_frozen_spots(self):
        for p, beta, u, ref in B_SPOTS:
            assert_allclose(b_kernel(p, beta, u), ref, rtol=1e-12)

    def test_vanishes_identically_at_critical_beta(self):
        us = np.linspace(-1.0, 0.99999, 500)
        for p in (P2, P26, P3):
            assert np.max(np.abs(b_kernel(p, p.n - 2 * p.s, us))) <= 1e-9

    def test_sign_trichotomy(self):
        us = np.linspace(-1.0, 0.999, 50)
        for p in (P2, P3):
            crit = p.n - 2 * p.s
            assert np.all(b_kernel(p, crit + 0.2, us) > 0)
            assert np.all(b_kernel(p, crit - 0.2, us) < 0)

    @given(st.floats(min_value=-0.9, max_value=0.9),
           st.floats(min_value=0.6, max_value=1.9))
    @settings(max_examples=25, deadline=None)
    def test_strictly_increasing_in_beta(self, u, beta):
        lo = b_kernel(P2, beta, u)
        hi = b_kernel(P2, beta + 0.05, u)
        assert hi > lo

    def test_divergence_rate_generic(self):
        # |B| ~ kappa^{3-N-2s} when N+2s > 3
        for p, beta in ((P3, 2.4), (P2, 1.5)):
            kk = np.geomspace(1e-6, 1e-4, 9)
            slope = np.polyfit(np.log(kk),
                               np.log(np.abs(_b_kernel_kappa(p, beta, kk))), 1)[0]
            target = 3.0 - p.n - 2.0 * p.s
            assert abs(slope - target) < 0.1 * abs(target)

    def test_logarithmic_rate_at_half(self):
        # N + 2s = 3: B grows like log(1/kappa), so equal steps in
        # log(kappa) produce equal increments
        kk = np.geomspace(1e-12, 1e-4, 9)
        vals = _b_kernel_kappa(P25, 1.2, kk)
        incs = np.diff(vals)
        assert np.all(incs < 0)
        assert np.ptp(incs) < 0.02 * np.abs(incs).mean()

    def test_bounded_when_subcritical(self):
        # N + 2s < 3: B stays bounded as u -> 1
        vals = _b_kernel_kappa(P23, 1.0, np.geomspace(1e-12, 1e-6, 7))
        assert np.all(np.isfinite(vals))
        assert np.ptp(vals) < 1e-2 * np.abs(vals).mean()

    def test_rejects_beta_out_of_domain(self):
        with pytest.raises(ValueError, match="divergent"):
            b_kernel(P2, 2.0, 0.0)
        with pytest.raises(ValueError, match="divergent"):
            b_kernel(P2, -1.5, 0.0)


class TestKernelTables:
    def test_radial_table_matches_direct(self):
        for p in (P2, P3):
            kk = np.geomspace(2e-9, 2.0, 257)
            direct = _radial_kernel_kappa(p, kk)
            assert_allclose(radial_table(p)(kk), direct, rtol=1e-10)

    def test_b_table_matches_direct(self):
        for p, beta in ((P2, 1.25), (P3, 2.4)):
            kk = np.geomspace(2e-9, 2.0, 257)
            direct = _b_kernel_kappa(p, beta, kk)
            assert_allclose(b_table(p, beta)(kk), direct, rtol=1e-10)

    def test_below_range_uses_scaled_asymptote(self):
        kk = np.geomspace(1e-30, 1e-9, 30)
        direct = _radial_kernel_kappa(P2, kk)
        assert_allclose(radial_table(P2)(kk), direct, rtol=1e-8)

    def test_table_caching(self):
        assert radial_table(P2) is radial_table(FracParams(2, 0.75))

    def test_domain_guards(self):
        table = radial_table(P2)
        with pytest.raises(ValueError, match="positive"):
            table(np.array([0.0, 1.0]))
        with pytest.raises(ValueError, match="table domain"):
            table(2.5)


class TestZonalReduce:
    def test_constant_function(self):
        assert_allclose(zonal_reduce(P3, lambda u: np.ones_like(u)),
                        4.0 * math.pi, rtol=1e-12)
        assert_allclose(zonal_reduce(P2, lambda u: np.ones_like(u)),
                        2.0 * math.pi, rtol=1e-12)

    def test_quadratic_moment(self):
        assert_allclose(zonal_reduce(P3, lambda u: u ** 2),
                        4.0 * math.pi / 3.0, rtol=1e-12)

    def test_rejects_non_finite_integrand(self):
        with pytest.raises(ValueError, match="non-finite"):
            zonal_reduce(P3, lambda u: np.where(u > 0.0, np.nan, 1.0))

    def test_sphere_area_values(self):
        assert_allclose(sphere_area(1), 2.0, rtol=1e-15)
        assert_allclose(sphere_area(2), 2.0 * math.pi, rtol=1e-15)
        assert_allclose(sphere_area(3), 4.0 * math.pi, rtol=1e-15)


class TestC35:
    def test_frozen_spots(self):
        for p, beta, ref in C35_SPOTS:
            assert_allclose(c35(p, beta), ref, rtol=1e-10)

    def test_monotone_increasing(self):
        betas = np.linspace(0.55, 1.95, 15)
        vals = [c35(P2, b) for b in betas]
        assert np.all(np.diff(vals) > 0)

    def test_vanishes_toward_critical_beta(self):
        assert c35(P2, 0.5 + 1e-4) < 1e-3

    def test_domain_validation(self):
        with pytest.raises(ValueError, match="must lie in"):
            c35(P2, 0.5)
        with pytest.raises(ValueError, match="must lie in"):
            c35(P2, 2.0)


class TestBConst:
    def test_frozen_spots(self):
        for p, ref in B_CONST_SPOTS:
            assert_allclose(b_const(p), ref, rtol=1e-12)

    def test_matches_beta_function_closed_form(self):
        # 2 int_0^inf (1+x^2)^{-q} dx = B(1/2, q - 1/2)
        for p in (P2, P26, P3, P23):
            closed = normalization_constant(p) * beta_function(0.5, p.q - 0.5)
            assert_allclose(b_const(p), closed, rtol=1e-10)


class TestLatGrid:
    def test_structure(self):
        grid = LatGrid.make(2, 12)
        assert grid.nodes.size == 25
        assert grid.m == 12
        assert np.all(np.diff(grid.nodes) > 0)
        assert_allclose(grid.nodes, -grid.nodes[::-1], atol=1e-15)
        assert grid.hemisphere_mask.sum() == 12
        assert not grid.hemisphere_mask[12]

    def test_weights_sum_to_sphere_area(self):
        for n in (2, 3):
            grid = LatGrid.make(n, 16)
            w = grid.weights()
            assert np.all(w > 0)
            assert abs(w.sum() - sphere_area(n)) <= 1e-8

    def test_refine_doubles(self):
        grid = LatGrid.make(3, 8, grading=1.5)
        fine = grid.refine()
        assert fine.m == 16
        assert fine.n == 3
        assert fine.grading == 1.5

    def test_too_coarse_raises(self):
        with pytest.raises(ValueError, match="at least 3"):
            LatGrid.make(2, 2)

    def test_bad_dimension_raises(self):
        with pytest.raises(ValueError, match="dimension"):
            LatGrid.make(4, 10)

    def test_partition_of_unity(self):
        grid = LatGrid.make(2, 9)
        phis = np.linspace(-math.pi / 2, math.pi / 2, 101)
        h = grid.basis_matrix(phis)
        assert_allclose(h.sum(axis=0), 1.0, rtol=0, atol=1e-14)
        assert np.all(h >= 0.0) and np.all(h <= 1.0)

    def test_mass_matrix_consistency(self):
        grid = LatGrid.make(2, 10)
        mass = grid.mass_matrix()
        assert_allclose(mass, mass.T, atol=1e-16)
        assert_allclose(mass.sum(axis=1), grid.weights(), rtol=1e-13)
        assert np.all(sla.eigvalsh(mass) > 0)

    def test_mass_matrix_dual_route(self):
        # per-cell Gauss vs exact circle segment overlap
        grid = LatGrid.make(2, 8)
        segs = _basis_segment_arrays(grid)
        _, corr = _pair_tensors(segs, segs, np.array([0.0]), False, True)
        assert_allclose(corr[:, :, 0], grid.mass_matrix(), atol=1e-13)


class TestSphericalField:
    def test_hemisphere_roundtrip(self):
        grid = LatGrid.make(2, 6)
        vals = np.arange(1.0, 7.0)
        f = SphericalField.from_hemisphere(grid, vals)
        assert f.hemisphere
        assert_allclose(f.hemisphere_values(), vals)
        assert np.all(f.values[:7] == 0.0)

    def test_rejects_shape_mismatch(self):
        grid = LatGrid.make(2, 6)
        with pytest.raises(ValueError, match="node count"):
            SphericalField(grid, np.ones(5))

    def test_rejects_nonzero_below_equator(self):
        grid = LatGrid.make(2, 6)
        with pytest.raises(ValueError, match="vanish"):
            SphericalField(grid, np.ones(13), hemisphere=True)


@pytest.fixture(scope="module")
def circle12():
    grid = LatGrid.make(2, 12)
    return grid, CircleAssembler(P2, grid)


@pytest.fixture(scope="module")
def sphere12():
    grid = LatGrid.make(3, 12)
    return grid, SphereAssembler(P3, grid)


class TestCircleAssembly:
    def test_a_form_invariants(self, circle12):
        grid, asm = circle12
        pair = asm.pair(1.25)
        a_full = pair.full_a_form
        assert np.array_equal(a_full, a_full.T)
        one = np.ones(a_full.shape[0])
        assert np.max(np.abs(a_full @ one)) <= 1e-12 * np.max(np.abs(a_full))
        assert np.all(sla.eigvalsh(pair.a_form) > 0)

    def test_l_form_positive_definite_in_range(self, circle12):
        grid, asm = circle12
        pair = asm.pair(1.25)
        assert np.all(sla.eigvalsh(pair.l_form) > 0)
        assert_allclose(pair.l_form, pair.l_form.T, atol=1e-16)

    def test_l_rowsum_matches_c35(self, circle12):
        grid, asm = circle12
        for beta in (0.8, 1.25, 1.7):
            pair = asm.pair(beta)
            one = np.ones(grid.nodes.size)
            ratios = (pair.full_l_form @ one) / pair.full_lumped_mass
            assert_allclose(ratios, c35(P2, beta), rtol=1e-8)

    def test_l_bounded_by_c35_mass(self, circle12):
        grid, asm = circle12
        pair = asm.pair(1.25)
        bound = c35(P2, 1.25)
        rng = np.random.default_rng(5)
        for _ in range(50):
            w = rng.normal(size=pair.l_form.shape[0])
            assert abs(w @ pair.l_form @ w) <= bound * (w @ pair.mass @ w) * (1 + 1e-9)

    def test_exact_eigenpair_at_special_beta(self, circle12):
        grid, asm = circle12
        pair = asm.pair(P2.n - P2.s)
        evals, evecs = sla.eigh(pair.l_form, pair.a_form)
        lam = 1.0 / evals[-1]
        assert abs(lam - 1.0) < 5e-3
        psi = np.sin(grid.nodes[grid.hemisphere_mask]) ** P2.s
        v = evecs[:, -1]
        v *= np.sign(v[np.argmax(np.abs(v))])
        mass = pair.mass
        v /= math.sqrt(v @ mass @ v)
        psi /= math.sqrt(psi @ mass @ psi)
        diff = v - psi
        assert math.sqrt(diff @ mass @ diff) < 1e-2

    def test_pair_deterministic(self, circle12):
        grid, asm = circle12
        p1 = asm.pair(1.3)
        p2 = asm.pair(1.3)
        assert np.array_equal(p1.a_form, p2.a_form)
        assert np.array_equal(p1.l_form, p2.l_form)

    def test_wrapper_matches_assembler(self, circle12):
        grid, asm = circle12
        via_wrapper = assemble_operator_pair(grid, P2, 1.25)
        assert np.array_equal(via_wrapper.l_form, asm.pair(1.25).l_form)

    def test_constant_field_has_zero_energy(self, circle12):
        grid, asm = circle12
        pair = asm.pair(1.25)
        one = np.ones(grid.nodes.size)
        scale = np.max(np.abs(pair.full_a_form))
        assert abs(one @ pair.full_a_form @ one) <= 1e-12 * scale

    def test_export_csv_roundtrip(self, circle12, tmp_path):
        grid, asm = circle12
        pair = asm.pair(1.25)
        paths = pair.export_csv(tmp_path)
        assert sorted(paths) == ["a_form", "l_form", "mass"]
        back = np.loadtxt(paths["a_form"], delimiter=",")
        assert_allclose(back, pair.a_form, rtol=1e-15)

    def test_dimension_guards(self):
        with pytest.raises(ValueError, match="circle"):
            CircleAssembler(P2, LatGrid.make(3, 8))
        with pytest.raises(ValueError, match="circle"):
            CircleAssembler(P3, LatGrid.make(2, 8))

    def test_too_coarse_grid_raises(self):
        nodes = np.array([-0.4, 0.0, 0.4])
        with pytest.raises(ValueError, match="at least 3"):
            CircleAssembler(P2, LatGrid(2, nodes, 2.0))


class TestSphereAssembly:
    def test_a_form_invariants(self, sphere12):
        grid, asm = sphere12
        pair = asm.pair(2.4)
        a_full = pair.full_a_form
        assert np.array_equal(a_full, a_full.T)
        one = np.ones(a_full.shape[0])
        assert np.max(np.abs(a_full @ one)) <= 1e-12 * np.max(np.abs(a_full))
        assert np.all(sla.eigvalsh(pair.a_form) > 0)

    def test_l_form_positive_definite(self, sphere12):
        grid, asm = sphere12
        pair = asm.pair(2.4)
        assert np.all(sla.eigvalsh(pair.l_form) > 0)

    def test_l_rowsum_matches_c35(self, sphere12):
        grid, asm = sphere12
        pair = asm.pair(2.4)
        one = np.ones(grid.nodes.size)
        ratios = (pair.full_l_form @ one) / pair.full_lumped_mass
        assert_allclose(ratios, c35(P3, 2.4), rtol=1e-3)

    def test_exact_eigenpair_at_special_beta(self, sphere12):
        grid, asm = sphere12
        pair = asm.pair(P3.n - P3.s)
        evals, evecs = sla.eigh(pair.l_form, pair.a_form)
        lam = 1.0 / evals[-1]
        assert abs(lam - 1.0) < 5e-3
        psi = np.sin(grid.nodes[grid.hemisphere_mask]) ** P3.s
        v = evecs[:, -1]
        v *= np.sign(v[np.argmax(np.abs(v))])
        mass = pair.mass
        v /= math.sqrt(v @ mass @ v)
        psi /= math.sqrt(psi @ mass @ psi)
        diff = v - psi
        assert math.sqrt(diff @ mass @ diff) < 1e-2

    def test_dimension_guards(self):
        with pytest.raises(ValueError, match="S\\^2"):
            SphereAssembler(P3, LatGrid.make(2, 8))


class TestGagliardo:
    def test_zero_and_constant_fields(self, circle12):
        grid, _ = circle12
        assert gagliardo_norm_sq(P2, grid, np.zeros(grid.nodes.size)) == 0.0
        const = 3.0 * np.ones(grid.nodes.size)
        norm = gagliardo_norm_sq(P2, grid, const)
        assert_allclose(norm, 9.0 * 2.0 * math.pi, rtol=1e-12)

    def test_quadratic_scaling(self, circle12):
        grid, _ = circle12
        rng = np.random.default_rng(3)
        f = rng.normal(size=grid.nodes.size)
        assert_allclose(gagliardo_norm_sq(P2, grid, 2.0 * f),
                        4.0 * gagliardo_norm_sq(P2, grid, f), rtol=1e-12)

    def test_circle_only(self):
        grid = LatGrid.make(3, 6)
        with pytest.raises(ValueError, match="circle"):
            gagliardo_norm_sq(P3, grid, np.ones(grid.nodes.size))

    def test_energy_sandwich(self, circle12):
        # discrete A-energy vs W^{s,2} norm: uniformly comparable
        grid, asm = circle12
        pair = asm.pair(1.25)
        idx = grid.hemisphere_mask
        rng = np.random.default_rng(11)
        ratios = []
        for _ in range(20):
            w = rng.normal(size=int(idx.sum()))
            full = np.zeros(grid.nodes.size)
            full[idx] = w
            ratios.append((w @ pair.a_form @ w)
                          / gagliardo_norm_sq(P2, grid, full))
        c = max(max(ratios), 1.0 / min(ratios))
        assert min(ratios) > 0
        assert c <= 50.0
