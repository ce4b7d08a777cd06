"""Tests for circular domains, homology bases and the loop extension."""

import numpy as np
import pytest

from minflux import loops as lp
from minflux import nullquadric as nq
from minflux import riemann as rm
from minflux import weierstrass as wz
from minflux.errors import ApproximationBudgetExceeded, VanishingOnDomain


def catenoid_restriction(n=256):
    cat = wz.catalog("catenoid")
    chart = rm.homology_basis(rm.annulus())[0]
    return rm.restrict_to_curve(cat.f, chart, theta=cat.theta, n=n)


class TestCircularDomain:
    def test_annulus_rank_and_contains(self):
        dom = rm.annulus()
        assert dom.rank == 1
        assert dom.contains(np.array([1.0 + 0j]))[0]
        assert not dom.contains(np.array([0.1 + 0j]))[0]
        assert not dom.contains(np.array([3.0 + 0j]))[0]

    def test_hole_outside_rejected(self):
        with pytest.raises(ValueError):
            rm.CircularDomain(rm.Disk(0.0, 1.0), (rm.Disk(2.0, 0.5),))

    def test_overlapping_holes_rejected(self):
        with pytest.raises(ValueError):
            rm.CircularDomain(
                rm.Disk(0.0, 5.0), (rm.Disk(-0.4, 0.5), rm.Disk(0.4, 0.5))
            )

    def test_grid_inside_domain(self):
        dom = rm.CircularDomain(
            rm.Disk(0.0, 4.0), (rm.Disk(-1.5, 0.4), rm.Disk(1.5, 0.4))
        )
        grid = dom.grid(n_r=16, n_th=64)
        assert grid.size > 0 and np.all(dom.contains(grid))


class TestHomologyBasis:
    def test_annulus_midpoint_radius(self):
        chart = rm.homology_basis(rm.annulus(0.5, 2.0))[0]
        assert chart.center == 0.0
        assert np.isclose(chart.radius, 1.0)  # geometric mean of 0.5 and 2

    def test_two_holes_disjoint_charts(self):
        dom = rm.CircularDomain(
            rm.Disk(0.0, 6.0), (rm.Disk(-2.0, 0.3), rm.Disk(2.0, 0.3))
        )
        charts = rm.homology_basis(dom)
        assert len(charts) == 2
        a, b = charts
        assert abs(a.center - b.center) > a.radius + b.radius

    def test_winding_matrix_is_identity(self):
        dom = rm.CircularDomain(
            rm.Disk(0.0, 6.0), (rm.Disk(-2.0, 0.3), rm.Disk(2.0, 0.3))
        )
        charts = rm.homology_basis(dom)
        for i, ch in enumerate(charts):
            pts = ch.points(256)
            for j, h in enumerate(dom.holes):
                assert rm.winding_number(pts, h.center) == (1 if i == j else 0)

    def test_crowded_domains_still_get_disjoint_circles(self):
        # the geometric-mean radius keeps basis circles disjoint whenever
        # the domain itself is valid, even with nearly touching holes
        rng = np.random.default_rng(12)
        for _ in range(25):
            gap = 10.0 ** rng.uniform(-6, -1)
            r1, r2 = rng.uniform(0.1, 0.6, size=2)
            d = r1 + r2 + gap
            dom = rm.CircularDomain(
                rm.Disk(0.0, 4.0 * d), (rm.Disk(-d / 2, r1), rm.Disk(d / 2, r2))
            )
            a, b = rm.homology_basis(dom)
            assert abs(a.center - b.center) > a.radius + b.radius

    def test_empty_domain_no_charts(self):
        assert rm.homology_basis(rm.CircularDomain(rm.Disk(0.0, 1.0))) == []


class TestWindingNumber:
    def test_basic(self):
        z = np.exp(2j * np.pi * np.arange(128) / 128)
        assert rm.winding_number(z, 0.0) == 1
        assert rm.winding_number(z, 2.0) == 0
        assert rm.winding_number(np.concatenate([z, z]), 0.0) == 2


class TestRestrictToCurve:
    def test_constant_triple_dz(self):
        chart = rm.homology_basis(rm.annulus())[0]
        F = np.tile(np.array([0, 1j, 1]), (256, 1))
        loop = rm.restrict_to_curve(F, chart, theta="dz")
        # integral of a constant against dz over a closed curve vanishes
        assert np.allclose(lp.period(loop), 0.0, atol=1e-13)

    def test_constant_triple_dz_over_z(self):
        chart = rm.homology_basis(rm.annulus())[0]
        F = np.tile(np.array([0, 1j, 1]), (256, 1))
        loop = rm.restrict_to_curve(F, chart, theta="dz/z")
        assert np.allclose(lp.period(loop), 2j * np.pi * np.array([0, 1j, 1]))

    def test_catenoid_period(self):
        loop = catenoid_restriction()
        assert np.allclose(lp.period(loop), [0, 0, 2j * np.pi], atol=1e-12)

    def test_refinement_stability(self):
        p1 = lp.period(catenoid_restriction(256))
        p2 = lp.period(catenoid_restriction(512))
        assert np.linalg.norm(p1 - p2) < 1e-12

    def test_bad_theta(self):
        chart = rm.homology_basis(rm.annulus())[0]
        with pytest.raises(ValueError):
            rm.restrict_to_curve(np.zeros((64, 3)), chart, theta="dz^2")


class TestRungeExtend:
    def test_catenoid_exact_recovery(self):
        dom = rm.annulus()
        cat = wz.catalog("catenoid")
        chart = rm.homology_basis(dom)[0]
        loop = catenoid_restriction()
        ext = rm.runge_extend(loop, dom)
        assert ext.parity == 1
        assert ext.meta["degree"] == 16
        assert ext.meta["sup_error"] <= 1e-12
        # off-sample circle agreement with the generating data
        z = chart.points(777)
        fac = chart.dz_dzeta(z) / z
        target = cat.f(z) * fac[:, None]
        assert np.max(np.abs(ext(z) - target)) <= 1e-8
        # whole-annulus grid agreement
        grid = dom.grid(n_r=32, n_th=128)
        fac_g = chart.dz_dzeta(grid) / grid
        assert np.max(np.abs(ext(grid) - cat.f(grid) * fac_g[:, None])) <= 1e-6

    def test_extension_is_exactly_null(self):
        dom = rm.annulus()
        ext = rm.runge_extend(catenoid_restriction(), dom)
        grid = dom.grid(n_r=16, n_th=64)
        vals = ext(grid)
        scale = np.max(np.abs(vals)) ** 2
        assert np.max(nq.null_residual(vals)) <= 1e-12 * scale

    def test_period_matches_quadrature(self):
        dom = rm.annulus()
        chart = rm.homology_basis(dom)[0]
        loop = catenoid_restriction()
        ext = rm.runge_extend(loop, dom)
        z = chart.points(1024)
        quad = (ext(z) * chart.dz_dzeta(z)[:, None]).mean(axis=0)
        assert np.linalg.norm(ext.period() - quad) < 1e-10

    def test_idempotence(self):
        dom = rm.annulus()
        chart = rm.homology_basis(dom)[0]
        ext = rm.runge_extend(catenoid_restriction(), dom)
        loop2 = lp.PeriodicPath(ext(chart.points(256)))
        ext2 = rm.runge_extend(loop2, dom)
        assert ext2.parity == ext.parity
        pad = max(len(ext.a.coeffs), len(ext2.a.coeffs))

        def coeffs(series, k_min):
            out = np.zeros(2 * pad, dtype=complex)
            lo = series.k_min - k_min
            out[lo : lo + len(series.coeffs)] = series.coeffs
            return out

        k0 = min(ext.a.k_min, ext2.a.k_min)
        # extension of an extension reproduces the spinor blocks up to sign
        d_plus = np.max(np.abs(coeffs(ext.a, k0) - coeffs(ext2.a, k0)))
        d_minus = np.max(np.abs(coeffs(ext.a, k0) + coeffs(ext2.a, k0)))
        assert min(d_plus, d_minus) < 1e-10

    def test_perturbed_loop_extends(self):
        # analytic perturbation: rotation with a degree-1 trig profile
        loop = catenoid_restriction().values.copy()
        x = np.arange(loop.shape[0]) / loop.shape[0]
        t = 0.05 * np.cos(2 * np.pi * x)
        c, s = np.cos(t), np.sin(t)
        v0, v1 = loop[:, 0].copy(), loop[:, 1].copy()
        loop[:, 0] = c * v0 - s * v1
        loop[:, 1] = s * v0 + c * v1
        ext = rm.runge_extend(lp.PeriodicPath(loop), rm.annulus())
        assert ext.meta["sup_error"] <= 1e-6
        assert ext.parity == 1

    def test_pclass_mismatch_rejected(self):
        with pytest.raises(ValueError):
            rm.runge_extend(catenoid_restriction(), rm.annulus(), pclass=0)

    def test_pclass_match_accepted(self):
        ext = rm.runge_extend(catenoid_restriction(), rm.annulus(), pclass=1)
        assert ext.parity == 1

    def test_budget_exceeded_on_rough_loop(self):
        loop = catenoid_restriction().values.copy()
        x = np.arange(loop.shape[0]) / loop.shape[0]
        t = 0.5 * lp.raised_cosine(x, 0.3, 0.04)  # only C^1: slow decay
        c, s = np.cos(t), np.sin(t)
        v0, v1 = loop[:, 0].copy(), loop[:, 1].copy()
        loop[:, 0] = c * v0 - s * v1
        loop[:, 1] = s * v0 + c * v1
        with pytest.raises(ApproximationBudgetExceeded):
            rm.runge_extend(lp.PeriodicPath(loop), rm.annulus(), tol=1e-13)

    def test_vanishing_extension_rejected(self):
        # spinor blocks with a common zero at z = 0.8 inside the annulus
        a = wz.LaurentSeries([-0.8, 1.0], 0)  # z - 0.8
        b = wz.LaurentSeries([-0.8j, 1j], 0)  # i(z - 0.8)
        m = rm.LaurentMap(a, b)
        loop = lp.PeriodicPath(m(rm.homology_basis(rm.annulus())[0].points(256)))
        grid = np.array([0.8 + 0j, 1.0 + 0j])
        with pytest.raises(VanishingOnDomain):
            rm.runge_extend(loop, rm.annulus(), grid=grid)

    def test_rank_guard(self):
        dom = rm.CircularDomain(rm.Disk(0.0, 2.0))
        with pytest.raises(ValueError):
            rm.runge_extend(catenoid_restriction(), dom)


class TestLaurentMap:
    def test_parity_one_single_valued_and_null(self):
        rng = np.random.default_rng(5)
        a = wz.LaurentSeries(rng.normal(size=5) + 1j * rng.normal(size=5), -2)
        b = wz.LaurentSeries(rng.normal(size=4) + 1j * rng.normal(size=4), -1)
        m = rm.LaurentMap(a, b, parity=1)
        z = np.exp(2j * np.pi * np.arange(128) / 128)
        vals = m(z)
        scale = max(np.max(np.abs(vals)) ** 2, 1.0)
        assert np.max(nq.null_residual(vals)) <= 1e-12 * scale
        # single valued: closing the circle returns the same value
        assert np.allclose(m(z[:1]), m(z[:1] * np.exp(2j * np.pi)))

    def test_components_match_callable(self):
        rng = np.random.default_rng(6)
        a = wz.LaurentSeries(rng.normal(size=3), -1)
        b = wz.LaurentSeries(rng.normal(size=3), 0)
        for parity in (0, 1):
            m = rm.LaurentMap(a, b, parity=parity)
            z = np.array([0.7 + 0.1j, 1.4 - 0.3j])
            comp = np.stack([c(z) for c in m.components()], axis=-1)
            assert np.allclose(comp, m(z), atol=1e-13)

    def test_period_is_residue(self):
        a = wz.LaurentSeries([1.0, 0.5], -1)
        b = wz.LaurentSeries([0.3, 2.0], 0)
        m = rm.LaurentMap(a, b)
        z = np.exp(2j * np.pi * np.arange(512) / 512)
        quad = (m(z) * (2j * np.pi * z)[:, None]).mean(axis=0)
        assert np.linalg.norm(m.period() - quad) < 1e-12
