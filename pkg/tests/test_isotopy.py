"""Tests for the end-to-end flux-steering drivers and verification."""

import copy

import numpy as np
import pytest

from minflux import isotopy as iso
from minflux import weierstrass as wz
from minflux.errors import FlatInput


@pytest.fixture(scope="module")
def catenoid():
    return wz.MinimalImmersion(wz.catalog("catenoid"))


@pytest.fixture(scope="module")
def fam_zero(catenoid):
    return iso.flux_to_zero(catenoid)


class TestFluxToZero:
    def test_endpoint_flux_vanishes(self, fam_zero):
        assert np.linalg.norm(fam_zero.flux_trace[-1]) <= 1e-8

    def test_t0_member_is_input_object(self, catenoid, fam_zero):
        assert fam_zero.members[0] is catenoid.data

    def test_flux_trace_is_linear_ramp(self, catenoid, fam_zero):
        ts = fam_zero.ts
        expect = (1.0 - ts)[:, None] * catenoid.flux[None, :]
        assert np.max(np.abs(fam_zero.flux_trace - expect)) <= 1e-9

    def test_members_are_minimal_immersions(self, fam_zero):
        for k in (1, len(fam_zero) // 2, len(fam_zero) - 1):
            imm = wz.MinimalImmersion(fam_zero.members[k])
            assert np.isfinite(imm.flux).all()

    def test_full_complex_periods_vanish_at_end(self, fam_zero):
        assert np.linalg.norm(fam_zero.periods[-1]) <= 1e-9

    def test_null_curve_emitted(self, fam_zero):
        F, defect = fam_zero.null_curve()
        assert defect <= 1e-8
        z = np.array([1.3 + 0.2j, 0.7 - 0.4j])
        vals = F(z)
        # real part integrates the endpoint immersion from the basepoint
        target = wz.integrate_immersion(
            fam_zero.members[-1], fam_zero.basepoint, np.zeros(3), z[0]
        )
        assert np.linalg.norm(vals[0].real - target) <= 1e-9
        # F vanishes at the basepoint by construction
        assert np.linalg.norm(F(np.array([fam_zero.basepoint]))[0]) <= 1e-12

    def test_zero_flux_input_constant_family(self):
        enn = wz.MinimalImmersion(wz.catalog("enneper_annulus"))
        fam = iso.flux_to_zero(enn)
        assert fam.notice
        assert all(m is enn.data for m in fam.members)
        assert np.linalg.norm(fam.flux_trace[-1]) <= 1e-12

    def test_flat_input_constant_family_with_notice(self):
        fl = wz.MinimalImmersion(wz.catalog("flat_exponential"))
        fam = iso.flux_to_zero(fl)
        assert "flat" in fam.notice
        assert np.linalg.norm(fam.flux_trace[-1]) <= 1e-12


class TestPrescribeFlux:
    def test_target_reached(self, catenoid):
        p = np.array([0.0, 0.0, 4.0 * np.pi])
        fam = iso.prescribe_flux(catenoid, p)
        assert np.linalg.norm(fam.flux_trace[-1] - p) <= 1e-8

    def test_zero_target_consistent_with_flux_to_zero(self, catenoid, fam_zero):
        fam = iso.prescribe_flux(catenoid, np.zeros(3))
        assert np.linalg.norm(fam.flux_trace[-1]) <= 1e-8
        assert (
            np.linalg.norm(fam.flux_trace[-1] - fam_zero.flux_trace[-1]) <= 1e-8
        )

    def test_current_flux_target_constant_family(self, catenoid):
        fam = iso.prescribe_flux(catenoid, catenoid.flux)
        assert all(m is catenoid.data for m in fam.members)

    def test_flat_input_with_foreign_target_rejected(self):
        fl = wz.MinimalImmersion(wz.catalog("flat_exponential"))
        with pytest.raises(FlatInput):
            iso.prescribe_flux(fl, np.array([0.0, 0.0, 1.0]))


class TestVerify:
    def test_residuals_within_thresholds(self, fam_zero):
        rep = iso.verify(fam_zero)
        assert rep.ok
        assert rep.max_conformality <= 1e-9
        assert rep.max_real_period <= 1e-9
        assert rep.min_density > 0.0
        assert not any(rep.flat_flags)
        assert set(rep.pi1_classes) == {1}

    def test_constant_family_matches_catalog_flux(self, catenoid):
        fam = iso.prescribe_flux(catenoid, catenoid.flux)
        rep = iso.verify(fam)
        assert np.max(np.abs(rep.flux_table - catenoid.flux)) <= 1e-10

    def test_monotone_under_refinement(self, fam_zero):
        r1 = iso.verify(fam_zero, resolution=1)
        r2 = iso.verify(fam_zero, resolution=2)
        floor = 1e-15
        assert r2.max_conformality <= 10 * max(r1.max_conformality, floor)
        assert r2.max_real_period <= 10 * max(r1.max_real_period, floor)

    def test_empty_family_empty_report(self):
        fam = iso.ImmersionFamily(
            ts=np.array([]), members=[], lmaps=[],
            periods=np.zeros((0, 3)), basepoint=1.0,
        )
        rep = iso.verify(fam)
        assert rep.passes == {} and rep.flux_table.shape == (0, 3)

    def test_fault_injection_flagged(self, fam_zero):
        class Corrupt:
            def __init__(self, d):
                self._d = d

            def __getattr__(self, k):
                return getattr(self._d, k)

            def f(self, z):
                v = np.array(self._d.f(z))
                v[..., 0] += 0.05
                return v

        bad = copy.copy(fam_zero)
        bad.members = list(fam_zero.members)
        bad.members[10] = Corrupt(fam_zero.members[10])
        rep = iso.verify(bad)
        assert not rep.ok
        assert not rep.passes["conformality"]
