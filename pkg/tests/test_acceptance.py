"""Acceptance suite: quantitative targets with their independent oracles."""

import io
import time

import numpy as np
import pytest

from minflux import cli
from minflux import isotopy as iso
from minflux import labyrinth as lb
from minflux import loops as lp
from minflux import nullquadric as nq
from minflux import riemann as rm
from minflux import sprays as sp
from minflux import weierstrass as wz
from minflux.weierstrass import LaurentSeries


def catenoid_loop_family(n=256, n_t=4):
    """Catenoid boundary loops rotated slowly in the 1-2 plane."""
    x = np.arange(n) / n
    w = np.exp(2j * np.pi * x)
    base = 2j * np.pi * np.stack(
        [0.5 * (1.0 / w - w), 0.5j * (1.0 / w + w), np.ones(n, complex)], axis=1
    )
    out = []
    for k in range(n_t):
        t = 0.1 * k
        c, s = np.cos(t), np.sin(t)
        v = base.copy()
        v[:, 0] = c * base[:, 0] - s * base[:, 1]
        v[:, 1] = s * base[:, 0] + c * base[:, 1]
        out.append(v)
    return out


def random_immersed_circle(seed, n=512):
    """A smooth immersed closed curve: a round circle plus low harmonics."""
    rng = np.random.default_rng(seed)
    x = np.arange(n) / n
    curve = np.stack(
        [np.cos(2 * np.pi * x), np.sin(2 * np.pi * x), np.zeros(n)], axis=1
    )
    for k in range(2, 5):
        amp = 0.08 / k**2
        for c in range(3):
            curve[:, c] += amp * (
                rng.normal() * np.cos(2 * np.pi * k * x)
                + rng.normal() * np.sin(2 * np.pi * k * x)
            )
    return curve


def spinor_loop(seed, n=64):
    """A loop in the punctured quadric from random nonvanishing spinors."""
    rng = np.random.default_rng(seed)

    def block():
        c = 0.08 * (rng.normal(size=5) + 1j * rng.normal(size=5))
        c[2] += 1.0  # dominant middle coefficient keeps the block nonzero
        return LaurentSeries(c, -2)

    m = rm.LaurentMap(block(), block(), parity=int(seed % 2))
    x = np.exp(2j * np.pi * np.arange(n) / n)
    return m(x)


class TestCriterion1CatenoidFlux:
    def test_flux_matches_residue_oracle(self):
        t0 = time.monotonic()
        cat = wz.catalog("catenoid")
        measured = wz.flux(cat, 1.0)
        # oracle: residues of the components of f * theta/dz
        g = LaurentSeries([1.0], 1)
        inv_g = LaurentSeries([1.0], -1)
        over_z = LaurentSeries([1.0], -1)
        comps = (
            (0.5 * inv_g + (-0.5) * g) * over_z,
            (0.5j * inv_g + 0.5j * g) * over_z,
            over_z,
        )
        oracle = np.array([(2j * np.pi * c.residue).imag for c in comps])
        assert np.allclose(oracle, [0.0, 0.0, 2.0 * np.pi], atol=0)
        assert np.max(np.abs(measured - oracle)) <= 1e-10
        assert time.monotonic() - t0 < 1.0


@pytest.fixture(scope="module")
def flux_zero_run():
    cat = wz.MinimalImmersion(wz.catalog("catenoid"))
    t0 = time.monotonic()
    fam = iso.flux_to_zero(cat)
    rep = iso.verify(fam)
    return cat, fam, rep, time.monotonic() - t0


class TestCriterion2FluxToZero:
    def test_endpoint_flux(self, flux_zero_run):
        _, fam, _, _ = flux_zero_run
        assert np.linalg.norm(fam.flux_trace[-1]) <= 1e-8

    def test_conformality_over_all_samples(self, flux_zero_run):
        _, fam, rep, _ = flux_zero_run
        assert len(fam) == 64
        assert rep.max_conformality <= 1e-9

    def test_real_period_for_all_t(self, flux_zero_run):
        _, _, rep, _ = flux_zero_run
        assert rep.max_real_period <= 1e-9

    def test_u0_exactly_the_input(self, flux_zero_run):
        cat, fam, _, _ = flux_zero_run
        assert fam.members[0] is cat.data
        z = cat.data.grid(n_r=8, n_th=32)
        assert np.array_equal(fam.members[0].f(z), cat.data.f(z))

    def test_null_curve_periods(self, flux_zero_run):
        _, fam, _, _ = flux_zero_run
        assert np.linalg.norm(fam.periods[-1]) <= 1e-8
        _, defect = fam.null_curve()
        assert defect <= 1e-8

    def test_runtime(self, flux_zero_run):
        _, _, _, elapsed = flux_zero_run
        assert elapsed < 60.0


class TestCriterion3PrescribeFlux:
    def test_target_met_with_residual_suite(self):
        t0 = time.monotonic()
        cat = wz.MinimalImmersion(wz.catalog("catenoid"))
        p = np.array([0.0, 0.0, 4.0 * np.pi])
        fam = iso.prescribe_flux(cat, p)
        rep = iso.verify(fam)
        assert np.linalg.norm(fam.flux_trace[-1] - p) <= 1e-8
        assert rep.ok
        assert rep.max_conformality <= 1e-9
        assert rep.max_real_period <= 1e-9
        assert time.monotonic() - t0 < 60.0


class TestCriterion4ZeroPeriodPairs:
    def test_twenty_seeded_circles(self):
        t0 = time.monotonic()
        for seed in range(20):
            curve = random_immersed_circle(seed)
            want = seed % 2
            pair = lp.make_zero_period_pair(curve, spin_class=want)
            orth, norm = pair.residuals()
            assert orth.max() <= 1e-10
            assert norm.max() <= 1e-10
            assert np.linalg.norm(pair.g.mean(axis=0)) <= 1e-10
            assert nq.pi1_class(pair.hprime + 1j * pair.g) == want
        assert time.monotonic() - t0 < 30.0


class TestCriterion5SprayDomination:
    def test_jacobian_sigma_min(self):
        family = catenoid_loop_family()
        spray = sp.build_spray(family, lp.Segment(0.0, 0.25))
        for k in range(spray.n_t):
            J = sp.period_jacobian(spray, k)
            sv = np.linalg.svd(J, compute_uv=False)
            assert sv[min(J.shape) - 1] > 1e-4

    def test_fixed_third_preserved_and_dominating(self):
        family = catenoid_loop_family()
        spray = sp.build_spray_fixed_third(family, lp.Segment(0.0, 0.25))
        w = (0.05 + 0.02j) * np.ones(spray.dim_w, dtype=complex)
        for k in range(spray.n_t):
            out = spray.deform(k, w)[0]
            assert np.array_equal(out[:, 2], family[k][:, 2])
            J = sp.period_jacobian(spray, k)[:2]
            sv = np.linalg.svd(J, compute_uv=False)
            assert sv[1] > 1e-6  # full rank on components 1-2


@pytest.fixture(scope="module")
def complete_step_run():
    t0 = time.monotonic()
    res = lb.complete_step(wz.catalog("catenoid"), core=(0.8, 1.3), delta=0.5)
    return res, time.monotonic() - t0


class TestCriterion6CompleteStep:
    def test_invariants_unchanged(self, complete_step_run):
        res, _ = complete_step_run
        assert res.report["third_component_deviation"] <= 1e-10
        assert res.report["flux_deviation"] <= 1e-10

    def test_distances(self, complete_step_run):
        res, _ = complete_step_run
        assert res.final_distance > 1.0 / res.delta
        assert np.all(res.distances > res.tau - res.delta)

    def test_pointwise_and_path_estimates(self, complete_step_run):
        res, _ = complete_step_run
        passes = res.report["passes"]
        assert passes["est1"] and passes["est2"] and passes["est3"]
        assert res.ok

    def test_runtime(self, complete_step_run):
        _, elapsed = complete_step_run
        assert elapsed < 300.0


class TestCriterion7LabyrinthCombinatorics:
    @pytest.mark.parametrize("N", [2, 3, 5])
    def test_counts_disjointness_clearances(self, N):
        end = lb.AnnulusEnd(0, 0.2, 2.0)
        band = lb.AnnulusBand(0, 0, 0.3, 1.9, end, (0.5, 1.0))
        lab = lb.build_labyrinth(band, N)
        assert len(lab.sets) == 2 * N**2
        los = np.array([s.rad_lo for s in lab.sets])
        his = np.array([s.rad_hi for s in lab.sets])
        assert np.all(los[:-1] > his[1:])  # pairwise disjoint intervals
        gaps = los[:-1] - his[1:]
        assert gaps == pytest.approx(1.0 / (2.0 * N**3), abs=1e-15)


class TestCriterion8Classification:
    def test_corpus_stability(self):
        for seed in range(10):
            loop = spinor_loop(seed, n=64)
            cls = nq.pi1_class(loop)
            assert cls == seed % 2
            # stability under trigonometric resampling 64 -> 1024
            assert nq.pi1_class(lp.resample(loop, 1024)) == cls
            # stability under 1e-3 quadric-preserving perturbations
            rng = np.random.default_rng(1000 + seed)
            x = np.arange(64) / 64.0
            pert = nq.flow(loop, "scaling", 1e-3)
            for kind in ("rotation_12", "rotation_23"):
                amp = 1e-3 * np.cos(2 * np.pi * x + rng.uniform(0, 2 * np.pi))
                pert = nq.flow(pert, kind, amp)
            assert nq.pi1_class(pert) == cls
            # the class of a doubled loop vanishes
            assert nq.pi1_class(np.concatenate([loop, loop])) == 0

    def test_classify_driver_consistent(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text("[initial]\ncatalog = catenoid\n")
        outputs = set()
        for seed in range(1, 6):
            out = io.StringIO()
            code = cli.main(
                ["classify", "--config", str(cfg), "--seed", str(seed)],
                stdout=out, stderr=io.StringIO(),
            )
            assert code == 0
            outputs.add(out.getvalue())
        assert len(outputs) == 1
        assert "class 1" in outputs.pop()


class TestCriterion9OracleEquivalences:
    def test_flux_refinement_study(self):
        cat = wz.catalog("catenoid")
        f1 = wz.flux(cat, wz.circle(1.0, 512))
        f2 = wz.flux(cat, wz.circle(1.0, 2048))
        assert np.max(np.abs(f1 - f2)) <= 1e-12

    def test_verification_refinement_study(self, flux_zero_run):
        _, fam, rep, _ = flux_zero_run
        rep2 = iso.verify(fam, resolution=1)
        assert abs(rep2.max_conformality - rep.max_conformality) <= 1e-9
        assert np.max(np.abs(rep2.flux_table - rep.flux_table)) <= 1e-9

    def test_two_path_integration(self):
        # homotopic paths around opposite sides of the hole agree because
        # the real period vanishes
        cat = wz.catalog("catenoid")
        a, b = 1.0 + 0j, -1.2 + 0j
        u_up = wz.integrate_immersion(cat, a, np.zeros(3), b, path=[1.3j])
        u_down = wz.integrate_immersion(cat, a, np.zeros(3), b, path=[-1.3j])
        assert np.linalg.norm(u_up - u_down) <= 1e-8

    def test_domination_oracle_is_svd(self):
        family = catenoid_loop_family(n_t=2)
        spray = sp.build_spray(family, lp.Segment(0.0, 0.25))
        J = sp.period_jacobian(spray, 0)
        sv = np.linalg.svd(J, compute_uv=False)
        assert np.linalg.matrix_rank(J, tol=1e-8) == min(J.shape)
        assert sv[min(J.shape) - 1] > 1e-4
