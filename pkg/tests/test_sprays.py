"""Tests for period-dominating sprays and the control continuation."""

import numpy as np
import pytest

from minflux import loops as lp
from minflux import sprays as sp
from minflux.errors import (
    ContinuationStalled,
    DegenerateLoop,
    LeftDomain,
    ThirdComponentVanishes,
)


def catenoid_loop(n=256):
    x = np.arange(n) / n
    w = np.exp(2j * np.pi * x)
    f = np.stack(
        [0.5 * (1.0 / w - w), 0.5j * (1.0 / w + w), np.ones(n, complex)], axis=1
    )
    return 2j * np.pi * f


def rotated_family(n_t=4):
    base = catenoid_loop()
    out = []
    for k in range(n_t):
        t = 0.1 * k
        c, s = np.cos(t), np.sin(t)
        v = base.copy()
        v[:, 0] = c * base[:, 0] - s * base[:, 1]
        v[:, 1] = s * base[:, 0] + c * base[:, 1]
        out.append(v)
    return out


SEG = lp.Segment(0.0, 0.25)


@pytest.fixture(scope="module")
def spray():
    return sp.build_spray(rotated_family(), SEG)


@pytest.fixture(scope="module")
def spray_fixed():
    return sp.build_spray_fixed_third(rotated_family(), SEG)


class TestBuildSpray:
    def test_identity_at_zero_is_exact(self, spray):
        w = np.zeros(spray.dim_w, dtype=complex)
        for k in range(spray.n_t):
            out = spray.deform(k, w)
            assert np.array_equal(out[0], spray.base[0][k])

    def test_locality_outside_segment(self, spray):
        w = 0.1 * np.ones(spray.dim_w, dtype=complex)
        n = spray.base[0][0].shape[0]
        x = np.arange(n) / n
        support = np.zeros(n, dtype=bool)
        for _, prof in spray.controls[0]:
            support |= prof != 0.0
        assert np.all(support <= SEG.contains(x))  # bumps sit in the segment
        out = spray.deform(0, w)[0]
        assert np.array_equal(out[~support], spray.base[0][0][~support])

    def test_deformation_stays_on_quadric(self, spray):
        from minflux import nullquadric as nq

        w = (0.2 + 0.1j) * np.ones(spray.dim_w, dtype=complex)
        vals = spray.deform(0, w)[0]
        scale = np.max(np.abs(vals)) ** 2
        assert np.max(nq.null_residual(vals)) <= 1e-10 * scale

    def test_jacobian_dominates_at_every_t(self, spray):
        for k in range(spray.n_t):
            J = sp.period_jacobian(spray, k)
            sv = np.linalg.svd(J, compute_uv=False)
            assert sv[-1] > sp.SIGMA_MIN

    def test_degenerate_loop_rejected(self):
        flat = np.tile(np.array([1.0, 1j, 0.0]), (256, 1))
        with pytest.raises(DegenerateLoop):
            sp.build_spray([[flat]], SEG)


class TestFixedThird:
    def test_third_component_untouched(self, spray_fixed):
        w = (0.3 - 0.2j) * np.ones(spray_fixed.dim_w, dtype=complex)
        out = spray_fixed.deform(0, w)[0]
        assert np.array_equal(out[:, 2], spray_fixed.base[0][0][:, 2])

    def test_quadric_preserved_exactly(self, spray_fixed):
        from minflux import nullquadric as nq

        w = (0.3 - 0.2j) * np.ones(spray_fixed.dim_w, dtype=complex)
        vals = spray_fixed.deform(0, w)[0]
        scale = np.max(np.abs(vals)) ** 2
        assert np.max(nq.null_residual(vals)) <= 1e-12 * scale

    def test_rank_on_first_two_components(self, spray_fixed):
        for k in range(spray_fixed.n_t):
            J = sp.period_jacobian(spray_fixed, k)
            assert J.shape[0] == 2
            sv = np.linalg.svd(J, compute_uv=False)
            assert sv[-1] > sp.SIGMA_MIN

    def test_vanishing_third_rejected(self):
        # spinors a = 1, b = sin(2 pi x): third component 2ab has a zero
        # inside the segment while the loop stays nondegenerate there
        n = 256
        x = np.arange(n) / n
        b = np.sin(2 * np.pi * x).astype(complex)
        bad = np.stack([1.0 - b * b, 1j * (1.0 + b * b), 2.0 * b], axis=1)
        with pytest.raises(ThirdComponentVanishes):
            sp.build_spray_fixed_third([[bad]], SEG)


class TestSolveW:
    def test_trivial_targets_zero_path(self, spray):
        targets = np.stack(
            [spray.periods(k, np.zeros(spray.dim_w)) for k in range(spray.n_t)]
        )
        path = sp.solve_w(spray, sp.PeriodTargets(targets))
        assert path.shape == (spray.n_t, spray.dim_w)
        assert np.all(path == 0)

    def test_small_ramp_tracked(self, spray):
        rng = np.random.default_rng(3)
        w_star = 0.02 * (rng.normal(size=spray.dim_w) + 1j * rng.normal(size=spray.dim_w))
        fracs = np.linspace(0.0, 1.0, spray.n_t)
        targets = np.stack(
            [spray.periods(k, f * w_star) for k, f in enumerate(fracs)]
        )
        path = sp.solve_w(spray, sp.PeriodTargets(targets))
        res = max(
            float(np.linalg.norm(spray.periods(k, path[k]) - targets[k]))
            for k in range(spray.n_t)
        )
        assert res <= sp.TOL_PERIOD

    def test_targets_not_met_at_zero(self, spray):
        targets = np.stack(
            [spray.periods(k, np.zeros(spray.dim_w)) for k in range(spray.n_t)]
        )
        targets[0] += 1.0
        with pytest.raises(ValueError):
            sp.solve_w(spray, sp.PeriodTargets(targets))

    def test_unreachable_ramp_fails_cleanly(self, spray):
        targets = np.stack(
            [spray.periods(k, np.zeros(spray.dim_w)) for k in range(spray.n_t)]
        )
        targets[-1] += 50.0
        with pytest.raises((ContinuationStalled, LeftDomain)):
            sp.solve_w(spray, sp.PeriodTargets(targets))

    def test_targets_shape_normalization(self):
        flat = np.zeros((4, 3), dtype=complex)
        t = sp.PeriodTargets(flat)
        assert t.values.shape == (4, 1, 3)
