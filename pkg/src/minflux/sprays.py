"""Period-dominating sprays of loops and the control continuation.

A spray deforms a family of quadric loops through compositions of
quadric-preserving flows, each switched on by a smooth bump on the circle,
so that the derivative of the loop periods with respect to the control
coefficients is surjective.  The continuation stage then follows a smooth
ramp of period targets, solving for the controls by damped Newton steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nullquadric as nq
from .errors import (
    ContinuationStalled,
    DegenerateLoop,
    DominationFailed,
    LeftDomain,
    ThirdComponentVanishes,
)
from .loops import PeriodicPath, Segment, nondegenerate_on, raised_cosine

#: Trust radius of the control ball.
RADIUS_W = 0.5

#: Finite-difference step for period Jacobians.
H_FD = 1e-5 * RADIUS_W

#: Width of the raised-cosine bump profiles on the circle.
BUMP_WIDTH = 0.05

#: Smallest acceptable singular value of the period Jacobian.
SIGMA_MIN = 1e-4

#: Tolerance on period residuals in the continuation.
TOL_PERIOD = 1e-9


def _as_family(sigma_t):
    """Normalize input to a list (curves) of lists (t) of (N, 3) arrays."""
    if isinstance(sigma_t, (PeriodicPath, np.ndarray)):
        sigma_t = [sigma_t]
    first = sigma_t[0]
    if isinstance(first, (PeriodicPath, np.ndarray)):
        sigma_t = [sigma_t]  # single curve

    def arr(p):
        return np.asarray(p.values if isinstance(p, PeriodicPath) else p, complex)

    return [[arr(p) for p in curve] for curve in sigma_t]


def _rotate_components(values, i, j, t):
    out = values.copy()
    c, s = np.cos(t), np.sin(t)
    out[:, i] = c * values[:, i] - s * values[:, j]
    out[:, j] = s * values[:, i] + c * values[:, j]
    return out


@dataclass
class LoopSpray:
    """Flow-composition spray over a sampled loop family.

    base[j][k] is the loop on curve j at time sample k.  controls[j] is a
    list of (flow kind, profile array) pairs acting on curve j only; the
    identity at w = 0 and the locality outside the bump supports are exact.
    """

    base: list
    controls: list
    radius_w: float = RADIUS_W
    fixed_third: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def n_curves(self):
        return len(self.base)

    @property
    def n_t(self):
        return len(self.base[0])

    @property
    def dim_w(self):
        return sum(len(c) for c in self.controls)

    def _split(self, w):
        w = np.asarray(w, dtype=complex)
        out, pos = [], 0
        for c in self.controls:
            out.append(w[pos : pos + len(c)])
            pos += len(c)
        return out

    def deform(self, t_index, w):
        """Deformed loops at time sample t_index; exact identity at w = 0."""
        parts = self._split(w)
        out = []
        for j, (curve, ctrls) in enumerate(zip(self.base, self.controls)):
            vals = curve[t_index].copy()
            for (kind, prof), wj in zip(ctrls, parts[j]):
                if wj == 0:
                    continue
                t = wj * prof
                if self.fixed_third:
                    # multiply the Gauss map by e^(t); the third component
                    # and the product (sigma1 - i sigma2)(sigma1 + i sigma2)
                    # are untouched, so the loop stays exactly on the quadric
                    u = (vals[:, 0] - 1j * vals[:, 1]) * np.exp(-t)
                    v = (-vals[:, 0] - 1j * vals[:, 1]) * np.exp(t)
                    vals[:, 0] = 0.5 * (u - v)
                    vals[:, 1] = 0.5j * (u + v)
                elif kind == "scaling":
                    vals = np.exp(t)[:, None] * vals
                else:
                    i, k = int(kind[-2]) - 1, int(kind[-1]) - 1
                    vals = _rotate_components(vals, i, k, t)
            out.append(vals)
        return out

    def periods(self, t_index, w):
        """Loop periods per curve, stacked to shape (n_curves, 3)."""
        return np.stack([v.mean(axis=0) for v in self.deform(t_index, w)])


def period_jacobian(spray, t_index, h_fd=H_FD):
    """Central finite-difference Jacobian of the periods at w = 0.

    Rows are the period components per curve (all three, or the first two
    for fixed-third sprays); columns are the complex controls.
    """
    rows = 2 if spray.fixed_third else 3
    m = spray.dim_w
    J = np.empty((rows * spray.n_curves, m), dtype=complex)
    for col in range(m):
        dw = np.zeros(m, dtype=complex)
        dw[col] = h_fd
        plus = spray.periods(t_index, dw)[:, :rows].ravel()
        minus = spray.periods(t_index, -dw)[:, :rows].ravel()
        J[:, col] = (plus - minus) / (2.0 * h_fd)
    return J


def _certify(spray, sigma_min=SIGMA_MIN):
    worst = np.inf
    for k in range(spray.n_t):
        s = np.linalg.svd(period_jacobian(spray, k), compute_uv=False)
        worst = min(worst, float(s[-1]))
        if worst < sigma_min:
            return worst
    return worst


def _make_controls(segments, n, rng, kinds):
    controls = []
    for seg in segments:
        ctrls = []
        span = max(seg.length - 2 * BUMP_WIDTH, 1e-6)
        for i, kind in enumerate(kinds):
            frac = (i + 0.5) / len(kinds) + 0.2 * rng.uniform(-1, 1) / len(kinds)
            center = (seg.alpha + BUMP_WIDTH + span * frac) % 1.0
            prof = raised_cosine(np.arange(n) / n, center, BUMP_WIDTH / 2.0)
            ctrls.append((kind, prof))
        controls.append(ctrls)
    return controls


def _build(sigma_t, segments, kinds, fixed_third, seed, max_retries=5):
    base = _as_family(sigma_t)
    if isinstance(segments, Segment):
        segments = [segments]
    if len(segments) != len(base):
        raise ValueError("need one segment per curve")
    for curve, seg in zip(base, segments):
        for vals in curve:
            if not nondegenerate_on(PeriodicPath(vals), seg):
                raise DegenerateLoop("loop family is degenerate on its segment")
            if fixed_third:
                x = np.arange(vals.shape[0]) / vals.shape[0]
                third = np.abs(vals[seg.contains(x), 2])
                if third.size == 0 or float(third.min()) < 1e-10:
                    raise ThirdComponentVanishes(
                        "third component vanishes on a control segment"
                    )
    n = base[0][0].shape[0]
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(max_retries):
        controls = _make_controls(segments, n, rng, kinds)
        spray = LoopSpray(base, controls, fixed_third=fixed_third)
        sv = _certify(spray)
        if sv >= SIGMA_MIN:
            spray.meta["sigma_min"] = sv
            return spray
        worst = max(worst, sv)
    raise DominationFailed(
        f"period Jacobian sigma_min {worst:.3g} below {SIGMA_MIN:g} after retries"
    )


def build_spray(sigma_t, segments, seed=17):
    """Period-dominating spray with three flow controls per curve."""
    return _build(
        sigma_t, segments, ("rotation_12", "rotation_13", "rotation_23"),
        fixed_third=False, seed=seed,
    )


def build_spray_fixed_third(sigma_t, segments, seed=19):
    """Spray deforming only the first two components, third kept exactly.

    Controls multiply the Gauss map by unit exponential factors; two
    controls per curve dominate the two free period components.
    """
    return _build(
        sigma_t, segments, ("gauss", "gauss"), fixed_third=True, seed=seed
    )


@dataclass(frozen=True)
class PeriodTargets:
    """Per-curve period targets on the t-grid, shape (n_t, n_curves, 3)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim == 2:
            v = v[:, None, :]
        object.__setattr__(self, "values", v)


def solve_w(spray, targets, tol=TOL_PERIOD, max_newton=30, tikhonov=1e-12):
    """Continuation for the control path w(t) tracking the period targets.

    Starts from w(0) = 0 (targets must already be met there) and tracks the
    ramp with damped Newton steps, sub-stepping on stalls.  The rows of the
    period system follow period_jacobian.  Raises LeftDomain when |w|
    exceeds the trust radius, ContinuationStalled when sub-stepping fails.
    """
    tv = targets.values if isinstance(targets, PeriodTargets) else targets
    tv = PeriodTargets(tv).values
    rows = 2 if spray.fixed_third else 3
    n_t = spray.n_t
    if tv.shape[0] != n_t or tv.shape[1] != spray.n_curves:
        raise ValueError("targets shape does not match the spray")
    m = spray.dim_w

    def residual(k, w):
        return (spray.periods(k, w)[:, :rows] - tv[k, :, :rows]).ravel()

    def jac(k, w):
        J = np.empty((rows * spray.n_curves, m), dtype=complex)
        for col in range(m):
            dw = np.zeros(m, dtype=complex)
            dw[col] = H_FD
            plus = spray.periods(k, w + dw)[:, :rows].ravel()
            minus = spray.periods(k, w - dw)[:, :rows].ravel()
            J[:, col] = (plus - minus) / (2.0 * H_FD)
        return J

    def solve_step(k, target_res_w, depth):
        w = target_res_w.copy()
        f = residual(k, w)
        for _ in range(max_newton):
            r = float(np.linalg.norm(f))
            if r < tol:
                return w
            J = jac(k, w)
            A = J.conj().T @ J + tikhonov * np.eye(m)
            step = -np.linalg.solve(A, J.conj().T @ f)
            cap = 0.25 * spray.radius_w
            ns = float(np.linalg.norm(step))
            if ns > cap:
                step *= cap / ns
            lam = 1.0
            while lam > 1e-8:
                cand = w + lam * step
                fc = residual(k, cand)
                if np.linalg.norm(fc) < r:
                    w, f = cand, fc
                    break
                lam *= 0.5
            else:
                return None
        return w if float(np.linalg.norm(residual(k, w))) < tol else None

    w = np.zeros(m, dtype=complex)
    r0 = float(np.linalg.norm(residual(0, w)))
    if r0 > tol:
        raise ValueError(f"targets not met at t = 0 with w = 0 (residual {r0:.3g})")
    path = [w.copy()]
    for k in range(1, n_t):
        nxt = solve_step(k, w, 0)
        if nxt is None:
            # sub-step through intermediate targets between samples
            ok = False
            for halves in range(1, 7):
                steps = 2**halves
                cur = w.copy()
                good = True
                for s in range(1, steps + 1):
                    frac = s / steps
                    blend = (1 - frac) * tv[k - 1] + frac * tv[k]
                    saved = tv[k].copy()
                    tv[k] = blend
                    cur2 = solve_step(k, cur, 0)
                    tv[k] = saved
                    if cur2 is None:
                        good = False
                        break
                    cur = cur2
                if good:
                    nxt, ok = cur, True
                    break
            if not ok:
                raise ContinuationStalled(
                    f"continuation stalled at step {k} of {n_t}"
                )
        if float(np.max(np.abs(nxt))) > spray.radius_w:
            raise LeftDomain(
                f"|w| = {np.max(np.abs(nxt)):.3g} exceeds {spray.radius_w} at step {k}"
            )
        w = nxt
        path.append(w.copy())
    return np.array(path)
