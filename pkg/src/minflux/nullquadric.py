"""Geometry of the null quadric in C^3.

The quadric is the set of complex triples with z1^2 + z2^2 + z3^2 = 0; the
punctured quadric excludes the origin.  This module provides the standard
spinor double cover, the circle fibers of the real projection, closed-form
tangential flows, and the Z2 classifier of free homotopy classes of loops
in the punctured quadric, computed as the sign holonomy of the spinor lift.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotOnQuadric, UndersampledLoop, ZeroBase, ZeroPoint

#: Relative tolerance for membership in the quadric.
TOL_NULL = 1e-10

#: Names of the closed-form flows preserving the quadric.
FLOW_KINDS = ("rotation_12", "rotation_13", "rotation_23", "scaling")


@dataclass(frozen=True)
class NullPoint:
    """A point of the null quadric, stored as a complex triple."""

    z: tuple

    def __post_init__(self):
        z = np.asarray(self.z, dtype=complex)
        if z.shape != (3,):
            raise ValueError("NullPoint needs exactly three complex entries")
        r = null_residual(z)
        if r > TOL_NULL * max(1.0, float(np.sum(np.abs(z) ** 2))):
            raise NotOnQuadric(f"residual {r:g} exceeds tolerance")
        object.__setattr__(self, "z", tuple(z))

    def as_array(self):
        return np.asarray(self.z, dtype=complex)


@dataclass(frozen=True)
class SpinorPair:
    """Double cover coordinates (a, b); (a, b) -> (a^2-b^2, i(a^2+b^2), 2ab)."""

    a: complex
    b: complex


@dataclass(frozen=True)
class RealFiberPoint:
    """A point xi + i*eta of the quadric over a nonzero real base xi."""

    xi: tuple
    eta: tuple

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        eta = np.asarray(self.eta, dtype=float)
        nx = np.linalg.norm(xi)
        if nx == 0.0:
            raise ZeroBase("fiber over the zero vector is undefined")
        if abs(float(xi @ eta)) > TOL_NULL * nx * nx:
            raise NotOnQuadric("xi and eta are not orthogonal")
        if abs(np.linalg.norm(eta) - nx) > TOL_NULL * nx:
            raise NotOnQuadric("|eta| differs from |xi|")
        object.__setattr__(self, "xi", tuple(xi))
        object.__setattr__(self, "eta", tuple(eta))

    def as_null(self):
        return np.asarray(self.xi, dtype=float) + 1j * np.asarray(self.eta, dtype=float)


def null_residual(z):
    """Absolute value of z1^2 + z2^2 + z3^2.

    Accepts a single triple or an array of shape (..., 3); returns a scalar
    or an array of the leading shape.
    """
    z = np.asarray(z, dtype=complex)
    s = np.abs(z[..., 0] ** 2 + z[..., 1] ** 2 + z[..., 2] ** 2)
    if s.ndim == 0:
        return float(s)
    return s


def spinor_to_null(a, b=None):
    """Map spinor coordinates to the quadric.

    Accepts a SpinorPair, a pair of scalars, or broadcastable arrays.
    The image satisfies the quadric equation exactly up to rounding.
    """
    if isinstance(a, SpinorPair):
        a, b = a.a, a.b
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    a2, b2 = a * a, b * b
    out = np.stack([a2 - b2, 1j * (a2 + b2), 2.0 * a * b], axis=-1)
    return out


def _pointwise_spinor(z):
    """One spinor preimage per point, with no continuity across points.

    z: array (..., 3) on the quadric.  Returns (a, b) arrays.  The branch
    is the raw principal square root; callers fix signs afterwards.
    """
    z = np.asarray(z, dtype=complex)
    A = 0.5 * (z[..., 0] - 1j * z[..., 1])
    B = 0.5 * (-z[..., 0] - 1j * z[..., 1])
    a = np.sqrt(A)
    b = np.sqrt(B)
    # Where |A| dominates, derive b from 2ab = z3 for consistency; else derive a.
    use_a = np.abs(A) >= np.abs(B)
    safe_a = np.where(use_a & (np.abs(a) > 0), a, 1.0)
    safe_b = np.where(~use_a & (np.abs(b) > 0), b, 1.0)
    b = np.where(use_a & (np.abs(a) > 0), z[..., 2] / (2.0 * safe_a), b)
    a = np.where(~use_a & (np.abs(b) > 0), z[..., 2] / (2.0 * safe_b), a)
    return a, b


def _branch_sign(a, b):
    """Global sign making Re a >= 0, ties by Im a >= 0, falling back to b."""
    for lead in (a, b):
        if lead.real > 0:
            return 1.0
        if lead.real < 0:
            return -1.0
        if lead.imag > 0:
            return 1.0
        if lead.imag < 0:
            return -1.0
    return 1.0


def null_to_spinor(z):
    """Deterministic spinor preimage of a single quadric point.

    Raises NotOnQuadric / ZeroPoint for invalid input.  The returned pair
    has Re a >= 0, with ties broken by Im a >= 0 (then the same rule on b).
    """
    z = np.asarray(z, dtype=complex)
    nz2 = float(np.sum(np.abs(z) ** 2))
    if nz2 == 0.0:
        raise ZeroPoint("the origin has no spinor preimage in the punctured quadric")
    if null_residual(z) > TOL_NULL * max(1.0, nz2):
        raise NotOnQuadric("point is not on the quadric within tolerance")
    a, b = _pointwise_spinor(z)
    a, b = complex(a), complex(b)
    s = _branch_sign(np.complex128(a), np.complex128(b))
    return SpinorPair(s * a, s * b)


def fiber_point(xi, phi):
    """Point of the circle fiber over the real base xi, at fiber angle phi.

    The fiber over xi consists of xi + i*eta with eta orthogonal to xi and
    of the same length.  The frame of the orthogonal plane is built by
    Gram-Schmidt from the standard basis vector least aligned with xi, so
    the parametrization is deterministic.
    """
    xi = np.asarray(xi, dtype=float)
    nx = np.linalg.norm(xi)
    if nx == 0.0:
        raise ZeroBase("fiber over the zero vector is undefined")
    unit = xi / nx
    k = int(np.argmin(np.abs(unit)))
    e = np.zeros(3)
    e[k] = 1.0
    n1 = e - (e @ unit) * unit
    n1 /= np.linalg.norm(n1)
    n2 = np.cross(unit, n1)
    eta = nx * (np.cos(phi) * n1 + np.sin(phi) * n2)
    return xi + 1j * eta


def flow(z, field, t):
    """Closed-form flow of a quadric-preserving vector field.

    field is one of FLOW_KINDS; t may be complex.  Rotations act by the
    complexified rotation matrix in the named coordinate plane, scaling by
    the factor e^t.  Both preserve the quadric exactly and vectorize over
    arrays of shape (..., 3).
    """
    z = np.asarray(z, dtype=complex)
    if field == "scaling":
        return np.exp(t) * z
    if field not in FLOW_KINDS:
        raise ValueError(f"unknown flow kind {field!r}")
    i, j = int(field[-2]) - 1, int(field[-1]) - 1
    c, s = np.cos(t), np.sin(t)
    out = z.copy()
    out[..., i] = c * z[..., i] - s * z[..., j]
    out[..., j] = s * z[..., i] + c * z[..., j]
    return out


def _lift_signs(a, b):
    """Cumulative sign continuation of a sampled spinor lift.

    Returns the array of signs and the inner-product margins used to detect
    ambiguous steps.  Step k compares sample k with sample k-1.
    """
    ip = (a[1:] * np.conj(a[:-1]) + b[1:] * np.conj(b[:-1])).real
    norms = np.sqrt(np.abs(a) ** 2 + np.abs(b) ** 2)
    scale = norms[1:] * norms[:-1]
    margin = np.abs(ip) / np.where(scale > 0, scale, 1.0)
    steps = np.where(ip >= 0, 1.0, -1.0)
    signs = np.concatenate([[1.0], np.cumprod(steps)])
    return signs, margin


#: Minimal relative inner product between consecutive lifted samples.
LIFT_SAFETY = 0.2


def pi1_class(loop):
    """Z2 class of a closed loop in the punctured quadric.

    loop: array (N, 3) of samples at equispaced parameters k/N; the closing
    step from sample N-1 back to sample 0 is included.  Returns 0 when the
    spinor lift closes up and 1 when it returns with the opposite sign.
    Raises UndersampledLoop when the continuation is ambiguous.
    """
    z = np.asarray(loop, dtype=complex)
    if z.ndim != 2 or z.shape[1] != 3:
        raise ValueError("loop must have shape (N, 3)")
    nz2 = np.sum(np.abs(z) ** 2, axis=1)
    if np.any(nz2 == 0.0):
        raise ZeroPoint("loop passes through the origin")
    res = null_residual(z)
    if np.max(res / np.maximum(1.0, nz2)) > TOL_NULL:
        raise NotOnQuadric("loop leaves the quadric beyond tolerance")
    a, b = _pointwise_spinor(z)
    closed_a = np.concatenate([a, a[:1]])
    closed_b = np.concatenate([b, b[:1]])
    signs, margin = _lift_signs(closed_a, closed_b)
    if np.min(margin) < LIFT_SAFETY:
        raise UndersampledLoop(
            f"sign continuation margin {np.min(margin):.3g} below {LIFT_SAFETY}"
        )
    return 0 if signs[-1] > 0 else 1
