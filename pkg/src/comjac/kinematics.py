"""Relativistic two-body kinematics in center-of-momentum variables.

Units: c = 1 and unit rest mass, so a momentum ``p`` has energy
``p0 = sqrt(1 + |p|^2)``.  Vectors are plain 3-tuples of ``mpmath.mpf``.

All functions evaluate at the working precision of the innermost
:func:`precision` block (200 bits when no block is active).
"""

from __future__ import annotations

import contextvars
import functools
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterator, NamedTuple, Sequence

import mpmath
from mpmath import mp, mpf

DEFAULT_PRECISION = 200

_ACTIVE_PREC: contextvars.ContextVar[int | None] = contextvars.ContextVar(
    "comjac_precision", default=None
)

Vec3 = tuple  # (x, y, z), entries mpf or float


class DegenerateInputError(ValueError):
    """Input sits on a singular set (p = q, p + q = 0, ...) of a formula."""


class DegenerateBasisError(DegenerateInputError):
    """The frame built from p x w is undefined (p parallel to w, or p = 0)."""


class InconsistencyError(ArithmeticError):
    """A mathematically impossible value appeared; precision was insufficient."""


@contextmanager
def precision(bits: int = DEFAULT_PRECISION) -> Iterator[int]:
    """Run the enclosed block at ``bits`` of binary precision."""
    bits = int(bits)
    if bits < 53:
        raise ValueError(f"precision_bits must be >= 53, got {bits}")
    token = _ACTIVE_PREC.set(bits)
    try:
        with mp.workprec(bits):
            yield bits
    finally:
        _ACTIVE_PREC.reset(token)


def current_precision() -> int:
    return _ACTIVE_PREC.get() or DEFAULT_PRECISION


def at_precision(fn: Callable) -> Callable:
    """Evaluate ``fn`` at the active precision, or at ``prec=`` if given."""

    @functools.wraps(fn)
    def wrapper(*args, prec: int | None = None, **kwargs):
        bits = prec or current_precision()
        if _ACTIVE_PREC.get() == bits and mp.prec == bits:
            return fn(*args, **kwargs)
        with precision(bits):
            return fn(*args, **kwargs)

    return wrapper


def degeneracy_threshold(bits: int | None = None):
    """2^-(bits - 16): inputs closer than this to a singular set are rejected."""
    bits = bits or current_precision()
    return mpf(2) ** (16 - bits)


# -- vector helpers; generic over mpf and float ------------------------------


def vec(v: Sequence) -> Vec3:
    if len(v) != 3:
        raise ValueError(f"expected a 3-vector, got {len(v)} components")
    return (mpf(v[0]), mpf(v[1]), mpf(v[2]))


def dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def cross(a, b):
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def add(a, b):
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


def sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def scale(k, a):
    return (k * a[0], k * a[1], k * a[2])


def norm(a, sqrt=mpmath.sqrt):
    return sqrt(dot(a, a))


def direction(w) -> Vec3:
    """Renormalize a (nearly) unit vector at the working precision."""
    w = vec(w)
    n = norm(w)
    if abs(n - 1) > mpf(2) ** -20:
        raise ValueError(f"w must be a unit vector, |w| = {mpmath.nstr(n, 8)}")
    return (w[0] / n, w[1] / n, w[2] / n)


def unit(a, sqrt=mpmath.sqrt):
    n = norm(a, sqrt)
    if n == 0:
        raise DegenerateInputError("cannot normalize the zero vector")
    return (a[0] / n, a[1] / n, a[2] / n)


class Invariants(NamedTuple):
    """Scalars shared by every formula for a pair (p, q).

    ``S`` is p0 + q0 + sqrt(s); ``gm1`` is gamma - 1 in the
    cancellation-free form |p+q|^2 / (sqrt(s) S).
    """

    p0: object
    q0: object
    g: object
    s: object
    rs: object
    S: object
    P: tuple
    Pn2: object
    gm1: object


def pair_invariants(p, q, sqrt=mpmath.sqrt, tol=None) -> Invariants:
    """Compute energies, g, s, gamma - 1 for the pair without cancellation.

    ``g^2 = |p-q|^2 - (p0-q0)^2`` with ``p0 - q0 = (p-q).(p+q)/(p0+q0)``,
    which stays accurate as p -> q.  ``s`` is taken as g^2 + 4.
    """
    p0 = sqrt(1 + dot(p, p))
    q0 = sqrt(1 + dot(q, q))
    P = add(p, q)
    dpq = sub(p, q)
    dn2 = dot(dpq, dpq)
    de = dot(dpq, P) / (p0 + q0)
    g2 = dn2 - de * de
    if g2 < 0:
        # |p0-q0| <= |p-q| always; only rounding can flip the sign
        if tol is not None and -g2 > tol * (1 + dn2):
            raise InconsistencyError(f"negative g^2 = {g2}")
        g2 = g2 * 0
    g = sqrt(g2)
    s = g2 + 4
    rs = sqrt(s)
    S = p0 + q0 + rs
    Pn2 = dot(P, P)
    return Invariants(p0, q0, g, s, rs, S, P, Pn2, Pn2 / (rs * S))


def _inv(p, q) -> Invariants:
    return pair_invariants(p, q, mpmath.sqrt, tol=mpf(2) ** (24 - mp.prec))


# -- public operations --------------------------------------------------------


@at_precision
def energy(p) -> mpf:
    p = vec(p)
    return mpmath.sqrt(1 + dot(p, p))


@at_precision
def relative_momentum(p, q) -> mpf:
    """g = sqrt(2(p0 q0 - p.q - 1)), evaluated in cancellation-free form."""
    return _inv(vec(p), vec(q)).g


@at_precision
def total_energy_sq(p, q) -> mpf:
    """s = 2(p0 q0 - p.q + 1) (no cancellation: every term is >= 0 or small)."""
    p, q = vec(p), vec(q)
    return 2 * (energy(p) * energy(q) - dot(p, q) + 1)


@at_precision
def lorentz_gamma(p, q) -> mpf:
    p, q = vec(p), vec(q)
    return (energy(p) + energy(q)) / mpmath.sqrt(total_energy_sq(p, q))


@at_precision
def gamma_minus_one(p, q) -> mpf:
    """gamma - 1 = |p+q|^2 / (sqrt(s) (p0 + q0 + sqrt(s))), never negative."""
    return _inv(vec(p), vec(q)).gm1


@at_precision
def post_collisional(p, q, w) -> tuple[Vec3, Vec3]:
    """Post-collisional momenta (p', q') for scattering direction ``w``.

    The (gamma-1)/|p+q|^2 factor is written as 1/(sqrt(s) S), so the frame
    p + q = 0 needs no special case: there p' = (p+q)/2 + (g/2) w.
    """
    p, q, w = vec(p), vec(q), direction(w)
    inv = _inv(p, q)
    P = inv.P
    proj = dot(P, w) / (inv.rs * inv.S)
    half_g = inv.g / 2
    kick = tuple(half_g * (w[i] + P[i] * proj) for i in range(3))
    half_P = scale(mpf(1) / 2, P)
    return add(half_P, kick), sub(half_P, kick)


@at_precision
def scattering_k(p, q) -> Vec3:
    """The vector k whose direction defines the scattering angle.

    k = -(p+q)(p0-q0)/sqrt(s) + (p-q) + (gamma-1)(p+q)((p+q).(p-q))/|p+q|^2
    """
    p, q = vec(p), vec(q)
    inv = _inv(p, q)
    P = inv.P
    dpq = sub(p, q)
    pd = dot(P, dpq)
    de = pd / (inv.p0 + inv.q0)
    coef = -de / inv.rs + pd / (inv.rs * inv.S)
    return tuple(dpq[i] + coef * P[i] for i in range(3))


@at_precision
def scattering_cos(p, q, w) -> mpf:
    k = scattering_k(p, q)
    kn = norm(k)
    if kn < degeneracy_threshold():
        raise DegenerateInputError("|k| below threshold: p and q coincide")
    return dot(k, direction(w)) / kn


def angle_condition(p, q, w, prec: int | None = None) -> bool:
    """True when cos(scattering angle) >= 0."""
    return scattering_cos(p, q, w, prec=prec) >= 0


@at_precision
def moller_velocity(p, q) -> mpf:
    inv = _inv(vec(p), vec(q))
    return inv.g * inv.rs / (inv.p0 * inv.q0)


@at_precision
def u_map(theta, p, q, w) -> Vec3:
    """u = theta p' + (1 - theta) p."""
    theta = mpf(theta)
    if not 0 <= theta <= 1:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    p = vec(p)
    pp, _ = post_collisional(p, q, w)
    return tuple(theta * pp[i] + (1 - theta) * p[i] for i in range(3))


@dataclass(frozen=True)
class ConfigPoint:
    """A point (theta, p, q, w) of the 10-dimensional parameter space."""

    theta: mpf
    p: Vec3
    q: Vec3
    w: Vec3

    @classmethod
    def make(cls, theta, p, q, w, normalize: bool = False) -> "ConfigPoint":
        theta = mpf(theta)
        if not 0 <= theta <= 1:
            raise ValueError(f"theta must lie in [0, 1], got {theta}")
        w = unit(vec(w)) if normalize else direction(w)
        return cls(theta, vec(p), vec(q), w)

    def as_floats(self) -> tuple[float, tuple, tuple, tuple]:
        f = lambda v: tuple(float(x) for x in v)  # noqa: E731
        return float(self.theta), f(self.p), f(self.q), f(self.w)

