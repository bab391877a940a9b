"""Jacobian of p -> u = theta p' + (1 - theta) p and its determinant.

Three independent routes to ``det(du/dp)``:

* ``det_matrix``: cofactor expansion of the explicit 3x3 matrix built from the
  scalar block A..I;
* ``det_A_form``: the cubic A^3 + P2 A^2 + P3 A in the orthonormal frame
  {w, wbar, wtilde};
* ``det_K_form``: the same cubic re-expanded in K = ((p+q).w) g / (S sqrt(s)).

``fd_jacobian`` is a central-difference oracle that only calls ``u_map``.

The formula core (``_frame``, ``_a_form_terms``, ...) is written against
plain arithmetic plus a ``sqrt`` callable so it also runs on Python floats;
the zero hunt uses that as a cheap pre-screen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import mpmath
from mpmath import mp, mpf

from .kinematics import (
    DegenerateBasisError,
    DegenerateInputError,
    InconsistencyError,
    Invariants,
    at_precision,
    cross,
    current_precision,
    degeneracy_threshold,
    direction,
    dot,
    pair_invariants,
    precision,
    scattering_cos,
    u_map,
    vec,
)

FLOAT_TINY = 2.0 ** (16 - 53)


class InadmissiblePerturbationError(DegenerateInputError):
    """A finite-difference stencil would reach a singular set."""


@dataclass(frozen=True)
class BasisTriple:
    """Orthonormal frame {w, wbar, wtilde} and the projections of p and q.

    p = d w + e wbar and q = a w + b wbar + c wtilde; L = a e - b d.
    ``degenerate`` marks the fallback frame used when p x w vanishes.
    """

    w: tuple
    wbar: tuple
    wtilde: tuple
    d: object
    e: object
    a: object = None
    b: object = None
    c: object = None
    L: object = None
    degenerate: bool = False


@dataclass(frozen=True)
class ScalarCoeffs:
    A: mpf
    B: mpf
    C: mpf
    D: mpf
    E: mpf
    F: mpf
    G: mpf
    H: mpf
    I: mpf


class AForm(NamedTuple):
    A: mpf
    P2: mpf
    P3: mpf
    det: mpf


class KForm(NamedTuple):
    K: mpf
    D1: mpf
    D2: mpf
    D3: mpf
    D4: mpf
    det: mpf


class BoundRatios(NamedTuple):
    ratio_P2: mpf
    ratio_P3: mpf
    ratio_det: mpf


@dataclass(frozen=True)
class JacobianReport:
    matrix: tuple
    det_matrix: mpf
    A: mpf
    P2: mpf
    P3: mpf
    det_A_form: mpf
    K: mpf
    D1: mpf
    D2: mpf
    D3: mpf
    D4: mpf
    det_K_form: mpf
    cos_scatter: mpf | None
    precision_bits: int

    @property
    def residuals(self) -> dict[str, mpf]:
        scale = max(mpf(1), abs(self.det_A_form))
        return {
            "matrix_vs_A": abs(self.det_matrix - self.det_A_form) / scale,
            "A_vs_K": abs(self.det_A_form - self.det_K_form) / scale,
            "matrix_vs_K": abs(self.det_matrix - self.det_K_form) / scale,
        }


# -- generic formula core -----------------------------------------------------


def _least_aligned_axis(w):
    k = min(range(3), key=lambda i: abs(w[i]))
    return tuple(1 if i == k else 0 for i in range(3))


def _frame(p, q, w, sqrt, tiny, strict: bool = False) -> BasisTriple:
    d = dot(p, w)
    pxw = cross(p, w)
    e = sqrt(dot(pxw, pxw))
    if e > tiny:
        wtilde = (pxw[0] / e, pxw[1] / e, pxw[2] / e)
        wbar = cross(w, wtilde)
        degenerate = False
    else:
        if strict:
            raise DegenerateBasisError("p x w vanishes (p parallel to w or p = 0)")
        # Gram-Schmidt the standard axis least aligned with w
        ax = _least_aligned_axis(w)
        k = dot(ax, w)
        r = (ax[0] - k * w[0], ax[1] - k * w[1], ax[2] - k * w[2])
        n = sqrt(dot(r, r))
        wbar = (r[0] / n, r[1] / n, r[2] / n)
        wtilde = cross(wbar, w)  # same handedness as the generic frame
        e = e * 0
        degenerate = True
    if q is None:
        return BasisTriple(w, wbar, wtilde, d, e, degenerate=degenerate)
    a, b, c = dot(q, w), dot(q, wbar), dot(q, wtilde)
    return BasisTriple(w, wbar, wtilde, d, e, a, b, c, a * e - b * d, degenerate)


def _admissible(inv: Invariants, tiny) -> None:
    if inv.g <= tiny:
        raise DegenerateInputError("relative momentum g below threshold (p = q)")
    if inv.Pn2 <= tiny * tiny:
        raise DegenerateInputError("|p + q| below threshold")


def _scalar_block(theta, inv: Invariants, w):
    p0, q0, g, s, rs, S = inv.p0, inv.q0, inv.g, inv.s, inv.rs, inv.S
    aw = dot(inv.P, w)
    s32 = s * rs
    K = aw * g / (S * rs)
    A = 1 - theta / 2 + theta / 2 * K
    B = theta * aw / (2 * g * p0 * S * S * s32) * (
        q0 * s * S - g * g * q0 * (p0 + q0 + 2 * rs) - g * g * s
    )
    C = theta * aw / (2 * g * S * S * s32) * (-s * S + g * g * (p0 + q0 + 2 * rs))
    F = theta * g / (2 * rs * S)
    H = theta * q0 / (2 * g * p0)
    I = -theta / (2 * g)
    return A, B, C, F, H, I


def _a_form_terms(theta, inv: Invariants, fr: BasisTriple, pp):
    p0, q0, g, s, rs, S = inv.p0, inv.q0, inv.g, inv.s, inv.rs, inv.S
    a, b, c, d, e = fr.a, fr.b, fr.c, fr.d, fr.e
    aw = a + d
    K = aw * g / (S * rs)
    A = 1 - theta / 2 + theta / 2 * K
    gamma = 1 + inv.gm1
    kq = 1 + p0 * q0 - a * d - b * e
    # (gamma-1)^2 (p+q).w / (2 g p0 |p+q|^4), via gamma-1 = |p+q|^2/(rs S)
    pre = theta * aw / (2 * g * p0 * s * S * S)
    P2 = (
        pre * kq * (p0 - q0) * (4 * gamma + 4 - g * g)
        - pre * (a * d + b * e + pp) * g * g * rs
        + theta * aw * g / (2 * rs * S)
        # ((p+q).w/(a+d)) * (q0 d - p0 a): the a+d factor cancels exactly
        + theta * (q0 * d - p0 * a) / (2 * g * p0)
    )
    I3 = p0 * (b * e + b * b + c * c) - q0 * (b * e + e * e)
    P3 = theta * theta / (4 * p0 * rs * S * S) * (rs * I3 + kq * (b * b + c * c - e * e))
    return A, P2, P3


def _k_form_terms(theta, inv: Invariants, fr: BasisTriple, pp):
    p0, q0, g, rs, S = inv.p0, inv.q0, inv.g, inv.rs, inv.S
    a, b, c, d, e = fr.a, fr.b, fr.c, fr.d, fr.e
    K = (a + d) * g / (S * rs)
    gamma = 1 + inv.gm1
    kq = 1 + p0 * q0 - a * d - b * e
    P21 = theta * (
        (kq * (p0 - q0) * (4 * gamma + 4 - g * g) - (a * d + b * e + pp) * g * g * rs)
        / (2 * rs * S * p0 * g * g)
        + 0.5
    )
    P22 = theta * (q0 * d / p0 - a) / (2 * g)
    t2 = theta * theta
    P31 = t2 / (4 * p0 * S * g) * (a * b * e - b * d * e + a * e * e - c * c * d - b * b * d)
    P32 = t2 / (4 * p0 * S * rs) * (q0 * (-b * e - e * e) + p0 * (b * b + c * c + b * e))
    al = 1 - theta / 2
    be = theta / 2
    D1 = be**3 + P21 * be**2
    D2 = be * al * (3 * theta / 2 + 2 * P21) + be * (P22 * be + P31)
    D3 = 3 * al**2 * be + al**2 * P21 + theta * al * P22 + al * P31 + be * P32
    D4 = al**3 + P22 * al**2 + P32 * al
    return K, D1, D2, D3, D4


def _p1(fr: BasisTriple, pp):
    a, b, c, d, e, L = fr.a, fr.b, fr.c, fr.d, fr.e, fr.L
    a11 = (c * c * pp + L * L) / (c * c * e * e)
    a12 = (b * L - c * c * d) / (c * c * e)
    a13 = -L / (c * e)
    return a11 + a12 * d / e + a13 * a / c


def _det3(m) -> object:
    return (
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    )


def screen_det(theta: float, p, q, w) -> float:
    """A-form determinant in double precision (used to pre-screen candidates)."""
    inv = pair_invariants(p, q, math.sqrt)
    _admissible(inv, FLOAT_TINY)
    fr = _frame(p, q, w, math.sqrt, FLOAT_TINY)
    A, P2, P3 = _a_form_terms(theta, inv, fr, dot(p, p))
    return A * A * A + P2 * A * A + P3 * A


# -- public, arbitrary precision ---------------------------------------------


def _prepare(theta, p, q, w):
    theta = mpf(theta)
    if not 0 <= theta <= 1:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    p, q, w = vec(p), vec(q), direction(w)
    inv = pair_invariants(p, q, mpmath.sqrt, tol=mpf(2) ** (24 - mp.prec))
    _admissible(inv, degeneracy_threshold())
    return theta, p, q, w, inv


@at_precision
def basis_triple(p, w, q=None, strict: bool = False) -> BasisTriple:
    """Frame wtilde = p x w / |p x w|, wbar = w x wtilde with d = p.w, e = |p x w|.

    When |p x w| is below the degeneracy threshold a fallback frame is used
    (``degenerate=True``) unless ``strict``, which raises instead.
    """
    p, w = vec(p), direction(w)
    q = None if q is None else vec(q)
    return _frame(p, q, w, mpmath.sqrt, degeneracy_threshold(), strict)


@at_precision
def scalar_coeffs(theta, p, q, w) -> ScalarCoeffs:
    theta, p, q, w, inv = _prepare(theta, p, q, w)
    A, B, C, F, H, I = _scalar_block(theta, inv, w)
    coeffs = ScalarCoeffs(A, B, C, C, B, F, F, H, I)
    assert coeffs.D == coeffs.C and coeffs.E == coeffs.B and coeffs.G == coeffs.F
    return coeffs


@at_precision
def jacobian_matrix(theta, p, q, w) -> tuple:
    """du_i/dp_j as a tuple of rows."""
    k = scalar_coeffs(theta, p, q, w)
    p, q, w = vec(p), vec(q), direction(w)
    return tuple(
        tuple(
            (k.A if i == j else 0)
            + k.B * p[i] * p[j]
            + k.C * q[i] * q[j]
            + k.D * p[i] * q[j]
            + k.E * q[i] * p[j]
            + k.F * p[i] * w[j]
            + k.G * q[i] * w[j]
            + k.H * w[i] * p[j]
            + k.I * w[i] * q[j]
            for j in range(3)
        )
        for i in range(3)
    )


@at_precision
def det_matrix(theta, p, q, w) -> mpf:
    return _det3(jacobian_matrix(theta, p, q, w))


@at_precision
def p1_identity(theta, p, q, w) -> mpf | None:
    """Recompute P1 = a11 + a12 d/e + a13 a/c; None when c or e is too small.

    The a_ij carry 1/(c^2 e^2), so the sum is formed with that many extra
    guard bits and rounded back to the working precision.
    """
    theta, p, q, w, _ = _prepare(theta, p, q, w)
    tiny = degeneracy_threshold()
    fr = _frame(p, q, w, mpmath.sqrt, tiny)
    if fr.degenerate or abs(fr.c) <= tiny or fr.e <= tiny:
        return None
    cond = (1 + dot(p, p) + dot(q, q)) / abs(fr.c * fr.e)
    guard = 2 * max(0, int(mpmath.log(cond, 2))) + 16
    with precision(mp.prec + guard):
        p, q, w = vec(p), vec(q), direction(w)
        fr = _frame(p, q, w, mpmath.sqrt, tiny)
        P1 = _p1(fr, dot(p, p))
    return +P1


@at_precision
def det_A_form(theta, p, q, w, check_p1: bool = True) -> AForm:
    """det = A^3 + P2 A^2 + P3 A.

    With ``check_p1`` the leading coefficient P1 is rebuilt from the row
    reduction and must equal 1; it is skipped when c or e is degenerate.
    """
    theta, p, q, w, inv = _prepare(theta, p, q, w)
    tiny = degeneracy_threshold()
    fr = _frame(p, q, w, mpmath.sqrt, tiny)
    pp = dot(p, p)
    A, P2, P3 = _a_form_terms(theta, inv, fr, pp)
    if check_p1 and not fr.degenerate and abs(fr.c) > tiny and fr.e > tiny:
        P1 = _p1(fr, pp)
        # the a_ij carry 1/(c^2 e^2); cancellation depth scales with that
        tol = mpf(2) ** (24 - mp.prec) * (1 + pp + dot(q, q)) ** 2 / (fr.c * fr.e) ** 2
        if abs(P1 - 1) > tol:
            raise InconsistencyError(f"P1 = {P1} differs from 1")
    return AForm(A, P2, P3, A**3 + P2 * A**2 + P3 * A)


@at_precision
def det_K_form(theta, p, q, w) -> KForm:
    """det = D1 K^3 + D2 K^2 + D3 K + D4 with |K| < 1."""
    theta, p, q, w, inv = _prepare(theta, p, q, w)
    fr = _frame(p, q, w, mpmath.sqrt, degeneracy_threshold())
    K, D1, D2, D3, D4 = _k_form_terms(theta, inv, fr, dot(p, p))
    return KForm(K, D1, D2, D3, D4, ((D1 * K + D2) * K + D3) * K + D4)


def fd_jacobian(
    theta,
    p,
    q,
    w,
    h=None,
    u: Callable | None = None,
    prec: int | None = None,
) -> tuple:
    """Central differences (u(p + h e_j) - u(p - h e_j)) / 2h, column by column.

    Evaluated at twice the working precision; the default step is
    2^-(prec/3).  ``u`` replaces ``u_map`` (signature ``u(theta, p, q, w)``).
    """
    bits = prec or current_precision()
    u = u or u_map
    with precision(2 * bits):
        theta = mpf(theta)
        p, q, w = vec(p), vec(q), direction(w)
        h = mpf(2) ** (-(bits // 3)) if h is None else mpf(h)
        if h <= 0:
            raise ValueError("step h must be positive")
        if u is u_map:
            dpq = [p[i] - q[i] for i in range(3)]
            spq = [p[i] + q[i] for i in range(3)]
            if mpmath.sqrt(dot(dpq, dpq)) <= 4 * h or mpmath.sqrt(dot(spq, spq)) <= 4 * h:
                raise InadmissiblePerturbationError("stencil reaches p = q or p + q = 0")
        cols = []
        for j in range(3):
            up = list(p)
            dn = list(p)
            up[j] += h
            dn[j] -= h
            fu = u(theta, tuple(up), q, w)
            fd = u(theta, tuple(dn), q, w)
            cols.append([(fu[i] - fd[i]) / (2 * h) for i in range(3)])
        return tuple(tuple(cols[j][i] for j in range(3)) for i in range(3))


@at_precision
def bound_check(theta, p, q, w) -> BoundRatios:
    """Ratios of |P2|, |P3|, |det| to the growth envelopes of the upper bound.

    |P2| / ((q0)^(3/2) (1 + sqrt(p0)/s)),  |P3| / (q0/s),
    |det| / ((p0)^(1/2) (q0)^(3/2)).
    """
    theta, p, q, w, inv = _prepare(theta, p, q, w)
    af = det_A_form(theta, p, q, w, check_p1=False)
    p0, q0, s = inv.p0, inv.q0, inv.s
    q32 = q0 * mpmath.sqrt(q0)
    return BoundRatios(
        abs(af.P2) / (q32 * (1 + mpmath.sqrt(p0) / s)),
        abs(af.P3) / (q0 / s),
        abs(af.det) / (mpmath.sqrt(p0) * q32),
    )


@at_precision
def evaluate(theta, p, q, w) -> JacobianReport:
    """Every closed-form quantity and all three determinants at one point."""
    m = jacobian_matrix(theta, p, q, w)
    af = det_A_form(theta, p, q, w)
    kf = det_K_form(theta, p, q, w)
    try:
        cos = scattering_cos(p, q, w)
    except DegenerateInputError:
        cos = None
    return JacobianReport(
        m, _det3(m), af.A, af.P2, af.P3, af.det,
        kf.K, kf.D1, kf.D2, kf.D3, kf.D4, kf.det, cos, mp.prec,
    )
