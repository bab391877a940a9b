"""The special ray p = 0, q = -|q| w and its large-|q| limit.

On this ray the frame scalars collapse (a = -|q|, b = c = d = e = 0) and the
Jacobian is diag(A, A, 1), so det = A^2 with A -> 1 - theta.  Two references
are provided: :func:`closed_form_limit`, the reference closed form
(1-theta)^3 + ((1+sqrt 2)/2) theta (1-theta)^2, and :func:`ray_limit`,
the value (1-theta)^2 the determinant actually converges to.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import mpmath
import numpy as np
from mpmath import mp, mpf

from .jacobian import det_A_form
from .kinematics import (
    DegenerateInputError,
    InconsistencyError,
    at_precision,
    precision,
    degeneracy_threshold,
    scale,
    unit,
    vec,
)

# two unrelated directions; normalized at the working precision when used
W_CHOICES = ((0, 0, 1), (1, -2, 2))


@dataclass(frozen=True)
class LimitEvaluation:
    """One point on the ray.

    ``deviation`` is measured against the reference limit, ``ray_deviation``
    against (1-theta)^2.  ``det_explicit`` comes from the closed-form ray
    identities, ``det`` from the general A-form.
    """

    theta: mpf
    q_mag: mpf
    A: mpf
    P2: mpf
    P3: mpf
    det: mpf
    det_explicit: mpf
    closed_form_limit: mpf
    deviation: mpf
    ray_limit: mpf
    ray_deviation: mpf


@dataclass(frozen=True)
class ConvergenceTable:
    rows: list
    alpha: float  # fitted decay exponent of ``deviation``
    alpha_ray: float  # fitted decay exponent of ``ray_deviation``

    @property
    def deviations(self) -> list:
        return [r.deviation for r in self.rows]

    @property
    def ray_deviations(self) -> list:
        return [r.ray_deviation for r in self.rows]


@at_precision
def closed_form_limit(theta) -> mpf:
    """(1-theta)^3 + ((1+sqrt 2)/2) theta (1-theta)^2."""
    theta = mpf(theta)
    if not 0 <= theta <= 1:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    r = 1 - theta
    return r**3 + (1 + mpmath.sqrt(2)) / 2 * theta * r**2


@at_precision
def ray_limit(theta) -> mpf:
    """(1-theta)^2, the limit of det(du/dp) along the ray."""
    theta = mpf(theta)
    if not 0 <= theta <= 1:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    return (1 - theta) ** 2


def ray_terms(theta, q_mag) -> tuple[mpf, mpf, mpf]:
    """A, P2, P3 on the ray from the identities written in q0.

    2q0 - 2 is formed as 2|q|^2/(q0 + 1) so small |q| keeps full precision.
    P2 uses the form in which the (q0)^3 terms have cancelled exactly.
    """
    theta, q = mpf(theta), mpf(q_mag)
    q0 = mpmath.sqrt(1 + q * q)
    rs = mpmath.sqrt(2 * q0 + 2)
    g = mpmath.sqrt(2 * q * q / (q0 + 1))
    S = q0 + 1 + rs
    A = 1 - theta / 2 - theta / 2 * (g * q / (rs * S))
    bracket = (
        -q * q * (4 * (1 + q0) / rs + 6)
        - 2 * q0
        - 2 * (3 * q0**2 + 3 * q0 + 1)
        - (2 * q0 + 2) * (2 * q0 + 2 + 2 * rs * (q0 + 1))
    )
    P2 = -theta * q / (2 * g * (2 * q0 + 2) * S**2) * bracket - theta * g * q / (2 * rs * S)
    # b = c = d = e = 0 makes every term of P3 vanish
    P3 = mpf(0)
    return A, P2, P3


def _route_a_form(theta, q_mag, w):
    w = unit(vec(w))
    p = (mpf(0),) * 3
    q = scale(-mpf(q_mag), w)
    return det_A_form(theta, p, q, w)


@at_precision
def eval_special_point(theta, q_mag) -> LimitEvaluation:
    """Evaluate the ray point by the A-form (for two w) and by the ray identities.

    Raises
    ------
    ValueError
        theta outside (0, 1) or q_mag <= 0.
    DegenerateInputError
        q_mag below the degeneracy threshold (g -> 0).
    InconsistencyError
        The routes disagree beyond 2^(24 - precision) relative.
    """
    theta, q_mag = mpf(theta), mpf(q_mag)
    if not 0 < theta < 1:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    if q_mag <= 0:
        raise ValueError(f"q_mag must be positive, got {q_mag}")
    if q_mag <= degeneracy_threshold():
        raise DegenerateInputError("q_mag below the degeneracy threshold")
    bits = mp.prec
    # the ray loses about log2|q| bits to cancellation; carry them as guard bits
    guard = int(mpmath.log(1 + q_mag, 2)) + 8
    with precision(bits + guard):
        forms = [_route_a_form(theta, q_mag, w) for w in W_CHOICES]
        A, P2, P3 = ray_terms(theta, q_mag)
        det_explicit = A**3 + P2 * A**2 + P3 * A
    ref = forms[0]
    det_explicit = +det_explicit
    tol = mpf(2) ** (24 - bits)
    for other in [f.det for f in forms[1:]] + [det_explicit]:
        if abs(other - ref.det) > tol * abs(ref.det):
            raise InconsistencyError(
                f"ray routes disagree: {mpmath.nstr(ref.det, 20)} vs {mpmath.nstr(other, 20)}"
            )
    lim, rlim = closed_form_limit(theta), ray_limit(theta)
    return LimitEvaluation(
        theta=theta,
        q_mag=q_mag,
        A=+ref.A,
        P2=+ref.P2,
        P3=+ref.P3,
        det=+ref.det,
        det_explicit=det_explicit,
        closed_form_limit=lim,
        deviation=abs(+ref.det - lim),
        ray_limit=rlim,
        ray_deviation=abs(+ref.det - rlim),
    )


def _fit_alpha(q_mags, devs) -> float:
    x = np.log([float(q) for q in q_mags])
    y = np.log([max(float(d), 1e-300) for d in devs])
    slope, _ = np.polyfit(x, y, 1)
    return float(-slope)


def convergence_table(theta, q_mags: Sequence, prec: int | None = None) -> ConvergenceTable:
    """Evaluate the ray at increasing |q| and fit deviation ~ C |q|^-alpha."""
    q_mags = [mpf(q) for q in q_mags]
    if any(b <= a for a, b in zip(q_mags, q_mags[1:])):
        raise ValueError("q_mags must be strictly increasing")
    rows = [eval_special_point(theta, q, prec=prec) for q in q_mags]
    if len(rows) < 2:
        return ConvergenceTable(rows, float("nan"), float("nan"))
    return ConvergenceTable(
        rows,
        _fit_alpha(q_mags, [r.deviation for r in rows]),
        _fit_alpha(q_mags, [r.ray_deviation for r in rows]),
    )
