"""Invariant suites behind ``comjac verify``.

Each suite draws its own admissible sample from a seeded generator and
returns a :class:`SuiteResult`; tolerances scale with the working precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import mpmath
import numpy as np
from mpmath import mp, mpf

from . import jacobian as jac
from . import kinematics as kin
from .kinematics import DegenerateInputError, precision
from .limitcase import closed_form_limit, convergence_table


@dataclass
class SuiteResult:
    name: str
    passed: bool
    checked: int
    worst: float  # log2 of the worst normalized error, or a suite-specific figure
    notes: list = field(default_factory=list)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({'; '.join(self.notes)})" if self.notes else ""
        return f"[{status}] {self.name}: {self.checked} checks, worst {self.worst:.1f}{extra}"


def random_direction(rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def random_vector(rng: np.random.Generator, rmin: float, rmax: float) -> np.ndarray:
    """Uniform direction, log-uniform magnitude in [rmin, rmax]."""
    return random_direction(rng) * 10 ** rng.uniform(np.log10(rmin), np.log10(rmax))


def random_config(
    rng: np.random.Generator,
    rmin: float = 1e-2,
    rmax: float = 1e2,
    theta: float | None = None,
    min_gap: float = 1e-3,
) -> tuple:
    """(theta, p, q, w) as mpf tuples with |p - q| and |p + q| above ``min_gap``.

    Components are rounded doubles; w is renormalized at the working
    precision so it is unit to every bit.
    """
    while True:
        th = rng.uniform(0, 1) if theta is None else theta
        p = random_vector(rng, rmin, rmax)
        q = random_vector(rng, rmin, rmax)
        if np.linalg.norm(p - q) < min_gap or np.linalg.norm(p + q) < min_gap:
            continue
        w = random_direction(rng)
        return (
            mpf(th),
            tuple(mpf(float(x)) for x in p),
            tuple(mpf(float(x)) for x in q),
            kin.unit(tuple(mpf(float(x)) for x in w)),
        )


def _log2(x) -> float:
    x = abs(x)
    return float(mpmath.log(x, 2)) if x > 0 else float("-inf")


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), mpf(2) ** -mp.prec)


def conservation(rng, n: int) -> SuiteResult:
    """p' + q' = p + q and p'0 + q'0 = p0 + q0."""
    tol = mpf(2) ** (24 - mp.prec)
    worst = mpf(0)
    for _ in range(n):
        _, p, q, w = random_config(rng)
        pp, qq = kin.post_collisional(p, q, w)
        P = kin.add(p, q)
        e_in = kin.energy(p) + kin.energy(q)
        e_out = kin.energy(pp) + kin.energy(qq)
        err = max(
            kin.norm(kin.sub(kin.add(pp, qq), P)) / max(kin.norm(P), 1),
            _rel(e_in, e_out),
        )
        worst = max(worst, err)
    return SuiteResult("conservation", worst <= tol, n, _log2(worst))


def g_bounds(rng, n: int) -> SuiteResult:
    """|p - q| / sqrt(p0 q0) <= g <= |p - q|, including near-coincident pairs."""
    ok, bad = 0, 0
    slack = 1 + mpf(2) ** (24 - mp.prec)
    for i in range(n):
        p = tuple(mpf(float(x)) for x in random_vector(rng, 1e-2, 1e2))
        if i % 2:
            dq = random_vector(rng, 1e-12, 1e-6)
            q = tuple(p[k] + mpf(float(dq[k])) for k in range(3))
        else:
            q = tuple(mpf(float(x)) for x in random_vector(rng, 1e-2, 1e2))
        g = kin.relative_momentum(p, q)
        d = kin.norm(kin.sub(p, q))
        lo = d / mpmath.sqrt(kin.energy(p) * kin.energy(q))
        if lo <= g * slack and g <= d * slack:
            ok += 1
        else:
            bad += 1
    return SuiteResult("g_bounds", bad == 0, n, float(bad))


def ranges(rng, n: int) -> SuiteResult:
    """1 - theta < A < 1 and |K| < 1 for theta in (0, 1)."""
    bad = 0
    for _ in range(n):
        th, p, q, w = random_config(rng)
        if th == 0:
            continue
        A = jac.det_A_form(th, p, q, w, check_p1=False).A
        K = jac.det_K_form(th, p, q, w).K
        if not (1 - th < A < 1 and abs(K) < 1):
            bad += 1
    return SuiteResult("ranges", bad == 0, n, float(bad))


def three_way(rng, n: int) -> SuiteResult:
    """det_matrix, det_A_form, det_K_form agree pairwise."""
    tol = mpf(2) ** (24 - mp.prec)
    worst = mpf(0)
    for _ in range(n):
        th, p, q, w = random_config(rng)
        dm = jac.det_matrix(th, p, q, w)
        da = jac.det_A_form(th, p, q, w).det
        dk = jac.det_K_form(th, p, q, w).det
        worst = max(worst, _rel(dm, da), _rel(da, dk), _rel(dm, dk))
    return SuiteResult("three_way", worst <= tol, n, _log2(worst))


def p1_identity(rng, n: int) -> SuiteResult:
    tol = mpf(2) ** (24 - mp.prec)
    worst, used = mpf(0), 0
    for _ in range(n):
        th, p, q, w = random_config(rng)
        P1 = jac.p1_identity(th, p, q, w)
        if P1 is None:
            continue
        used += 1
        worst = max(worst, abs(P1 - 1))
    return SuiteResult("p1_identity", worst <= tol, used, _log2(worst))


def fd_tolerance(bits: int) -> mpf:
    """Central differences at h = 2^-(bits/3): truncation ~ h^2, plus headroom."""
    h = mpf(2) ** (-(bits // 3))
    return 2**20 * h * h


def fd_oracle(rng, n: int) -> SuiteResult:
    """Analytic matrix vs central differences of u at the default step."""
    tol = fd_tolerance(mp.prec)
    worst = mpf(0)
    checked = 0
    for _ in range(n):
        th, p, q, w = random_config(rng, 0.1, 10, min_gap=0.1)
        try:
            fd = jac.fd_jacobian(th, p, q, w)
        except DegenerateInputError:
            continue
        m = jac.jacobian_matrix(th, p, q, w)
        scale = 1 + max(abs(x) for row in m for x in row)
        err = max(abs(m[i][j] - fd[i][j]) for i in range(3) for j in range(3)) / scale
        worst = max(worst, err)
        checked += 1
    return SuiteResult("fd_oracle", worst <= tol, checked, _log2(worst))


def limit_ray(rng, n: int) -> SuiteResult:
    """Ray routes agree, det -> (1-theta)^2 monotonically; reference limit reported."""
    notes = []
    passed = True
    worst = float("-inf")
    for th in ("0.1", "0.5", "0.9"):
        table = convergence_table(mpf(th), [10**k for k in range(2, 9)])
        devs = table.ray_deviations
        if not all(b < a for a, b in zip(devs, devs[1:])):
            passed = False
        worst = max(worst, _log2(devs[-1]))
        stated = abs(table.rows[-1].det - closed_form_limit(mpf(th)))
        notes.append(f"theta={th}: |det - reference limit| = {mpmath.nstr(stated, 3)} (informational)")
    return SuiteResult("limit_ray", passed, 21, worst, notes)


SUITES: dict[str, Callable] = {
    "conservation": conservation,
    "g_bounds": g_bounds,
    "ranges": ranges,
    "three_way": three_way,
    "p1_identity": p1_identity,
    "fd_oracle": fd_oracle,
    "limit_ray": limit_ray,
}


def run_all(precision_bits: int = 200, sample_count: int = 200, seed: int = 0) -> list[SuiteResult]:
    if sample_count <= 0:
        raise ValueError("sample_count must be positive")
    results = []
    with precision(precision_bits):
        for k, (name, suite) in enumerate(SUITES.items()):
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))
            count = max(1, sample_count // 10) if name == "fd_oracle" else sample_count
            results.append(suite(rng, count))
    return results
