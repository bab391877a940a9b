"""Random-search / bisection hunt for zeros of det(du/dp).

Pipeline for one theta: draw a point with det > 0, walk by random search
until a proposal has det < 0, then bisect along straight segments from that
negative point to positive points (its predecessor plus ``n_extra`` fresh
samples).  Roots violating the angle condition are dropped at the end.

Every (theta, search) task owns an RNG stream derived from
``SeedSequence(seed, spawn_key=(theta_key, search_index))`` so results do not
depend on how tasks are scheduled.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import mpmath
import numpy as np
from mpmath import mpf

from .jacobian import det_A_form, screen_det
from .kinematics import (
    ConfigPoint,
    DegenerateInputError,
    degeneracy_threshold,
    dot,
    precision,
    scattering_cos,
)

log = logging.getLogger(__name__)

THETA_GRID = tuple(k / 100 for k in range(1, 100))
MAX_REJECTIONS = 10_000


class SamplingExhaustedError(RuntimeError):
    pass


class NoSignChangeError(ValueError):
    pass


class DiscontinuityCrossingError(DegenerateInputError):
    """A bisection path touched the singular set p = q (or an antipodal w)."""


class BisectionNotConvergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class SearchParams:
    max_iters: int = 100_000
    ball_radius: float = 0.5
    init_box: float = 10.0
    precision_bits: int = 200
    zero_threshold: float | None = None
    seed: int = 0
    bisect_max_steps: int | None = None
    n_searches: int = 50
    n_extra: int = 49
    # "float": pre-screen proposals in double precision, confirm signs at
    # precision_bits; "mp": every evaluation at precision_bits
    screen: str = "float"

    def __post_init__(self):
        if self.max_iters <= 0:
            raise ValueError("max_iters must be positive")
        if self.ball_radius <= 0 or self.init_box <= 0:
            raise ValueError("ball_radius and init_box must be positive")
        if self.zero_threshold is not None and self.zero_threshold <= 0:
            raise ValueError("zero_threshold must be positive")
        if self.precision_bits < 53:
            raise ValueError("precision_bits must be >= 53")
        if self.n_searches < 0 or self.n_extra < 0:
            raise ValueError("n_searches and n_extra must be non-negative")
        if self.screen not in ("float", "mp"):
            raise ValueError("screen must be 'float' or 'mp'")

    @property
    def threshold(self) -> mpf:
        """|det| below this counts as zero: default 2^-(precision_bits - 40)."""
        if self.zero_threshold is None:
            return mpf(2) ** (40 - self.precision_bits)
        return mpf(self.zero_threshold)

    @property
    def max_steps(self) -> int:
        if self.bisect_max_steps is None:
            return self.precision_bits + 64
        return self.bisect_max_steps

    @property
    def bracket_tol(self) -> mpf:
        return mpf(2) ** (-(self.precision_bits // 2))


@dataclass(frozen=True)
class RootRecord:
    theta: mpf
    p: tuple
    q: tuple
    w: tuple
    det_value: mpf
    bracket_width: mpf
    cos_theta_scatter: mpf
    angle_ok: bool
    seed: int
    iterations_used: int


@dataclass(frozen=True)
class Segment:
    """Path between two points of equal theta, optionally through a waypoint."""

    alpha: ConfigPoint
    beta: ConfigPoint
    waypoint: ConfigPoint | None = None

    def __post_init__(self):
        if self.alpha.theta != self.beta.theta:
            raise ValueError("segment endpoints must share theta")

    def at(self, t) -> ConfigPoint:
        """p, q interpolate linearly; w interpolates and is renormalized."""
        t = mpf(t)
        a, b = self.alpha, self.beta
        if self.waypoint is not None:
            if t <= 0.5:
                a, b, t = self.alpha, self.waypoint, 2 * t
            else:
                a, b, t = self.waypoint, self.beta, 2 * t - 1
        lerp = lambda x, y: tuple((1 - t) * x[i] + t * y[i] for i in range(3))  # noqa: E731
        w = lerp(a.w, b.w)
        n = mpmath.sqrt(dot(w, w))
        if n < degeneracy_threshold():
            raise DiscontinuityCrossingError("interpolated w vanishes (antipodal endpoints)")
        return ConfigPoint(a.theta, lerp(a.p, b.p), lerp(a.q, b.q), tuple(x / n for x in w))


@dataclass
class SearchResult:
    """Outcome of one random search; ``negative`` is None on failure."""

    start: ConfigPoint
    positive: ConfigPoint
    negative: ConfigPoint | None
    iterations: int
    accepted: list = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.negative is not None


@dataclass
class ThetaSummary:
    theta: float
    searches: int
    successes: int
    roots: int
    kept: int
    abandoned: int


@dataclass
class SweepResult:
    records: list
    summary: list
    params: SearchParams
    thetas: tuple

    @property
    def filtered(self) -> list:
        return [r for r in self.records if r.angle_ok]


def det_value(pt: ConfigPoint) -> mpf:
    return det_A_form(pt.theta, pt.p, pt.q, pt.w, check_p1=False).det


def theta_key(theta) -> int:
    """Stable integer identifying theta in RNG spawn keys (micro-units)."""
    return int(round(float(theta) * 1_000_000))


def task_rng(seed: int, theta, search_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(theta_key(theta), search_index))
    return np.random.default_rng(ss)


def _random_point(theta, params: SearchParams, rng: np.random.Generator) -> ConfigPoint:
    box = params.init_box
    p = rng.uniform(-box, box, 3)
    q = rng.uniform(-box, box, 3)
    w = rng.standard_normal(3)
    w /= np.linalg.norm(w)
    return _to_point(theta, (p, q, w))


def sample_positive(theta, params: SearchParams, rng: np.random.Generator) -> ConfigPoint:
    """Rejection-sample the initial box until det > 0."""
    with precision(params.precision_bits):
        for _ in range(MAX_REJECTIONS):
            pt = _random_point(theta, params, rng)
            try:
                if det_value(pt) > 0:
                    return pt
            except DegenerateInputError:
                continue
    raise SamplingExhaustedError(f"no det > 0 after {MAX_REJECTIONS} samples at theta={theta}")


class _Proposals:
    """Uniform draws from the 9-ball, pulled from the generator in blocks."""

    def __init__(self, rng: np.random.Generator, radius: float, block: int = 512):
        self.rng, self.radius, self.block = rng, radius, block
        self._buf = np.empty((0, 9))
        self._i = 0

    def next(self) -> np.ndarray:
        if self._i >= len(self._buf):
            z = self.rng.standard_normal((self.block, 9))
            r = self.radius * self.rng.random(self.block) ** (1 / 9)
            self._buf = z * (r / np.linalg.norm(z, axis=1))[:, None]
            self._i = 0
        step = self._buf[self._i]
        self._i += 1
        return step


def _move(x: tuple, step: np.ndarray):
    """x = (p, q, w) as float 3-tuples; w is renormalized (None if it vanishes)."""
    p = tuple(x[0][i] + step[i] for i in range(3))
    q = tuple(x[1][i] + step[3 + i] for i in range(3))
    w = tuple(x[2][i] + step[6 + i] for i in range(3))
    n = math.sqrt(dot(w, w))
    if n < 1e-8:
        return None
    return p, q, (w[0] / n, w[1] / n, w[2] / n)


def _to_point(theta, x) -> ConfigPoint:
    p, q, w = (tuple(mpf(float(v)) for v in c) for c in x)
    n = mpmath.sqrt(dot(w, w))
    return ConfigPoint(mpf(theta), p, q, tuple(v / n for v in w))


def random_search(
    theta,
    params: SearchParams,
    rng: np.random.Generator,
    start: ConfigPoint | None = None,
    record: bool = False,
) -> SearchResult:
    """Random-search descent on det for fixed theta.

    Proposals are uniform in a ``ball_radius`` ball around the current
    (p, q, w) in R^9, w renormalized; a proposal replaces the current point
    only if its determinant is smaller.  Stops at the first det < 0 (sign
    confirmed at ``precision_bits``) or after ``max_iters`` proposals.
    """
    with precision(params.precision_bits):
        if start is None:
            start = sample_positive(theta, params, rng)
        th = float(start.theta)
        use_float = params.screen == "float"

        def evaluate(x):
            if use_float:
                return screen_det(th, *x)
            return det_value(_to_point(theta, x))

        cur = tuple(tuple(float(v) for v in c) for c in (start.p, start.q, start.w))
        cur_pt = start
        d_cur = evaluate(cur)
        accepted = [d_cur] if record else []
        props = _Proposals(rng, params.ball_radius)
        for it in range(1, params.max_iters + 1):
            x = _move(cur, props.next())
            if x is None:
                continue
            try:
                d = evaluate(x)
            except DegenerateInputError:
                continue
            if not d < d_cur:
                continue
            pt = _to_point(start.theta, x)
            if d < 0:
                d_hi = det_value(pt) if use_float else d
                if d_hi < 0:
                    return SearchResult(start, cur_pt, pt, it, accepted)
                # the double-precision screen got the sign wrong; keep walking
                d = float(d_hi)
                if not d < d_cur:
                    continue
            cur, cur_pt, d_cur = x, pt, d
            if record:
                accepted.append(d)
        return SearchResult(start, cur_pt, None, params.max_iters, accepted)


def _sign(x) -> int:
    return (x > 0) - (x < 0)


def bisect(
    segment: Segment,
    params: SearchParams,
    det_fn: Callable[[ConfigPoint], mpf] | None = None,
    path: Callable | None = None,
) -> RootRecord:
    """Bisect t -> det(segment.at(t)) on [0, 1].

    Stops once |det(mid)| <= threshold and the bracket is narrower than
    2^-(precision_bits/2), or raises after ``max_steps`` halvings.
    ``det_fn``/``path`` replace the determinant and the path (for testing).
    """
    det_fn = det_fn or det_value
    path = path or segment.at
    with precision(params.precision_bits):
        thresh, tol = params.threshold, params.bracket_tol
        lo, hi = mpf(0), mpf(1)
        try:
            s_lo = _sign(det_fn(path(lo)))
            s_hi = _sign(det_fn(path(hi)))
        except DegenerateInputError as exc:
            raise DiscontinuityCrossingError(str(exc)) from exc
        if s_lo == 0 or s_hi == 0 or s_lo == s_hi:
            raise NoSignChangeError("segment endpoints do not bracket a sign change")
        for step in range(1, params.max_steps + 1):
            mid = (lo + hi) / 2
            pt = path(mid)
            try:
                f = det_fn(pt)
            except DegenerateInputError as exc:
                raise DiscontinuityCrossingError(str(exc)) from exc
            s = _sign(f)
            if s == s_lo:
                lo = mid
            else:
                hi = mid
            width = hi - lo
            if abs(f) <= thresh and width <= tol or s == 0:
                return _record(pt, f, width, params, step)
        raise BisectionNotConvergedError(
            f"|det| = {mpmath.nstr(abs(f), 5)} after {params.max_steps} steps"
        )


def _record(pt, f, width, params: SearchParams, steps: int) -> RootRecord:
    if isinstance(pt, ConfigPoint):
        try:
            cos = scattering_cos(pt.p, pt.q, pt.w)
        except DegenerateInputError:
            cos = mpf(0)
        return RootRecord(pt.theta, pt.p, pt.q, pt.w, f, width, cos, bool(cos >= 0), params.seed, steps)
    z = (mpf(0),) * 3
    return RootRecord(mpf(pt), z, z, z, f, width, mpf(0), True, params.seed, steps)


def bisect_pair(
    negative: ConfigPoint, positive: ConfigPoint, params: SearchParams, rng: np.random.Generator
) -> RootRecord | None:
    """Bisect a straight segment; on a singular hit retry once through a jittered waypoint."""
    seg = Segment(negative, positive)
    for attempt in range(2):
        try:
            return bisect(seg, params)
        except DiscontinuityCrossingError:
            if attempt:
                break
            with precision(params.precision_bits):
                mid = seg.at(mpf(1) / 2) if _antipodal_safe(seg) else negative
                jit = rng.uniform(-params.ball_radius, params.ball_radius, 6)
                w = rng.standard_normal(3)
                way = _to_point(
                    negative.theta,
                    (
                        tuple(float(mid.p[i]) + jit[i] for i in range(3)),
                        tuple(float(mid.q[i]) + jit[3 + i] for i in range(3)),
                        tuple(float(x) for x in w),
                    ),
                )
            seg = Segment(negative, positive, way)
        except (NoSignChangeError, BisectionNotConvergedError) as exc:
            log.debug("segment abandoned: %s", exc)
            return None
    log.debug("segment abandoned after re-jitter")
    return None


def _antipodal_safe(seg: Segment) -> bool:
    try:
        seg.at(mpf(1) / 2)
        return True
    except DegenerateInputError:
        return False


def _search_task(args) -> tuple[int, list, bool, int]:
    """One random search plus its bisections; pure function of its arguments."""
    theta, search_index, params = args
    rng = task_rng(params.seed, theta, search_index)
    with precision(params.precision_bits):
        th = mpf(str(theta)) if isinstance(theta, float) else mpf(theta)
        res = random_search(th, params, rng)
        if not res.success:
            return search_index, [], False, 0
        positives = [res.positive] + [sample_positive(th, params, rng) for _ in range(params.n_extra)]
        records = []
        abandoned = 0
        for pos in positives:
            rec = bisect_pair(res.negative, pos, params, rng)
            if rec is None:
                abandoned += 1
            else:
                records.append(rec)
        return search_index, records, True, abandoned


def hunt_theta(theta, params: SearchParams, workers: int = 1) -> tuple[list, ThetaSummary]:
    """All searches for one theta; records are ordered by (search, pair)."""
    records, summary = _run([theta], params, workers)
    return records, summary[0]


def theta_sweep(
    params: SearchParams, thetas: Sequence | None = None, workers: int = 1
) -> SweepResult:
    """Run the hunt for every theta (default 0.01, ..., 0.99).

    Returns all records, unfiltered; ``SweepResult.filtered`` applies the
    angle condition.
    """
    thetas = tuple(THETA_GRID if thetas is None else thetas)
    records, summary = _run(thetas, params, workers)
    return SweepResult(records, summary, params, thetas)


def _run(thetas: Iterable, params: SearchParams, workers: int):
    thetas = list(thetas)
    tasks = [(th, j, params) for th in thetas for j in range(params.n_searches)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_search_task, tasks, chunksize=1))
    else:
        results = [_search_task(t) for t in tasks]
    records, summary = [], []
    k = 0
    for th in thetas:
        chunk = results[k : k + params.n_searches]
        k += params.n_searches
        succ = sum(ok for _, _, ok, _ in chunk)
        recs = [r for _, rs, _, _ in chunk for r in rs]
        aband = sum(a for _, _, _, a in chunk)
        records.extend(recs)
        summary.append(
            ThetaSummary(float(th), params.n_searches, succ, len(recs), sum(r.angle_ok for r in recs), aband)
        )
        log.info("theta=%.2f successes=%d roots=%d", float(th), succ, len(recs))
    return records, summary


def with_precision(params: SearchParams, bits: int) -> SearchParams:
    return replace(params, precision_bits=bits)
