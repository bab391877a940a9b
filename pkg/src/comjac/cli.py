"""Command-line interface: ``comjac {eval,hunt,sweep,limits,verify,export}``.

Exit codes: 0 success, 1 verification failure, 2 usage error or degenerate
input, 3 I/O error.  Relative output paths land in $COMJAC_OUTPUT_DIR when
it is set.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import mpmath
from mpmath import mpf

from . import io as dio
from .jacobian import evaluate
from .kinematics import DegenerateInputError, InconsistencyError, precision
from .limitcase import convergence_table
from .verify import run_all
from .zerohunt import THETA_GRID, SearchParams, hunt_theta, theta_sweep

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
OUTPUT_DIR_ENV = "COMJAC_OUTPUT_DIR"

log = logging.getLogger("comjac")


class UsageError(Exception):
    pass


def parse_vector(text: str) -> tuple[str, str, str]:
    """'1,2.5,-3' -> three decimal strings (kept as text so no digits are lost)."""
    parts = [t.strip() for t in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected 3 comma-separated numbers, got {text!r}")
    for t in parts:
        try:
            if not math.isfinite(float(t)):
                raise ValueError
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a finite number: {t!r}") from None
    return tuple(parts)


def parse_theta_list(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad theta list {text!r}") from None
    if not all(0 <= v <= 1 for v in vals):
        raise argparse.ArgumentTypeError("theta values must lie in [0, 1]")
    return vals


def positive_int(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def resolve_out(path: str | None, default_name: str) -> Path:
    base = Path(os.environ.get(OUTPUT_DIR_ENV, "."))
    p = Path(path) if path else Path(default_name)
    return p if p.is_absolute() else base / p


def _fmt(x, digits: int = 30) -> str:
    return "None" if x is None else mpmath.nstr(x, digits)


def _search_params(args) -> SearchParams:
    try:
        return SearchParams(
            max_iters=args.max_iters,
            ball_radius=args.ball_radius,
            init_box=args.init_box,
            precision_bits=args.precision_bits,
            zero_threshold=args.zero_threshold,
            seed=args.seed,
            n_searches=args.searches,
            n_extra=args.extra,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _output_format(args, path: Path) -> str:
    ext = path.suffix.lower().lstrip(".")
    if args.format and ext in dio.FORMATS and ext != args.format:
        raise UsageError(f"--format {args.format} conflicts with extension of {path}")
    return args.format or dio.format_from_path(path)


def _search_meta(params: SearchParams, thetas) -> dict:
    return dio.metadata(
        precision_bits=params.precision_bits,
        seed=params.seed,
        grid=[format(t, ".6g") for t in thetas],
        max_iters=params.max_iters,
        ball_radius=params.ball_radius,
        init_box=params.init_box,
        zero_threshold=format_number_or_none(params.zero_threshold),
        searches=params.n_searches,
        extra_points=params.n_extra,
    )


def format_number_or_none(x) -> str | None:
    return None if x is None else repr(float(x))


# -- commands ---------------------------------------------------------------


def cmd_eval(args) -> int:
    if args.theta is None or args.p is None or args.q is None or args.w is None:
        raise UsageError("eval needs --theta, --p, --q and --w")
    with precision(args.precision_bits):
        theta = mpf(args.theta)
        p, q, w = (tuple(mpf(x) for x in v) for v in (args.p, args.q, args.w))
        n = mpmath.sqrt(sum(x * x for x in w))
        if abs(n - 1) > mpf(2) ** -20:
            raise UsageError(f"--w must be a unit vector (|w| = {mpmath.nstr(n, 8)})")
        w = tuple(x / n for x in w)
        rep = evaluate(theta, p, q, w)
        lines = [
            f"precision_bits {rep.precision_bits}",
            f"det_matrix     {_fmt(rep.det_matrix)}",
            f"det_A_form     {_fmt(rep.det_A_form)}",
            f"det_K_form     {_fmt(rep.det_K_form)}",
            f"A              {_fmt(rep.A)}",
            f"P2             {_fmt(rep.P2)}",
            f"P3             {_fmt(rep.P3)}",
            f"K              {_fmt(rep.K)}",
            *(f"D{i}             {_fmt(getattr(rep, f'D{i}'))}" for i in range(1, 5)),
            f"cos_scatter    {_fmt(rep.cos_scatter)}",
            *(f"residual {k:<12} {mpmath.nstr(v, 5)}" for k, v in rep.residuals.items()),
        ]
    print("\n".join(lines))
    return EXIT_OK


def _write_roots(records, meta, path: Path, fmt: str) -> Path:
    return dio.save(dio.Dataset("roots", list(records), meta), path, fmt)


def _print_summary(summary) -> None:
    print(f"{'theta':>6} {'success':>8} {'roots':>6} {'kept':>6} {'dropped':>8} {'abandoned':>10}")
    for s in summary:
        print(f"{s.theta:6.2f} {s.successes:8d} {s.roots:6d} {s.kept:6d} {s.roots - s.kept:8d} {s.abandoned:10d}")


def cmd_hunt(args) -> int:
    if args.theta is None:
        raise UsageError("hunt needs --theta")
    params = _search_params(args)
    theta = float(args.theta)
    if not 0 <= theta <= 1:
        raise UsageError("theta must lie in [0, 1]")
    records, summary = hunt_theta(theta, params, workers=args.workers)
    _print_summary([summary])
    if args.out or os.environ.get(OUTPUT_DIR_ENV):
        out = resolve_out(args.out, "hunt.csv")
        fmt = _output_format(args, out)
        rows = [r for r in records if r.angle_ok] if args.filtered else records
        meta = _search_meta(params, (theta,))
        meta["filtered"] = bool(args.filtered)
        print(f"wrote {_write_roots(rows, meta, out, fmt)}")
    return EXIT_OK


def unfiltered_path(path: Path) -> Path:
    return path.with_name(f"{path.stem}.unfiltered{path.suffix}")


def cmd_sweep(args) -> int:
    params = _search_params(args)
    thetas = args.thetas or THETA_GRID
    result = theta_sweep(params, thetas, workers=args.workers)
    _print_summary(result.summary)
    out = resolve_out(args.out, "roots.csv")
    fmt = _output_format(args, out)
    meta = _search_meta(params, thetas)
    written = [_write_roots(result.filtered, {**meta, "filtered": True}, out, fmt)]
    if args.filtered is not True or args.unfiltered:
        written.append(
            _write_roots(result.records, {**meta, "filtered": False}, unfiltered_path(out), fmt)
        )
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_limits(args) -> int:
    thetas = args.thetas or (0.1, 0.5, 0.9)
    q_mags = [10**k for k in range(2, 9)]
    rows = []
    with precision(args.precision_bits):
        for th in thetas:
            if not 0 < th < 1:
                raise UsageError("limits needs theta in (0, 1)")
            table = convergence_table(mpf(repr(th)), q_mags)
            rows.extend(table.rows)
            print(f"theta={th:g}  fitted alpha (reference limit) {table.alpha:.3f}  "
                  f"(ray limit (1-theta)^2) {table.alpha_ray:.3f}")
            print(f"{'q_mag':>8} {'det':>24} {'|det - reference|':>20} {'|det - (1-theta)^2|':>20}")
            for r in table.rows:
                print(f"{mpmath.nstr(r.q_mag, 3):>8} {mpmath.nstr(r.det, 18):>24} "
                      f"{mpmath.nstr(r.deviation, 6):>20} {mpmath.nstr(r.ray_deviation, 6):>20}")
    if args.out:
        out = resolve_out(args.out, "limits.csv")
        meta = dio.metadata(precision_bits=args.precision_bits, thetas=[format(t, ".6g") for t in thetas])
        print(f"wrote {dio.save(dio.Dataset('limits', rows, meta), out, _output_format(args, out))}")
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.samples <= 0:
        raise UsageError("--samples must be positive")
    results = run_all(args.precision_bits, args.samples, args.seed)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print("failed: " + ", ".join(failed))
        return EXIT_FAIL
    return EXIT_OK


def cmd_export(args) -> int:
    if not args.input:
        raise UsageError("export needs --in DATASET")
    ds = dio.load(args.input)
    if args.filtered:
        ds.rows = [r for r in ds.rows if r.angle_ok]
    try:
        table = dio.angular_table(ds, args.which)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    bits = int(ds.metadata.get("precision_bits", 200))
    header = [
        "# azimuth = atan2(y, x) in (-pi, pi]; polar measured from +z in [0, pi]; radians",
        f"# vector: {args.which}",
        "azimuth,polar,theta",
    ]
    body = [",".join(dio.format_number(x, bits) for x in row) for row in table]
    text = "\n".join(header + body) + "\n"
    if args.out:
        out = resolve_out(args.out, f"angles_{args.which}.csv")
        print(f"wrote {dio.write_atomic(out, text)}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "eval": cmd_eval,
    "hunt": cmd_hunt,
    "sweep": cmd_sweep,
    "limits": cmd_limits,
    "verify": cmd_verify,
    "export": cmd_export,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--precision-bits", type=int, default=200)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=dio.FORMATS)
    common.add_argument("--out", help="output path (relative paths go under $%s)" % OUTPUT_DIR_ENV)
    common.add_argument("-v", "--verbose", action="store_true")

    search = argparse.ArgumentParser(add_help=False)
    search.add_argument("--max-iters", type=int, default=100_000)
    search.add_argument("--ball-radius", type=float, default=0.5)
    search.add_argument("--init-box", type=float, default=10.0)
    search.add_argument("--zero-threshold", type=float)
    search.add_argument("--searches", type=int, default=50, help="random searches per theta")
    search.add_argument("--extra", type=int, default=49, help="fresh positive endpoints per search")
    search.add_argument("--workers", type=positive_int, default=1)
    search.add_argument("--filtered", dest="filtered", action="store_true", default=None)
    search.add_argument("--unfiltered", dest="unfiltered", action="store_true")

    ap = argparse.ArgumentParser(prog="comjac", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", parents=[common], help="all determinant routes at one point")
    p.add_argument("--theta")
    p.add_argument("--p", type=parse_vector)
    p.add_argument("--q", type=parse_vector)
    p.add_argument("--w", type=parse_vector)

    p = sub.add_parser("hunt", parents=[common, search], help="zero hunt at one theta")
    p.add_argument("--theta", type=float)

    p = sub.add_parser("sweep", parents=[common, search], help="zero hunt over a theta grid")
    p.add_argument("--thetas", type=parse_theta_list, help="comma list (default 0.01..0.99)")

    p = sub.add_parser("limits", parents=[common], help="convergence along the special ray")
    p.add_argument("--thetas", type=parse_theta_list)

    p = sub.add_parser("verify", parents=[common], help="run the invariant suites")
    p.add_argument("--samples", type=int, default=200)

    p = sub.add_parser("export", parents=[common], help="angular coordinates for plotting")
    p.add_argument("--in", dest="input")
    p.add_argument("--which", choices=("p", "q", "w"), default="p")
    p.add_argument("--filtered", dest="filtered", action="store_true", default=False)
    p.add_argument("--unfiltered", dest="filtered", action="store_false")
    return ap


VALUE_FLAGS = ("--p", "--q", "--w", "--theta", "--thetas")


def _glue_negative_values(argv: list[str]) -> list[str]:
    """Turn ``--q -1,2,3`` into ``--q=-1,2,3`` so argparse does not see an option."""
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if a in VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
        else:
            out.append(a)
            i += 1
    return out


def main(argv=None) -> int:
    ap = build_parser()
    argv = _glue_negative_values(list(sys.argv[1:] if argv is None else argv))
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.precision_bits < 53:
        print("error: --precision-bits must be >= 53", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DegenerateInputError as exc:
        print(f"degenerate input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, dio.DatasetFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InconsistencyError as exc:
        print(f"inconsistency: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except OSError as exc:
        name = getattr(exc, "filename", None)
        print(f"I/O error{f' ({name})' if name else ''}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
