"""Dataset files for root records and ray evaluations.

Numbers are written as decimal strings with ceil(bits * log10 2) + 2
significant digits, enough to recover every bit on read-back.  CSV files
carry metadata in '#'-prefixed header lines; JSON files nest it next to the
rows.  Files are written to a temporary sibling and renamed into place.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import mpmath
from mpmath import mpf
from mpmath.libmp import to_str

from .kinematics import precision
from .limitcase import LimitEvaluation
from .zerohunt import RootRecord

ROOT_COLUMNS = (
    "theta", "p1", "p2", "p3", "q1", "q2", "q3", "w1", "w2", "w3",
    "det", "bracket_width", "cos_scatter", "angle_ok", "seed", "iterations",
)
LIMIT_COLUMNS = (
    "theta", "q_mag", "A", "P2", "P3", "det", "det_explicit",
    "closed_form_limit", "deviation", "ray_limit", "ray_deviation",
)
FORMATS = ("csv", "json")


class DatasetFormatError(ValueError):
    pass


@dataclass
class Dataset:
    """``kind`` is "roots" (rows of RootRecord) or "limits" (LimitEvaluation)."""

    kind: str
    rows: list
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("roots", "limits"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")

    @property
    def columns(self) -> tuple:
        return ROOT_COLUMNS if self.kind == "roots" else LIMIT_COLUMNS


def digits_for(bits: int) -> int:
    return math.ceil(bits * math.log10(2)) + 2


def format_number(x, bits: int) -> str:
    if not isinstance(x, mpf):
        with precision(bits):
            x = mpf(x)
    return to_str(x._mpf_, digits_for(bits))


def timestamp() -> str | None:
    """UTC time from SOURCE_DATE_EPOCH, or None so reruns stay byte-identical."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is None:
        return None
    return dt.datetime.fromtimestamp(int(epoch), dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _root_row(r: RootRecord, bits: int) -> list[str]:
    f = lambda x: format_number(x, bits)  # noqa: E731
    return [
        f(r.theta), *map(f, r.p), *map(f, r.q), *map(f, r.w),
        f(r.det_value), f(r.bracket_width), f(r.cos_theta_scatter),
        "true" if r.angle_ok else "false", str(r.seed), str(r.iterations_used),
    ]


def _limit_row(r: LimitEvaluation, bits: int) -> list[str]:
    return [format_number(getattr(r, c), bits) for c in LIMIT_COLUMNS]


def _parse_bool(s: str) -> bool:
    if s not in ("true", "false"):
        raise DatasetFormatError(f"bad boolean {s!r}")
    return s == "true"


def _root_from(cells: dict) -> RootRecord:
    m = lambda k: mpf(cells[k])  # noqa: E731
    return RootRecord(
        theta=m("theta"),
        p=(m("p1"), m("p2"), m("p3")),
        q=(m("q1"), m("q2"), m("q3")),
        w=(m("w1"), m("w2"), m("w3")),
        det_value=m("det"),
        bracket_width=m("bracket_width"),
        cos_theta_scatter=m("cos_scatter"),
        angle_ok=_parse_bool(cells["angle_ok"]),
        seed=int(cells["seed"]),
        iterations_used=int(cells["iterations"]),
    )


def _limit_from(cells: dict) -> LimitEvaluation:
    return LimitEvaluation(**{c: mpf(cells[c]) for c in LIMIT_COLUMNS})


def _bits(ds: Dataset) -> int:
    return int(ds.metadata.get("precision_bits", 200))


def serialize(ds: Dataset, fmt: str) -> str:
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    bits = _bits(ds)
    meta = {"kind": ds.kind, **ds.metadata}
    rowfn = _root_row if ds.kind == "roots" else _limit_row
    rows = [rowfn(r, bits) for r in ds.rows]
    if fmt == "json":
        doc = {"metadata": meta, "columns": list(ds.columns), "rows": [dict(zip(ds.columns, r)) for r in rows]}
        return json.dumps(doc, indent=1, sort_keys=False) + "\n"
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}: {json.dumps(v)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ds.columns)
    w.writerows(rows)
    return buf.getvalue()


def parse(text: str, fmt: str) -> Dataset:
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    if fmt == "json":
        try:
            doc = json.loads(text)
            meta, raw = dict(doc["metadata"]), doc["rows"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DatasetFormatError(f"malformed JSON dataset: {exc}") from exc
    else:
        meta = {}
        lines = text.splitlines()
        body = []
        for line in lines:
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition(": ")
                try:
                    meta[key] = json.loads(val)
                except json.JSONDecodeError as exc:
                    raise DatasetFormatError(f"bad metadata line {line!r}") from exc
            else:
                body.append(line)
        raw = list(csv.DictReader(body))
    kind = meta.pop("kind", "roots")
    ds = Dataset(kind, [], meta)
    conv = _root_from if kind == "roots" else _limit_from
    with precision(_bits(ds)):
        try:
            ds.rows = [conv(r) for r in raw]
        except (KeyError, ValueError, TypeError) as exc:
            raise DatasetFormatError(f"malformed row: {exc}") from exc
    return ds


def format_from_path(path: str | os.PathLike, default: str = "csv") -> str:
    ext = Path(path).suffix.lower().lstrip(".")
    return ext if ext in FORMATS else default


def write_atomic(path: str | os.PathLike, text: str) -> Path:
    """Write ``text`` to a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def save(ds: Dataset, path: str | os.PathLike, fmt: str | None = None) -> Path:
    fmt = fmt or format_from_path(path)
    ext = Path(path).suffix.lower().lstrip(".")
    if ext in FORMATS and ext != fmt:
        raise ValueError(f"format {fmt!r} does not match file extension .{ext}")
    return write_atomic(path, serialize(ds, fmt))


def load(path: str | os.PathLike, fmt: str | None = None) -> Dataset:
    fmt = fmt or format_from_path(path)
    return parse(Path(path).read_text(encoding="utf-8"), fmt)


def spherical_angles(v) -> tuple[mpf, mpf]:
    """(azimuth, polar) in radians: azimuth = atan2(y, x), polar measured from +z."""
    x, y, z = (mpf(c) for c in v)
    r = mpmath.sqrt(x * x + y * y + z * z)
    if r == 0:
        raise ValueError("angles of the zero vector are undefined")
    return mpmath.atan2(y, x), mpmath.acos(max(-1, min(1, z / r)))


def angular_table(ds: Dataset, which: str) -> list[tuple[mpf, mpf, mpf]]:
    """(azimuth, polar, theta) of vector ``which`` for every record."""
    if which not in ("p", "q", "w"):
        raise ValueError("which must be one of p, q, w")
    if ds.kind != "roots":
        raise ValueError("angular export needs a root dataset")
    if not ds.rows:
        raise ValueError("dataset is empty")
    with precision(_bits(ds)):
        return [(*spherical_angles(getattr(r, which)), r.theta) for r in ds.rows]


def metadata(**extra: Any) -> dict:
    from . import __version__

    return {"tool": "comjac", "version": __version__, "timestamp": timestamp(), **extra}
