"""Benchmark rows and their table/CSV rendering (times in milliseconds)."""

from __future__ import annotations

import csv
import io
from dataclasses import astuple, dataclass, fields

__all__ = ["BenchRow", "COLUMNS", "emit_report", "parse_csv"]


@dataclass(frozen=True)
class BenchRow:
    label: str
    n: int
    m: int
    N: int
    total_variables: int
    rho: float
    tol_pri: float
    tol_dual: float
    seed: int
    status: str
    outer_iterations: int
    avg_inner_iterations: float
    factorization_ms: float
    solve_ms_serial: float | None  # None when only a parallel run was made
    solve_ms_parallel: float | None  # None when no parallel run was made
    threads: int
    objective: float
    oracle_gap: float | None  # None when no reference solution is available
    active_box: int
    active_inequality: int


COLUMNS = tuple(f.name for f in fields(BenchRow))
_TYPES = {f.name: f.type for f in fields(BenchRow)}


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4g}" if abs(value) < 1e5 else f"{value:.0f}"
    return str(value)


def emit_report(rows, fmt: str = "table") -> str:
    """Render rows as an aligned text table or as CSV (lossless)."""
    rows = list(rows)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in rows:
            writer.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in astuple(row)])
        return buf.getvalue()
    if fmt != "table":
        raise ValueError(f"unknown report format {fmt!r}")
    cells = [list(COLUMNS)] + [[_fmt(v) for v in astuple(r)] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(COLUMNS))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _convert(name: str, text: str):
    kind = _TYPES[name]
    if kind.endswith("| None"):
        if text == "":
            return None
        kind = kind.split("|")[0].strip()
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    return text


def parse_csv(text: str) -> list[BenchRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        return []
    if tuple(header) != COLUMNS:
        raise ValueError(f"unexpected CSV header {header}")
    return [BenchRow(**{k: _convert(k, v) for k, v in zip(COLUMNS, rec)}) for rec in reader if rec]
