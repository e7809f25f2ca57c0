"""Versioned JSON documents for problems (``ftoc-v1``) and solutions (``sol-v1``).

Problem document::

    {"format": "ftoc-v1", "n": int, "m": int, "N": int,
     "Q": [[...]], "R": [[...]],
     "A": [N matrices], "B": [N matrices], "c": [N vectors],
     "x_init": [...],
     "H": [N+1 matrices, p_t x (n+m)], "h": [N+1 vectors],
     "meta": {...}}            # optional provenance, ignored by solvers

Solution document::

    {"format": "sol-v1", "solver": str, "status": str, "objective": float,
     "states": [N+1 vectors], "inputs": [N+1 vectors],
     "outer_iterations": int | null, "inner_iterations": [N+1 ints] | null,
     "max_dynamics_violation": float, "max_inequality_violation": float}

Matrices are nested row-major lists. Floats are written with ``repr`` so a
read-back is bitwise exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..model import FtocProblem

__all__ = [
    "PROBLEM_FORMAT",
    "SOLUTION_FORMAT",
    "FileFormatError",
    "dump_problem",
    "load_problem",
    "problem_from_dict",
    "problem_to_dict",
    "read_solution",
    "write_problem",
    "write_solution",
]

PROBLEM_FORMAT = "ftoc-v1"
SOLUTION_FORMAT = "sol-v1"


class FileFormatError(ValueError):
    """Document is not valid JSON or lacks required fields."""


def _mat(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def problem_to_dict(p: FtocProblem) -> dict:
    return {
        "format": PROBLEM_FORMAT,
        "n": p.n,
        "m": p.m,
        "N": p.N,
        "Q": _mat(p.Q),
        "R": _mat(p.R),
        "A": [_mat(a) for a in p.A],
        "B": [_mat(b) for b in p.B],
        "c": [_mat(c) for c in p.c],
        "x_init": _mat(p.x_init),
        "H": [_mat(h) for h in p.H],
        "h": [_mat(h) for h in p.h],
        "meta": p.meta,
    }


def problem_from_dict(doc: dict) -> FtocProblem:
    if doc.get("format") != PROBLEM_FORMAT:
        raise FileFormatError(f"expected format {PROBLEM_FORMAT!r}, got {doc.get('format')!r}")
    missing = [k for k in ("n", "m", "N", "Q", "R", "A", "B", "c", "x_init") if k not in doc]
    if missing:
        raise FileFormatError(f"missing fields: {', '.join(missing)}")
    n, m = int(doc["n"]), int(doc["m"])
    H = doc.get("H")
    h = doc.get("h")
    if H is not None:
        H = [np.asarray(x, dtype=float).reshape(-1, n + m) for x in H]
    try:
        p = FtocProblem.build(doc["Q"], doc["R"], doc["A"], doc["B"], doc["c"], doc["x_init"],
                              H, h, doc.get("meta"))
    except (TypeError, ValueError) as exc:
        raise FileFormatError(f"malformed problem data: {exc}") from exc
    if (p.n, p.m, p.N) != (n, m, int(doc["N"])):
        raise FileFormatError(f"declared sizes {(n, m, doc['N'])} disagree with data {(p.n, p.m, p.N)}")
    return p


def dump_problem(p: FtocProblem) -> str:
    return json.dumps(problem_to_dict(p), indent=1)


def write_problem(p: FtocProblem, path) -> None:
    Path(path).write_text(dump_problem(p))


def load_problem(path) -> FtocProblem:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise FileFormatError(f"{path}: top level must be an object")
    return problem_from_dict(doc)


def write_solution(path, *, solver: str, status: str, objective: float, states, inputs,
                   outer_iterations=None, inner_iterations=None,
                   max_dynamics_violation=0.0, max_inequality_violation=0.0) -> None:
    doc = {
        "format": SOLUTION_FORMAT,
        "solver": solver,
        "status": status,
        "objective": float(objective),
        "states": _mat(states),
        "inputs": _mat(inputs),
        "outer_iterations": outer_iterations,
        "inner_iterations": None if inner_iterations is None else [int(i) for i in inner_iterations],
        "max_dynamics_violation": float(max_dynamics_violation),
        "max_inequality_violation": float(max_inequality_violation),
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def read_solution(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != SOLUTION_FORMAT:
        raise FileFormatError(f"{path}: expected format {SOLUTION_FORMAT!r}")
    doc["states"] = np.asarray(doc["states"], dtype=float)
    doc["inputs"] = np.asarray(doc["inputs"], dtype=float)
    return doc
