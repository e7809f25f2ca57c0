"""Run the solvers on one problem and summarize the outcome as a report row."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .. import qp3split
from ..model import FtocProblem, check_feasibility, objective_value, split_stacked, stacked_qp, validate
from ..oracle import MAX_ENUMERATED_ROWS, oracle_solve_ftoc
from ..qp3split import InnerConfig, Status
from ..timesplit import OuterConfig, solve_ftoc
from .report import BenchRow

__all__ = [
    "ACTIVE_TOL",
    "SOLVERS",
    "SolveOutcome",
    "count_active",
    "make_row",
    "oracle_gap",
    "run_bench_row",
    "run_solver",
]

SOLVERS = ("hier", "3set-full", "oracle")

# a row counts as active when its slack is below ACTIVE_TOL * (1 + |h_i|)
ACTIVE_TOL = 1e-3


@dataclass
class SolveOutcome:
    solver: str
    status: str
    states: np.ndarray
    inputs: np.ndarray
    objective: float
    outer_iterations: int | None
    inner_iterations: np.ndarray | None
    avg_inner_iterations: float
    factorization_time: float
    solve_time: float

    @property
    def converged(self) -> bool:
        return self.status == Status.CONVERGED.value


def count_active(p: FtocProblem, states, inputs, tol: float = ACTIVE_TOL) -> tuple[int, int]:
    """Active rows at a trajectory, split into (input box rows, other rows).

    Row kinds come from ``meta["row_kinds"]`` when the generator recorded
    them; otherwise rows touching only inputs count as box rows.
    """
    kinds = p.meta.get("row_kinds")
    box = other = 0
    for t in range(p.N + 1):
        Ht, ht = p.H[t], p.h[t]
        if Ht.shape[0] == 0:
            continue
        slack = ht - Ht @ np.concatenate([states[t], inputs[t]])
        active = slack <= tol * (1.0 + np.abs(ht))
        if kinds is not None:
            is_box = np.array([k == "box" for k in kinds[t]], dtype=bool)
        else:
            is_box = np.all(Ht[:, :p.n] == 0, axis=1)
        box += int(np.sum(active & is_box))
        other += int(np.sum(active & ~is_box))
    return box, other


def run_solver(problem: FtocProblem, solver: str, cfg: OuterConfig) -> SolveOutcome:
    """Solve with ``hier`` (nested splitting), ``3set-full`` (three-set
    splitting on the whole stacked QP) or ``oracle`` (active-set enumeration)."""
    p = validate(problem)
    if solver == "hier":
        sol = solve_ftoc(p, cfg)
        return SolveOutcome(solver, sol.status.value, sol.states, sol.inputs, sol.objective, sol.iterations,
                            sol.inner_iterations, sol.average_inner_iterations, sol.factorization_time,
                            sol.solve_time)
    if solver == "3set-full":
        qp = stacked_qp(p)
        icfg = cfg.inner_config.replace(max_iterations=cfg.max_iterations * 10)
        tic = time.perf_counter()
        factors = qp3split.prefactor(qp, icfg.rho)
        fact = time.perf_counter() - tic
        tic = time.perf_counter()
        res, _ = qp3split.solve(qp, icfg, factors=factors)
        elapsed = time.perf_counter() - tic
        states, inputs = split_stacked(p, res.x)
        return SolveOutcome(solver, res.status.value, states, inputs, objective_value(p, states, inputs), None,
                            None, float(res.iterations), fact, elapsed)
    if solver == "oracle":
        tic = time.perf_counter()
        sol = oracle_solve_ftoc(p)
        elapsed = time.perf_counter() - tic
        states, inputs = split_stacked(p, sol.x)
        return SolveOutcome(solver, Status.CONVERGED.value, states, inputs, sol.objective, None, None, 0.0,
                            0.0, elapsed)
    raise ValueError(f"unknown solver {solver!r}; choose from {SOLVERS}")


def make_row(p: FtocProblem, cfg: OuterConfig, out: SolveOutcome, *, label: str, seed: int, threads: int = 1,
             serial_ms: float | None = None, parallel_ms: float | None = None,
             gap: float | None = None) -> BenchRow:
    box, other = count_active(p, out.states, out.inputs)
    return BenchRow(
        label=label, n=p.n, m=p.m, N=p.N, total_variables=p.stacked_dimension, rho=cfg.rho,
        tol_pri=cfg.eps_pri if cfg.tol_mode == "direct" else cfg.eps_abs,
        tol_dual=cfg.eps_dual if cfg.tol_mode == "direct" else cfg.eps_rel,
        seed=seed, status=out.status,
        outer_iterations=out.outer_iterations if out.outer_iterations is not None else 0,
        avg_inner_iterations=out.avg_inner_iterations,
        factorization_ms=1e3 * out.factorization_time, solve_ms_serial=serial_ms,
        solve_ms_parallel=parallel_ms, threads=threads, objective=out.objective, oracle_gap=gap,
        active_box=box, active_inequality=other,
    )


def oracle_gap(p: FtocProblem, objective: float) -> float | None:
    """Relative objective gap to the oracle, or None when it cannot enumerate."""
    if sum(h.shape[0] for h in p.h) > MAX_ENUMERATED_ROWS:
        return None
    ref = oracle_solve_ftoc(p)
    return abs(objective - ref.objective) / (1.0 + abs(ref.objective))


def run_bench_row(problem: FtocProblem, cfg: OuterConfig, *, label: str, seed: int, threads: int = 1,
                  solver: str = "hier", with_oracle: bool = False) -> tuple[BenchRow, SolveOutcome]:
    """Serial solve, plus a timed parallel solve when ``threads > 1``."""
    p = validate(problem)
    out = run_solver(p, solver, cfg.replace(workers=1))
    parallel_ms = None
    if threads > 1 and solver == "hier":
        par = run_solver(p, solver, cfg.replace(workers=threads))
        parallel_ms = 1e3 * par.solve_time
    gap = oracle_gap(p, out.objective) if with_oracle else None
    row = make_row(p, cfg, out, label=label, seed=seed, threads=threads, serial_ms=1e3 * out.solve_time,
                   parallel_ms=parallel_ms, gap=gap)
    return row, out


def feasibility(p: FtocProblem, out: SolveOutcome):
    return check_feasibility(p, out.states, out.inputs)
