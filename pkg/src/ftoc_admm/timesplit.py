"""Time-splitting ADMM over the horizon, with the stage QPs solved by the
three-set splitting solver (hierarchical scheme).

One outer iteration is

1. solve the N+1 stage QPs (independent, optionally on worker processes),
2. average the two copies of every interior state,
3. update the scaled consensus duals ``w`` and ``v``,

followed by a gather that evaluates the primal/dual residuals.

Arrays ``z``, ``w`` and ``v`` are stored with N+1 rows so that row ``t`` is
the variable of time ``t``; row 0 is unused and stays zero.
"""

from __future__ import annotations

import logging
import math
import multiprocessing as mp
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, NamedTuple

import numpy as np

from . import qp3split
from .model import (
    FtocProblem,
    StageRole,
    StandardQp,
    assemble_stage_qp,
    objective_value,
    stage_linear_terms,
    validate,
)
from .qp3split import InnerConfig, InnerState, Status

__all__ = [
    "FtocSolution",
    "OuterConfig",
    "OuterState",
    "ProcessorAction",
    "ResidualReport",
    "SchedulePlan",
    "StageSolver",
    "outer_residuals",
    "parallel_schedule",
    "solve_ftoc",
    "step1_stage_solve",
    "step2_average",
    "step3_duals",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OuterConfig:
    """Settings of the outer loop.

    ``inner`` defaults to the outer ``rho`` and tolerances. ``workers`` > 1
    runs the stage solves on that many processes. ``compact_terminal``
    solves the last stage over ``x_N`` only instead of the padded
    ``(x_N, u_N, x_{N+1})`` vector.
    """

    rho: float = 1.0
    eps_pri: float = 1e-4
    eps_dual: float = 1e-3
    tol_mode: Literal["direct", "absrel"] = "direct"
    eps_abs: float = 1e-4
    eps_rel: float = 1e-3
    max_iterations: int = 5000
    inner: InnerConfig | None = None
    workers: int = 1
    warm_start: bool = True
    compact_terminal: bool = False
    start_method: str | None = None

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.tol_mode not in ("direct", "absrel"):
            raise ValueError(f"unknown tol_mode {self.tol_mode!r}")

    @property
    def inner_config(self) -> InnerConfig:
        if self.inner is not None:
            return self.inner
        return InnerConfig(rho=self.rho, eps_pri=self.eps_pri, eps_dual=self.eps_dual,
                           tol_mode=self.tol_mode, eps_abs=self.eps_abs, eps_rel=self.eps_rel)

    def replace(self, **changes) -> "OuterConfig":
        return replace(self, **changes)


@dataclass
class OuterState:
    xs: np.ndarray  # (N+1, 2n+m) stage vectors (x_t, u_t, x_{t+1})
    z: np.ndarray  # (N+1, n) consensus states, row 0 unused
    w: np.ndarray  # (N+1, n) duals of x_t^(t) = z_t, row 0 unused
    v: np.ndarray  # (N+1, n) duals of x_t^(t-1) = z_t, row 0 unused
    k: int = 0

    @classmethod
    def zeros(cls, p: FtocProblem) -> "OuterState":
        n, N = p.n, p.N
        return cls(np.zeros((N + 1, p.stage_dimension)), np.zeros((N + 1, n)),
                   np.zeros((N + 1, n)), np.zeros((N + 1, n)))

    def copy(self) -> "OuterState":
        return OuterState(self.xs.copy(), self.z.copy(), self.w.copy(), self.v.copy(), self.k)


class ResidualReport(NamedTuple):
    k: int
    primal: float
    dual: float
    eps_pri: float
    eps_dual: float

    @property
    def converged(self) -> bool:
        return self.primal <= self.eps_pri and self.dual <= self.eps_dual


@dataclass
class FtocSolution:
    states: np.ndarray  # (N+1, n)
    inputs: np.ndarray  # (N+1, m); the last row is the (unused) terminal input, fixed to 0
    objective: float
    iterations: int
    inner_iterations: np.ndarray  # cumulative per stage
    status: Status
    history: list
    inner_max_iter_events: int = 0
    factorization_time: float = 0.0
    solve_time: float = 0.0
    workers: int = 1
    state: OuterState | None = field(default=None, repr=False)

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED

    @property
    def average_inner_iterations(self) -> float:
        solves = self.iterations * self.inner_iterations.size
        return float(self.inner_iterations.sum() / solves) if solves else 0.0


class StageSolver:
    """Owns one stage QP: its fixed data, factorizations and warm start."""

    def __init__(self, p: FtocProblem, t: int, cfg: OuterConfig):
        self.p = p
        self.t = t
        self.role = StageRole.for_stage(t, p.N)
        self.rho = cfg.rho
        self.inner_cfg = cfg.inner_config
        self.warm_start = cfg.warm_start
        self.compact = cfg.compact_terminal and self.role.kind == "last"
        n, N = p.n, p.N
        zero = np.zeros(n)
        tic = time.perf_counter()
        if self.compact:
            # terminal stage over x_N alone; the padded copies carry no information
            Hx = p.H[N][:, :n]
            self.qp = StandardQp(p.Q + self.rho * np.eye(n), np.zeros(n), 0.0, np.zeros((0, n)),
                                 np.zeros(0), Hx, np.asarray(p.h[N], dtype=float))
        else:
            self.qp = assemble_stage_qp(p, self.role, self.rho, zero, zero, zero, zero)
        self.factors = qp3split.prefactor(self.qp, self.inner_cfg.rho)
        self.factorization_time = time.perf_counter() - tic
        self.state: InnerState | None = None
        self.iterations = 0
        self.max_iter_events = 0
        self.inner_callback = None

    def solve(self, z_t, z_next, w_t, v_next) -> tuple[np.ndarray, int, Status]:
        q, r = stage_linear_terms(self.p, self.role, self.rho, z_t, z_next, w_t, v_next)
        if self.compact:
            q = q[:self.p.n]
        qp = replace(self.qp, q=q, r=r)
        warm = self.state if self.warm_start else None
        cb = None
        if self.inner_callback is not None:
            cb = lambda st, res: self.inner_callback(self.t, st, res)  # noqa: E731
        sol, self.state = qp3split.solve(qp, self.inner_cfg, warm, self.factors, cb)
        self.iterations += sol.iterations
        if not sol.converged:
            self.max_iter_events += 1
            log.warning("stage %d: inner solver hit %d iterations", self.t, sol.iterations)
        x = sol.x
        if self.compact:
            x = np.concatenate([x, np.zeros(self.p.n + self.p.m)])
        return x, sol.iterations, sol.status


def step1_stage_solve(stage: StageSolver, state: OuterState) -> np.ndarray:
    """New stage vector for ``stage.t`` from the current consensus and duals."""
    return _solve_stage(stage, state.z, state.w, state.v)[0]


def step2_average(xs: np.ndarray, n: int, m: int, w=None, v=None) -> np.ndarray:
    """``z_t = (G0 xs_t + G1 xs_{t-1}) / 2`` for t = 1..N (row 0 left at zero).

    Given the duals, ``(G0 xs_t - w_t + G1 xs_{t-1} - v_t) / 2`` is used: the
    exact minimizer, identical to the average while ``w + v = 0`` and immune to
    round-off drift of that sum.
    """
    z = np.zeros((xs.shape[0], n))
    if w is None:
        z[1:] = (xs[1:, :n] + xs[:-1, n + m:]) / 2.0
    else:
        z[1:] = ((xs[1:, :n] - w[1:]) + (xs[:-1, n + m:] - v[1:])) / 2.0
    return z


def step3_duals(w: np.ndarray, v: np.ndarray, xs: np.ndarray, z: np.ndarray,
                n: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """``w_t += z_t - G0 xs_t`` and ``v_t += z_t - G1 xs_{t-1}`` for t = 1..N."""
    w_new = w.copy()
    v_new = v.copy()
    w_new[1:] = w[1:] - xs[1:, :n] + z[1:]
    v_new[1:] = v[1:] - xs[:-1, n + m:] + z[1:]
    return w_new, v_new


def outer_residuals(p: FtocProblem, cfg: OuterConfig, z_prev: np.ndarray, state: OuterState) -> ResidualReport:
    """Residuals of the consensus constraints, evaluated stage by stage.

    Primal blocks are ``G1 xs_{t-1} - z_t`` and ``G0 xs_t - z_t``; the dual
    block of stage ``t`` is ``rho (G0' dz_t + G1' dz_{t+1})``.
    """
    n, m, N = p.n, p.m, p.N
    xs, z = state.xs, state.z[1:]
    heads = xs[1:, :n]
    tails = xs[:-1, n + m:]
    primal = math.sqrt(np.sum((tails - z) ** 2) + np.sum((heads - z) ** 2))
    dz = z - z_prev[1:]
    S = np.zeros_like(xs)
    S[1:, :n] += dz
    S[:-1, n + m:] += dz
    dual = cfg.rho * math.sqrt(np.sum(S ** 2))
    if cfg.tol_mode == "direct":
        return ResidualReport(state.k, primal, dual, cfg.eps_pri, cfg.eps_dual)
    ax = math.sqrt(np.sum(heads ** 2) + np.sum(tails ** 2))
    bz = math.sqrt(2.0 * np.sum(z ** 2))
    eps_pri = cfg.eps_abs * math.sqrt(N * 2 * n) + cfg.eps_rel * max(ax, bz, 0.0)
    D = np.zeros_like(xs)
    D[1:, :n] += state.w[1:]
    D[:-1, n + m:] += state.v[1:]
    eps_dual = cfg.eps_abs * math.sqrt((2 * n + m) * (N + 1)) + cfg.eps_rel * math.sqrt(np.sum(D ** 2))
    return ResidualReport(state.k, primal, dual, eps_pri, eps_dual)


class ProcessorAction(NamedTuple):
    kind: Literal["recv", "compute", "send"]
    peer: int | None
    items: tuple


@dataclass(frozen=True)
class SchedulePlan:
    """Assignment of stages to workers for one synchronous outer iteration.

    Each outer iteration runs three phases separated by barriers: stage
    solves, averaging/dual updates, and the residual gather.
    """

    N: int
    workers: int
    partitions: tuple

    phases = ("stage_solve", "average_and_dual", "gather_residuals")

    def worker_of(self, t: int) -> int:
        for j, part in enumerate(self.partitions):
            if t in part:
                return j
        raise IndexError(t)

    def actions(self, t: int) -> list[ProcessorAction]:
        """Message pattern of the processor that owns stage ``t`` when every
        stage has its own processor."""
        N = self.N
        acts = []
        if t < N:
            acts.append(ProcessorAction("recv", t + 1, ("z", "v")))
        acts.append(ProcessorAction("compute", None, ("x",)))
        if t > 0:
            acts.append(ProcessorAction("recv", t - 1, ("x",)))
            acts.append(ProcessorAction("compute", None, ("z",)))
            acts.append(ProcessorAction("compute", None, ("w", "v")))
            acts.append(ProcessorAction("send", t - 1, ("x", "z", "v")))
        if t < N:
            acts.append(ProcessorAction("send", t + 1, ("x",)))
        return acts


def parallel_schedule(N: int, workers: int) -> SchedulePlan:
    """Split stages 0..N into ``workers`` contiguous, balanced blocks."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    workers = min(workers, N + 1)
    parts = tuple(tuple(int(t) for t in blk) for blk in np.array_split(np.arange(N + 1), workers))
    return SchedulePlan(N, workers, parts)


class _SerialExecutor:
    def __init__(self, p: FtocProblem, cfg: OuterConfig, stages):
        self.solvers = [StageSolver(p, t, cfg) for t in stages]
        self.factorization_time = sum(s.factorization_time for s in self.solvers)

    def solve_all(self, z, w, v):
        return [(s.t,) + _solve_stage(s, z, w, v) for s in self.solvers]

    def stats(self):
        return [(s.t, s.iterations, s.max_iter_events) for s in self.solvers]

    def close(self):
        pass


def _solve_stage(s: StageSolver, z, w, v):
    t, N = s.t, s.p.N
    x, iters, status = s.solve(z[t] if t > 0 else None, z[t + 1] if t < N else None,
                               w[t] if t > 0 else None, v[t + 1] if t < N else None)
    return x, iters, status is Status.CONVERGED


def _worker_main(conn, p, cfg, stages):
    ex = _SerialExecutor(p, cfg, stages)
    conn.send(ex.factorization_time)
    while True:
        msg = conn.recv()
        if msg is None:
            conn.send(ex.stats())
            break
        conn.send(ex.solve_all(*msg))
    conn.close()


class _ProcessExecutor:
    def __init__(self, p: FtocProblem, cfg: OuterConfig, plan: SchedulePlan):
        ctx = mp.get_context(cfg.start_method or ("fork" if "fork" in mp.get_all_start_methods() else "spawn"))
        self.conns = []
        self.procs = []
        for part in plan.partitions:
            parent, child = ctx.Pipe()
            proc = ctx.Process(target=_worker_main, args=(child, p, cfg, part), daemon=True)
            proc.start()
            child.close()
            self.conns.append(parent)
            self.procs.append(proc)
        # workers factor concurrently; the slowest one bounds the setup
        self.factorization_time = max(c.recv() for c in self.conns)
        self._stats = None

    def solve_all(self, z, w, v):
        msg = (z, w, v)
        for c in self.conns:
            c.send(msg)
        out = []
        for c in self.conns:  # barrier
            out.extend(c.recv())
        return out

    def stats(self):
        if self._stats is None:
            self._stats = []
            for c in self.conns:
                c.send(None)
                self._stats.extend(c.recv())
        return self._stats

    def close(self):
        self.stats()
        for c in self.conns:
            c.close()
        for proc in self.procs:
            proc.join(timeout=5)
            if proc.is_alive():
                proc.terminate()


def solve_ftoc(problem: FtocProblem, cfg: OuterConfig | None = None,
               callback: Callable[[OuterState, ResidualReport], None] | None = None,
               inner_callback: Callable | None = None) -> FtocSolution:
    """Solve the horizon problem with hierarchical time splitting.

    All primal and dual variables start at zero. The inner solver of every
    stage is warm-started from its previous state unless ``cfg.warm_start``
    is off. ``callback(state, report)`` runs after every outer iteration and
    ``inner_callback(t, inner_state, residuals)`` after every inner iteration
    (serial execution only).
    """
    cfg = cfg or OuterConfig()
    p = validate(problem)
    n, m, N = p.n, p.m, p.N
    plan = parallel_schedule(N, cfg.workers)
    if plan.workers == 1:
        executor = _SerialExecutor(p, cfg, range(N + 1))
        for s in executor.solvers:
            s.inner_callback = inner_callback
    elif inner_callback is not None:
        raise ValueError("inner_callback requires serial execution (workers=1)")
    else:
        executor = _ProcessExecutor(p, cfg, plan)
    state = OuterState.zeros(p)
    history = []
    status = Status.MAX_ITERATIONS
    events = 0
    tic = time.perf_counter()
    try:
        for _ in range(cfg.max_iterations):
            results = executor.solve_all(state.z, state.w, state.v)
            xs = np.empty_like(state.xs)
            for t, x, _iters, ok in results:
                xs[t] = x
                events += not ok
            z = step2_average(xs, n, m, state.w, state.v)
            w, v = step3_duals(state.w, state.v, xs, z, n, m)
            z_prev = state.z
            state = OuterState(xs, z, w, v, state.k + 1)
            report = outer_residuals(p, cfg, z_prev, state)
            history.append(report)
            if callback is not None:
                callback(state, report)
            if report.converged:
                status = Status.CONVERGED
                break
        stats = executor.stats()
    finally:
        executor.close()
    solve_time = time.perf_counter() - tic
    inner_iterations = np.zeros(N + 1, dtype=int)
    for t, iters, _ in stats:
        inner_iterations[t] = iters
    states, inputs = extract_trajectory(p, state)
    return FtocSolution(
        states=states,
        inputs=inputs,
        objective=objective_value(p, states, inputs),
        iterations=state.k,
        inner_iterations=inner_iterations,
        status=status,
        history=history,
        inner_max_iter_events=events,
        factorization_time=executor.factorization_time,
        solve_time=solve_time,
        workers=plan.workers,
        state=state,
    )


def extract_trajectory(p: FtocProblem, state: OuterState) -> tuple[np.ndarray, np.ndarray]:
    """States from the consensus variables, inputs from the stage vectors."""
    n, m, N = p.n, p.m, p.N
    states = np.empty((N + 1, n))
    states[0] = state.xs[0, :n]
    states[1:] = state.z[1:]
    inputs = np.zeros((N + 1, m))
    inputs[:N] = state.xs[:N, n:n + m]
    return states, inputs
