"""Acceptance gate: one test per criterion, each logging a PASS/FAIL line.

Tolerances are pinned here exactly as required; instance families come from
``helpers`` and the benchmark generator with fixed seeds.
"""

import math
import os
import time

import numpy as np
import pytest

from ftoc_admm.bench import SIZE_PRESETS, GeneratorSpec, generate
from ftoc_admm.model import FtocProblem, StandardQp, split_stacked
from ftoc_admm.oracle import oracle_solve_ftoc, oracle_solve_qp
from ftoc_admm.qp3split import InnerConfig, InnerState, inner_residuals, solve
from ftoc_admm.timesplit import OuterConfig, StageSolver, outer_residuals, solve_ftoc
from helpers import random_ftoc, random_qp

QP_SEEDS = range(100)
FTOC_SEEDS = range(1000, 1030)
SMALL = SIZE_PRESETS["small"]
MEDIUM = SIZE_PRESETS["medium"]


def small_problem(seed):
    return generate(GeneratorSpec(n=SMALL["n"], m=SMALL["m"], N=SMALL["N"], seed=seed))


@pytest.fixture(scope="module")
def qp_suite():
    """Criterion-1 instances solved by the oracle and the splitting solver."""
    out = []
    for seed in QP_SEEDS:
        qp = random_qp(np.random.default_rng(seed))
        sums = []
        sol, _ = solve(qp, InnerConfig(rho=1.0, eps_pri=1e-4, eps_dual=1e-3),
                       callback=lambda s, r: sums.append(np.max(np.abs(s.zd1 + s.zd2 + s.zd3), initial=0.0)))
        out.append((seed, qp, oracle_solve_qp(qp), sol, max(sums)))
    return out


@pytest.fixture(scope="module")
def ftoc_suite():
    """Criterion-2 instances solved by the oracle and the time-splitting solver."""
    out = []
    for seed in FTOC_SEEDS:
        p = random_ftoc(np.random.default_rng(seed))
        outer, inner = [], []
        sol = solve_ftoc(p, OuterConfig(),
                         callback=lambda s, r: outer.append(np.max(np.abs(s.w[1:] + s.v[1:]))),
                         inner_callback=lambda t, s, r: inner.append(
                             np.max(np.abs(s.zd1 + s.zd2 + s.zd3), initial=0.0)))
        out.append((seed, p, oracle_solve_ftoc(p), sol, max(outer), max(inner)))
    return out


def test_criterion_1_inner_solver_matches_oracle(qp_suite, record_criterion):
    worst_x = worst_obj = 0.0
    failures = []
    for seed, qp, ref, sol, _ in qp_suite:
        scale_x = np.max(np.abs(ref.x))
        ex = np.max(np.abs(sol.x - ref.x)) / (1 + scale_x)
        eo = abs(sol.objective - ref.objective) / (1 + abs(ref.objective))
        worst_x, worst_obj = max(worst_x, ex), max(worst_obj, eo)
        if not (sol.converged and ex <= 1e-2 and eo <= 1e-3):
            failures.append(f"seed {seed} (x {ex:.2e}, obj {eo:.2e})")
    ok = record_criterion(
        "1 inner solver vs oracle", not failures,
        f"{len(qp_suite) - len(failures)}/{len(qp_suite)} within bounds; worst x {worst_x:.2e} (<=1e-2), "
        f"worst obj {worst_obj:.2e} (<=1e-3)" + (f"; failing: {', '.join(failures)}" if failures else ""))
    assert ok


def test_criterion_2_full_problem_matches_oracle(ftoc_suite, record_criterion):
    worst_obj = worst_traj = 0.0
    failures = []
    for seed, p, ref, sol, _, _ in ftoc_suite:
        X, U = split_stacked(p, ref.x)
        traj = max(np.max(np.abs(sol.states - X)), np.max(np.abs(sol.inputs - U)))
        obj = abs(sol.objective - ref.objective) / max(abs(ref.objective), 1e-12)
        worst_obj, worst_traj = max(worst_obj, obj), max(worst_traj, traj)
        if not (sol.converged and obj <= 1e-2 and traj <= 1e-2):
            failures.append(f"seed {seed}")
    ok = record_criterion(
        "2 full problem vs oracle", not failures,
        f"{len(ftoc_suite) - len(failures)}/{len(ftoc_suite)}; worst rel obj {worst_obj:.2e}, "
        f"worst trajectory {worst_traj:.2e} (both <=1e-2)" + (f"; failing: {', '.join(failures)}" if failures else ""))
    assert ok


def test_criterion_3_dual_sum_identities(qp_suite, ftoc_suite, record_criterion):
    inner_qp = max(s for *_, s in qp_suite)
    outer = max(o for *_, o, _ in ftoc_suite)
    inner_ftoc = max(i for *_, i in ftoc_suite)
    worst = max(inner_qp, outer, inner_ftoc)
    ok = record_criterion(
        "3 dual-sum identities", worst <= 1e-14,
        f"max |w+v| {outer:.1e}, max |sum of inner duals| {max(inner_qp, inner_ftoc):.1e} over every iteration "
        f"of {len(qp_suite)} QPs and {len(ftoc_suite)} horizon problems (<=1e-14)")
    assert ok


def _inner_explicit(qp, cfg, before, after):
    n, p = qp.n, qp.p
    I, Z = np.eye(n), np.zeros((n, n))
    A_res = np.block([[I, Z, Z], [Z, I, Z], [Z, Z, I], [np.zeros((p, 2 * n)), qp.H]])
    B_res = np.block([[-I, np.zeros((n, p))], [-I, np.zeros((n, p))], [-I, np.zeros((n, p))],
                      [np.zeros((p, n)), np.eye(p)]])
    c_res = np.concatenate([np.zeros(3 * n), qp.h])
    X = np.concatenate([after.x1, after.x2, after.x3])
    V = np.concatenate([after.z, after.y])
    dV = V - np.concatenate([before.z, before.y])
    r = np.linalg.norm(A_res @ X + B_res @ V - c_res)
    s = np.linalg.norm(cfg.rho * A_res.T @ B_res @ dV)
    eps_pri = cfg.eps_abs * math.sqrt(3 * n + p) + cfg.eps_rel * max(
        np.linalg.norm(A_res @ X), np.linalg.norm(B_res @ V), np.linalg.norm(c_res))
    duals = np.concatenate([after.zd1, after.zd2, after.zd3, after.yd])
    eps_dual = cfg.eps_abs * math.sqrt(3 * n) + cfg.eps_rel * np.linalg.norm(A_res.T @ duals)
    if cfg.tol_mode == "direct":
        eps_pri, eps_dual = cfg.eps_pri, cfg.eps_dual
    return r, s, eps_pri, eps_dual


def _outer_explicit(p, cfg, prev, cur):
    n, m, N = p.n, p.m, p.N
    d = 2 * n + m
    G0 = np.hstack([np.eye(n), np.zeros((n, n + m))])
    G1 = np.hstack([np.zeros((n, n + m)), np.eye(n)])
    A_res = np.zeros((N * 2 * n, (N + 1) * d))
    B_res = np.zeros((N * 2 * n, N * n))
    for t in range(1, N + 1):
        r0 = (t - 1) * 2 * n
        A_res[r0:r0 + n, (t - 1) * d:t * d] = G1
        A_res[r0 + n:r0 + 2 * n, t * d:(t + 1) * d] = G0
        B_res[r0:r0 + 2 * n, (t - 1) * n:t * n] = np.vstack([-np.eye(n), -np.eye(n)])
    c_res = np.zeros(N * 2 * n)
    X = cur.xs.ravel()
    Zc = cur.z[1:].ravel()
    dZ = Zc - prev.z[1:].ravel()
    r = np.linalg.norm(A_res @ X + B_res @ Zc - c_res)
    s = np.linalg.norm(cfg.rho * A_res.T @ B_res @ dZ)
    eps_pri = cfg.eps_abs * math.sqrt(N * 2 * n) + cfg.eps_rel * max(
        np.linalg.norm(A_res @ X), np.linalg.norm(B_res @ Zc), np.linalg.norm(c_res))
    duals = np.concatenate([np.concatenate([cur.v[t], cur.w[t]]) for t in range(1, N + 1)])
    eps_dual = cfg.eps_abs * math.sqrt(d * (N + 1)) + cfg.eps_rel * np.linalg.norm(A_res.T @ duals)
    if cfg.tol_mode == "direct":
        eps_pri, eps_dual = cfg.eps_pri, cfg.eps_dual
    return r, s, eps_pri, eps_dual


def test_criterion_4_residual_formulas(record_criterion):
    worst = 0.0
    checked = 0
    for mode in ("direct", "absrel"):
        # inner loop, n_q=5, m_eq=2, p=3
        qp = random_qp(np.random.default_rng(41), n_q=5, m_eq=2, p=3)
        cfg = InnerConfig(rho=1.7, tol_mode=mode, max_iterations=25)
        states = [InnerState.zeros(5, 2, 3)]
        solve(qp, cfg, callback=lambda s, r: states.append(s.copy()))
        for before, after in zip(states, states[1:]):
            got = inner_residuals(qp, cfg, before, after)
            ref = _inner_explicit(qp, cfg, before, after)
            for a, b in zip((got.primal, got.dual, got.eps_pri, got.eps_dual), ref):
                worst = max(worst, abs(a - b))
            checked += 1
        # outer loop, n=2, m=1, N=3
        p = random_ftoc(np.random.default_rng(42), n=2, m=1, N=3)
        ocfg = OuterConfig(rho=2.3, tol_mode=mode, max_iterations=25)
        seen = []
        solve_ftoc(p, ocfg, callback=lambda s, r: seen.append((s, r)))
        prev = seen[0][0].copy()
        prev.z[:] = 0.0
        for state, rep in seen:
            again = outer_residuals(p, ocfg, prev.z, state)
            ref = _outer_explicit(p, ocfg, prev, state)
            for a, b in zip((rep.primal, rep.dual, rep.eps_pri, rep.eps_dual), ref):
                worst = max(worst, abs(a - b))
            assert again == rep
            prev = state
            checked += 1
    ok = record_criterion("4 residual formulas vs explicit matrices", worst <= 1e-12,
                          f"{checked} iterations checked in both tolerance modes; max difference {worst:.1e} (<=1e-12)")
    assert ok


def _degenerate_instances():
    rng = np.random.default_rng(77)
    return {
        "no inequalities": random_ftoc(rng, n=3, m=2, N=4, constrained=False),
        "N=1": random_ftoc(rng, n=2, m=1, N=1),
        "zero disturbance": random_ftoc(rng, n=3, m=1, N=3, disturbance=False),
        "origin optimal": FtocProblem.build(np.eye(2), np.eye(1), [np.eye(2)] * 3, [np.ones((2, 1))] * 3,
                                            [np.zeros(2)] * 3, np.zeros(2)),
    }


def test_criterion_5a_parallel_determinism(ftoc_suite, record_criterion):
    worst = 0.0
    count = 0
    instances = [(p, sol) for _, p, _, sol, _, _ in ftoc_suite]
    instances += [(p, solve_ftoc(p)) for p in _degenerate_instances().values()]
    for p, serial in instances:
        for workers in (1, 2, p.N + 1):
            par = solve_ftoc(p, OuterConfig(workers=workers))
            diff = max(np.max(np.abs(par.states - serial.states)), np.max(np.abs(par.inputs - serial.inputs)))
            worst = max(worst, diff)
            count += 1
    ok = record_criterion("5a parallel determinism", worst <= 1e-12,
                          f"{count} runs with 1, 2 and N+1 workers; max deviation from serial {worst:.1e} (<=1e-12)")
    assert ok


def test_criterion_5b_measured_speedup(record_criterion):
    p = generate(GeneratorSpec(n=MEDIUM["n"], m=MEDIUM["m"], N=MEDIUM["N"], seed=0))
    cfg = OuterConfig(rho=MEDIUM["rho"])
    serial = solve_ftoc(p, cfg)
    parallel = solve_ftoc(p, cfg.replace(workers=4))
    speedup = serial.solve_time / parallel.solve_time
    cores = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count()
    same = np.array_equal(serial.states, parallel.states) and np.array_equal(serial.inputs, parallel.inputs)
    ok = record_criterion(
        "5b measured speedup (medium shape, 4 workers)", speedup > 1 and same,
        f"serial {1e3 * serial.solve_time:.0f} ms, 4 workers {1e3 * parallel.solve_time:.0f} ms, "
        f"speedup {speedup:.2f} (>1) on {cores} available core(s); identical solution: {same}")
    assert ok


def test_criterion_6_warm_start_reduces_inner_iterations(record_criterion):
    wins = 0
    totals = []
    for seed in range(20):
        p = small_problem(seed)
        cfg = OuterConfig(rho=SMALL["rho"], eps_pri=1e-3, eps_dual=1e-3)
        warm = solve_ftoc(p, cfg)
        cold = solve_ftoc(p, cfg.replace(warm_start=False))
        w, c = int(warm.inner_iterations.sum()), int(cold.inner_iterations.sum())
        totals.append((w, c))
        wins += w <= c
    ratio = np.mean([w / c for w, c in totals])
    ok = record_criterion("6 warm starting", wins >= 16,
                          f"warm <= cold on {wins}/20 instances (>=16); mean warm/cold inner-iteration ratio {ratio:.3f}")
    assert ok


def test_criterion_7_iteration_envelope(record_criterion):
    outer, inner, statuses = [], [], []
    for seed in range(20):
        sol = solve_ftoc(small_problem(seed), OuterConfig(rho=SMALL["rho"], eps_pri=1e-4, eps_dual=1e-3))
        outer.append(sol.iterations)
        inner.append(sol.average_inner_iterations)
        statuses.append(sol.converged)
    ok = all(statuses) and all(30 <= k <= 800 for k in outer) and all(3 <= a <= 60 for a in inner)
    record_criterion("7 iteration envelope (small shape, rho=15)", ok,
                     f"outer {min(outer)}..{max(outer)} (in [30, 800]), avg inner {min(inner):.1f}..{max(inner):.1f} "
                     f"(in [3, 60]), converged {sum(statuses)}/20")
    assert ok


def test_criterion_8_degenerate_cases(record_criterion):
    notes = []
    ok = True
    for name, p in _degenerate_instances().items():
        sol = solve_ftoc(p)
        X, U = split_stacked(p, oracle_solve_ftoc(p).x)
        err = max(np.max(np.abs(sol.states - X)), np.max(np.abs(sol.inputs - U)))
        good = sol.converged and err <= 1e-2
        if name == "origin optimal":
            good &= sol.iterations == 1 and sol.history[0].primal == 0.0 and sol.history[0].dual == 0.0
        ok &= good
        notes.append(f"{name} {'ok' if good else 'FAILED'} ({err:.1e})")
    # collapsed inner paths: no equality rows, no inequality rows, neither
    rng = np.random.default_rng(88)
    for label, m_eq, p_rows in (("m_eq=0", 0, 4), ("p=0", 2, 0), ("m_eq=p=0", 0, 0)):
        qp = random_qp(rng, n_q=6, m_eq=m_eq, p=p_rows)
        sol, _ = solve(qp, InnerConfig())
        err = np.max(np.abs(sol.x - oracle_solve_qp(qp).x))
        good = sol.converged and err <= 1e-2
        ok &= good
        notes.append(f"{label} {'ok' if good else 'FAILED'} ({err:.1e})")
    # the unpadded terminal stage has no equality factor
    p = random_ftoc(np.random.default_rng(89), n=3, m=1, N=3)
    last = StageSolver(p, p.N, OuterConfig())
    ok &= last.qp.m_eq == 0 and last.factors.equality.schur is None
    # two-set terminal stage versus the padded three-set one
    diff = 0.0
    for seed in range(10):
        p = random_ftoc(np.random.default_rng(2000 + seed))
        a = solve_ftoc(p)
        b = solve_ftoc(p, OuterConfig(compact_terminal=True))
        diff = max(diff, np.max(np.abs(a.states - b.states)), np.max(np.abs(a.inputs - b.inputs)))
    ok &= diff <= 1e-10
    notes.append(f"compact vs padded terminal stage {diff:.1e} (<=1e-10)")
    record_criterion("8 degenerate cases", bool(ok), "; ".join(notes))
    assert ok
