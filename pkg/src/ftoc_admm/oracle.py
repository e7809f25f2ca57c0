"""Brute-force reference QP solver.

Enumerates inequality subsets, treats each as equalities, solves the KKT
system and keeps the first candidate that is primal and dual feasible. Slow by
design (at most 2^16 subsets) but simple enough to audit, which is what a
validation oracle needs.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from .model import FtocProblem, StandardQp, stacked_qp, validate

__all__ = [
    "EnumerationLimit",
    "Infeasible",
    "OracleSolution",
    "MAX_ENUMERATED_ROWS",
    "oracle_solve_ftoc",
    "oracle_solve_qp",
]

log = logging.getLogger(__name__)

MAX_ENUMERATED_ROWS = 16


class Infeasible(RuntimeError):
    """No inequality subset produced a KKT point."""


class EnumerationLimit(ValueError):
    """Too many inequality rows to enumerate."""


@dataclass
class OracleSolution:
    x: np.ndarray
    nu: np.ndarray
    lam: np.ndarray  # multipliers of the active rows, aligned with active_set
    active_set: tuple
    objective: float

    def full_multipliers(self, p: int) -> np.ndarray:
        out = np.zeros(p)
        out[list(self.active_set)] = self.lam
        return out


def _kkt_candidate(qp: StandardQp, active: tuple, scale: float):
    n, me = qp.n, qp.m_eq
    Ha = qp.H[list(active)]
    E = np.vstack([qp.A, Ha])
    k = E.shape[0]
    K = np.zeros((n + k, n + k))
    K[:n, :n] = qp.M
    K[:n, n:] = E.T
    K[n:, :n] = E
    rhs = np.concatenate([-qp.q, qp.b, qp.h[list(active)]])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        return None
    # near-singular systems return garbage instead of raising
    if not np.all(np.isfinite(sol)) or np.max(np.abs(K @ sol - rhs), initial=0.0) > 1e-9 * scale:
        return None
    return sol[:n], sol[n:n + me], sol[n + me:]


def oracle_solve_qp(qp: StandardQp, *, exhaustive: bool = False, feas_tol: float = 1e-9,
                    dual_tol: float = 1e-10) -> OracleSolution:
    """Exact solution of a convex QP by active-set enumeration.

    Subsets are visited by increasing size, then lexicographically. For a
    convex QP every KKT point is a global minimizer, so the first acceptable
    candidate already satisfies the tie-break (lowest objective, then smallest
    active set, then index order). ``exhaustive=True`` scans every subset and
    applies the tie-break explicitly.
    """
    p = qp.p
    if p > MAX_ENUMERATED_ROWS:
        raise EnumerationLimit(f"{p} inequality rows exceed the enumeration bound {MAX_ENUMERATED_ROWS}")
    scale = 1.0 + max(np.max(np.abs(qp.q), initial=0.0), np.max(np.abs(qp.b), initial=0.0),
                      np.max(np.abs(qp.h), initial=0.0))
    best = None
    skipped = 0
    for size in range(min(p, qp.n) + 1):
        for active in itertools.combinations(range(p), size):
            cand = _kkt_candidate(qp, active, scale)
            if cand is None:
                skipped += 1
                continue
            x, nu, lam = cand
            if np.any(lam < -dual_tol):
                continue
            if np.any(qp.H @ x - qp.h > feas_tol * scale):
                continue
            sol = OracleSolution(x, nu, lam, active, qp.objective(x))
            if not exhaustive:
                return sol
            if best is None or sol.objective < best.objective - 1e-12 * (1 + abs(best.objective)):
                best = sol
    if skipped:
        log.debug("skipped %d singular active-set candidates", skipped)
    if best is None:
        raise Infeasible("no inequality subset yields a KKT point")
    return best


def oracle_solve_ftoc(problem: FtocProblem, **kwargs) -> OracleSolution:
    """Solve the stacked horizon QP.

    ``x`` is ordered ``(x_0, u_0, ..., x_N, u_N)``; use
    :func:`ftoc_admm.model.split_stacked` to recover the trajectory.
    """
    return oracle_solve_qp(stacked_qp(validate(problem)), **kwargs)
