"""Three-set splitting ADMM for convex QPs.

The variable is copied into an objective set, an equality set and an
inequality set, with a consensus variable ``z`` and a slack ``y >= 0`` for
``y = h - H x``. Every sub-update is a linear solve with a matrix that is
factored once, or a projection onto the nonnegative orthant. Dual variables
are kept in scaled form.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .linalg import (
    CholeskyFactor,
    DimensionMismatch,
    KktFactor,
    _chol_solve,
    _kkt_solve,
    cholesky_factorize,
    kkt_factorize,
)
from .model import StandardQp

__all__ = [
    "InnerConfig",
    "InnerFactors",
    "InnerResiduals",
    "InnerState",
    "QpSolution",
    "Status",
    "inner_residuals",
    "prefactor",
    "solve",
    "update_duals",
    "update_x1",
    "update_x2",
    "update_x3",
    "update_z_and_y",
]


class Status(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"


@dataclass
class InnerState:
    """All iterates. ``zd1..zd3`` and ``yd`` are the scaled duals."""

    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray
    z: np.ndarray
    zd1: np.ndarray
    zd2: np.ndarray
    zd3: np.ndarray
    y: np.ndarray
    yd: np.ndarray
    nu: np.ndarray
    k: int = 0

    @classmethod
    def zeros(cls, n: int, m_eq: int, p: int) -> "InnerState":
        z = np.zeros
        return cls(z(n), z(n), z(n), z(n), z(n), z(n), z(n), z(p), z(p), z(m_eq))

    def copy(self) -> "InnerState":
        return InnerState(*(getattr(self, f).copy() for f in _ARRAY_FIELDS), k=self.k)

    def dims(self) -> tuple[int, int, int]:
        return self.z.shape[0], self.nu.shape[0], self.y.shape[0]


_ARRAY_FIELDS = ("x1", "x2", "x3", "z", "zd1", "zd2", "zd3", "y", "yd", "nu")


@dataclass(frozen=True)
class InnerConfig:
    """Solver settings.

    In ``"direct"`` mode the residual norms are compared against ``eps_pri``
    and ``eps_dual`` as given. In ``"absrel"`` mode the thresholds are built
    from ``eps_abs``/``eps_rel`` and the current iterate.
    """

    rho: float = 1.0
    eps_pri: float = 1e-4
    eps_dual: float = 1e-3
    tol_mode: Literal["direct", "absrel"] = "direct"
    eps_abs: float = 1e-4
    eps_rel: float = 1e-3
    max_iterations: int = 10_000
    record_history: bool = False

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.tol_mode not in ("direct", "absrel"):
            raise ValueError(f"unknown tol_mode {self.tol_mode!r}")
        if min(self.eps_pri, self.eps_dual, self.eps_abs) <= 0 or self.eps_rel < 0:
            raise ValueError("tolerances must be positive")

    def replace(self, **changes) -> "InnerConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class InnerFactors:
    objective: CholeskyFactor  # M + rho I
    equality: KktFactor  # [[rho I, A'], [A, 0]]
    inequality: CholeskyFactor  # H'H + I
    rho: float


@dataclass(frozen=True)
class InnerResiduals:
    primal: float
    dual: float
    eps_pri: float
    eps_dual: float

    @property
    def converged(self) -> bool:
        return self.primal <= self.eps_pri and self.dual <= self.eps_dual


@dataclass
class QpSolution:
    x: np.ndarray
    objective: float
    iterations: int
    status: Status
    residuals: InnerResiduals
    history: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED


def prefactor(qp: StandardQp, rho: float) -> InnerFactors:
    """Factor the three fixed matrices of the sub-updates."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    n = qp.n
    objective = cholesky_factorize(qp.M + rho * np.eye(n))
    equality = kkt_factorize(qp.A, rho)
    inequality = cholesky_factorize(qp.H.T @ qp.H + np.eye(n))
    return InnerFactors(objective, equality, inequality, float(rho))


def _vec(name, v, n):
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise DimensionMismatch(f"{name} has shape {v.shape}, expected ({n},)")
    return v


def update_x1(f: InnerFactors, qp: StandardQp, z, zd1) -> np.ndarray:
    """Objective set: ``(M + rho I)^{-1} (rho (z + zd1) - q)``."""
    n = qp.n
    return _chol_solve(f.objective, f.rho * (_vec("z", z, n) + _vec("zd1", zd1, n)) - qp.q)


def update_x2(f: InnerFactors, qp: StandardQp, rho: float, z, zd2) -> tuple[np.ndarray, np.ndarray]:
    """Equality set: projection of ``z + zd2`` onto ``{x : Ax = b}``.

    Without equality rows this collapses to ``z + zd2``.
    """
    if rho != f.rho:
        raise ValueError(f"rho={rho} does not match the factorization (rho={f.rho})")
    n = qp.n
    v = _vec("z", z, n) + _vec("zd2", zd2, n)
    if qp.m_eq == 0:
        return v, np.zeros(0)
    return _kkt_solve(f.equality, rho * v, qp.b)


def update_x3(f: InnerFactors, qp: StandardQp, z, zd3, y, yd) -> np.ndarray:
    """Inequality set: ``(H'H + I)^{-1} (H'(h - yd - y) + z + zd3)``.

    Without inequality rows this collapses to ``z + zd3``.
    """
    n, p = qp.n, qp.p
    v = _vec("z", z, n) + _vec("zd3", zd3, n)
    if p == 0:
        return v
    return _chol_solve(f.inequality, qp.H.T @ (qp.h - _vec("yd", yd, p) - _vec("y", y, p)) + v)


def update_z_and_y(x1, x2, x3, qp: StandardQp, yd, duals=None) -> tuple[np.ndarray, np.ndarray]:
    """Consensus average and slack projection ``y = (h - H x3 - yd)_+``.

    With ``duals = (zd1, zd2, zd3)`` the average is taken of ``x_i - zd_i``,
    the exact minimizer over ``z``. It equals the plain mean while the duals
    sum to zero, and keeps that sum at round-off level instead of letting it
    drift over many iterations.
    """
    x1, x2, x3 = np.asarray(x1), np.asarray(x2), np.asarray(x3)
    if duals is None:
        z = (x1 + x2 + x3) / 3.0
    else:
        zd1, zd2, zd3 = duals
        z = ((x1 - zd1) + (x2 - zd2) + (x3 - zd3)) / 3.0
    y = np.maximum(qp.h - qp.H @ np.asarray(x3) - np.asarray(yd), 0.0)
    return z, y


def update_duals(state: InnerState, x1, x2, x3, z, y, qp: StandardQp):
    """Scaled dual ascent; returns ``(zd1, zd2, zd3, yd)``."""
    zd1 = state.zd1 - x1 + z
    zd2 = state.zd2 - x2 + z
    zd3 = state.zd3 - x3 + z
    yd = state.yd + y - qp.h + qp.H @ x3
    return zd1, zd2, zd3, yd


def _residuals(qp: StandardQp, cfg: InnerConfig, rho: float, z_old, y_old, s: InnerState, Hx3) -> InnerResiduals:
    n, p = qp.n, qp.p
    ineq = Hx3 + s.y - qp.h
    d1, d2, d3 = s.x1 - s.z, s.x2 - s.z, s.x3 - s.z
    r = math.sqrt(d1 @ d1 + d2 @ d2 + d3 @ d3 + ineq @ ineq)
    dz = s.z - z_old
    dz3 = dz - qp.H.T @ (s.y - y_old) if p else dz
    dual = rho * math.sqrt(2.0 * (dz @ dz) + dz3 @ dz3)
    if cfg.tol_mode == "direct":
        return InnerResiduals(r, dual, cfg.eps_pri, cfg.eps_dual)
    ax = math.sqrt(s.x1 @ s.x1 + s.x2 @ s.x2 + s.x3 @ s.x3 + Hx3 @ Hx3)
    bz = math.sqrt(3.0 * (s.z @ s.z) + s.y @ s.y)
    c = math.sqrt(qp.h @ qp.h)
    eps_pri = cfg.eps_abs * math.sqrt(3 * n + p) + cfg.eps_rel * max(ax, bz, c)
    w3 = s.zd3 + qp.H.T @ s.yd if p else s.zd3
    aty = math.sqrt(s.zd1 @ s.zd1 + s.zd2 @ s.zd2 + w3 @ w3)
    eps_dual = cfg.eps_abs * math.sqrt(3 * n) + cfg.eps_rel * aty
    return InnerResiduals(r, dual, eps_pri, eps_dual)


def inner_residuals(qp: StandardQp, cfg: InnerConfig, before: InnerState, after: InnerState) -> InnerResiduals:
    """Primal/dual residual norms of the iterate ``after`` and their thresholds.

    Primal: ``(x1 - z, x2 - z, x3 - z, H x3 + y - h)``.
    Dual: ``rho (dz, dz, dz - H' dy)`` with ``dz, dy`` the change from ``before``.
    """
    return _residuals(qp, cfg, cfg.rho, before.z, before.y, after, qp.H @ after.x3)


def _check_state(state: InnerState, qp: StandardQp):
    if state.dims() != (qp.n, qp.m_eq, qp.p):
        raise DimensionMismatch(f"warm state dims {state.dims()} do not match QP {(qp.n, qp.m_eq, qp.p)}")


def iterate(qp: StandardQp, f: InnerFactors, s: InnerState) -> np.ndarray:
    """One full sweep (x-sets, then z/y, then duals), in place. Returns ``H x3``."""
    rho = f.rho
    s.x1 = _chol_solve(f.objective, rho * (s.z + s.zd1) - qp.q)
    if qp.m_eq:
        s.x2, s.nu = _kkt_solve(f.equality, rho * (s.z + s.zd2), qp.b)
    else:
        s.x2 = s.z + s.zd2
    if qp.p:
        s.x3 = _chol_solve(f.inequality, qp.H.T @ (qp.h - s.yd - s.y) + (s.z + s.zd3))
        Hx3 = qp.H @ s.x3
    else:
        s.x3 = s.z + s.zd3
        Hx3 = np.zeros(0)
    z = ((s.x1 - s.zd1) + (s.x2 - s.zd2) + (s.x3 - s.zd3)) / 3.0
    y = np.maximum(qp.h - Hx3 - s.yd, 0.0)
    s.zd1 = s.zd1 - s.x1 + z
    s.zd2 = s.zd2 - s.x2 + z
    s.zd3 = s.zd3 - s.x3 + z
    s.yd = s.yd + y - qp.h + Hx3
    s.z, s.y = z, y
    s.k += 1
    return Hx3


def solve(qp: StandardQp, cfg: InnerConfig, warm: InnerState | None = None,
          factors: InnerFactors | None = None, callback=None) -> tuple[QpSolution, InnerState]:
    """Run the splitting iterations until both residuals meet their thresholds.

    Starts from zero unless ``warm`` is given (it is copied, never mutated).
    Returns the consensus variable ``z`` as the solution together with the
    final state, which can be fed back as ``warm`` for a nearby QP.
    ``callback(state, residuals)`` is invoked after every iteration.
    """
    if factors is None:
        factors = prefactor(qp, cfg.rho)
    elif factors.rho != cfg.rho:
        raise ValueError(f"factors built for rho={factors.rho}, config has rho={cfg.rho}")
    if warm is None:
        state = InnerState.zeros(qp.n, qp.m_eq, qp.p)
    else:
        _check_state(warm, qp)
        state = warm.copy()
    history = []
    status = Status.MAX_ITERATIONS
    res = None
    for it in range(1, cfg.max_iterations + 1):
        z_old, y_old = state.z, state.y
        Hx3 = iterate(qp, factors, state)
        res = _residuals(qp, cfg, factors.rho, z_old, y_old, state, Hx3)
        if cfg.record_history:
            history.append(res)
        if callback is not None:
            callback(state, res)
        if res.converged:
            status = Status.CONVERGED
            break
    x = state.z.copy()
    return QpSolution(x, qp.objective(x), it, status, res, history), state
