"""Finite-time optimal control problem data and stage QP assembly.

The horizon problem is

    minimize    1/2 sum_{t=0}^{N} x_t' Q x_t + u_t' R u_t
    subject to  H_t (x_t, u_t) <= h_t,               t = 0..N
                x_{t+1} = A_t x_t + B_t u_t + c_t,   t = 0..N-1
                x_0 = x_init

Time splitting gives every stage its own copy ``xs_t = (x_t, u_t, x_{t+1})``
of length ``2n + m``; the functions below build the per-stage QPs solved in
the inner loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Literal, Sequence

import numpy as np

from .linalg import DimensionMismatch, NotPositiveDefinite, cholesky_factorize

__all__ = [
    "FeasibilityReport",
    "FtocProblem",
    "StageMatrices",
    "StageRole",
    "StandardQp",
    "ValidatedProblem",
    "ValidationError",
    "assemble_stage_qp",
    "check_feasibility",
    "objective_value",
    "split_stacked",
    "stacked_qp",
    "stage_linear_terms",
    "stage_matrices",
    "validate",
]

PSD_TOL = 1e-10


class ValidationError(ValueError):
    """Problem data is inconsistent. ``violations`` lists every problem found."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class StandardQp:
    """``min 1/2 x'Mx + q'x + r  s.t.  Ax = b,  Hx <= h``.

    ``A`` may have zero rows and ``H`` may have zero rows.
    """

    M: np.ndarray
    q: np.ndarray
    r: float
    A: np.ndarray
    b: np.ndarray
    H: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        n = self.M.shape[0]
        if self.M.shape != (n, n):
            raise DimensionMismatch(f"M must be square, got {self.M.shape}")
        if self.q.shape != (n,):
            raise DimensionMismatch(f"q has shape {self.q.shape}, expected ({n},)")
        if self.A.ndim != 2 or self.A.shape[1] != n or self.b.shape != (self.A.shape[0],):
            raise DimensionMismatch(f"A {self.A.shape} / b {self.b.shape} inconsistent with n={n}")
        if self.H.ndim != 2 or self.H.shape[1] != n or self.h.shape != (self.H.shape[0],):
            raise DimensionMismatch(f"H {self.H.shape} / h {self.h.shape} inconsistent with n={n}")

    @classmethod
    def build(cls, M, q, r=0.0, A=None, b=None, H=None, h=None) -> "StandardQp":
        """Convenience constructor; missing constraint blocks become empty."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        n = M.shape[0]
        q = np.asarray(q, dtype=float).reshape(n)
        A = np.zeros((0, n)) if A is None else np.asarray(A, dtype=float).reshape(-1, n)
        b = np.zeros(0) if b is None else np.asarray(b, dtype=float).reshape(A.shape[0])
        H = np.zeros((0, n)) if H is None else np.asarray(H, dtype=float).reshape(-1, n)
        h = np.zeros(0) if h is None else np.asarray(h, dtype=float).reshape(H.shape[0])
        return cls(M, q, float(r), A, b, H, h)

    @property
    def n(self) -> int:
        return self.M.shape[0]

    @property
    def m_eq(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.H.shape[0]

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.M @ x + self.q @ x + self.r)


@dataclass(frozen=True)
class FtocProblem:
    """Horizon problem data.

    ``A``, ``B``, ``c`` hold the N dynamics stages; ``H``, ``h`` hold N+1
    stage constraint blocks acting on ``(x_t, u_t)``. ``meta`` carries free-form
    provenance (generator settings, row labels) and is not used by solvers.
    """

    n: int
    m: int
    N: int
    Q: np.ndarray
    R: np.ndarray
    A: tuple
    B: tuple
    c: tuple
    x_init: np.ndarray
    H: tuple
    h: tuple
    meta: dict = field(default_factory=dict, compare=False)

    @classmethod
    def build(cls, Q, R, A, B, c, x_init, H=None, h=None, meta=None) -> "FtocProblem":
        """Create a problem from array-likes.

        ``A``, ``B``, ``c`` are sequences of length N. Missing ``H``/``h``
        mean no inequality constraints at any stage.
        """
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        R = np.atleast_2d(np.asarray(R, dtype=float))
        A = tuple(np.atleast_2d(np.asarray(a, dtype=float)) for a in A)
        B = tuple(np.atleast_2d(np.asarray(bb, dtype=float)) for bb in B)
        c = tuple(np.atleast_1d(np.asarray(cc, dtype=float)) for cc in c)
        x_init = np.atleast_1d(np.asarray(x_init, dtype=float))
        n, m, N = Q.shape[0], R.shape[0], len(A)
        if H is None:
            H = [np.zeros((0, n + m))] * (N + 1)
            h = [np.zeros(0)] * (N + 1)
        H = tuple(np.asarray(hh, dtype=float).reshape(-1, n + m) if np.size(hh) else np.zeros((0, n + m)) for hh in H)
        h = tuple(np.atleast_1d(np.asarray(hh, dtype=float)).reshape(-1) for hh in h)
        return cls(n, m, N, Q, R, A, B, c, x_init, H, h, dict(meta or {}))

    @property
    def stacked_dimension(self) -> int:
        return (self.n + self.m) * (self.N + 1)

    @property
    def stage_dimension(self) -> int:
        return 2 * self.n + self.m

    def replace(self, **changes) -> "FtocProblem":
        values = {f.name: getattr(self, f.name) for f in fields(FtocProblem)}
        values.update(changes)
        return FtocProblem.build(
            values["Q"], values["R"], values["A"], values["B"], values["c"],
            values["x_init"], values["H"], values["h"], values["meta"],
        )


class ValidatedProblem(FtocProblem):
    """An ``FtocProblem`` that passed :func:`validate`."""


def _shape_issue(name, arr, shape):
    if np.shape(arr) != shape:
        return f"{name} has shape {np.shape(arr)}, expected {shape}"
    if not np.all(np.isfinite(arr)):
        return f"{name} has non-finite entries"
    return None


def validate(p: FtocProblem) -> ValidatedProblem:
    """Check dimensions, Q >= 0 and R > 0; collect every violation before raising."""
    if isinstance(p, ValidatedProblem):
        return p
    n, m, N = p.n, p.m, p.N
    issues = []
    if n < 1 or m < 1:
        issues.append(f"dimensions must be positive, got n={n}, m={m}")
    if N < 1:
        issues.append(f"horizon N must be >= 1, got {N}")
    for name, arr, shape in (("Q", p.Q, (n, n)), ("R", p.R, (m, m)), ("x_init", p.x_init, (n,))):
        msg = _shape_issue(name, arr, shape)
        if msg:
            issues.append(msg)
    if np.shape(p.Q) == (n, n) and np.all(np.isfinite(p.Q)):
        if np.max(np.abs(p.Q - p.Q.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(p.Q))):
            issues.append("Q is not symmetric")
        elif np.linalg.eigvalsh(p.Q).min(initial=0.0) < -PSD_TOL:
            issues.append("Q is not positive semidefinite")
    if np.shape(p.R) == (m, m) and np.all(np.isfinite(p.R)):
        if np.max(np.abs(p.R - p.R.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(p.R))):
            issues.append("R is not symmetric")
        else:
            try:
                cholesky_factorize(p.R)
            except NotPositiveDefinite:
                issues.append("R is not positive definite")
    for name, seq, count in (("A", p.A, N), ("B", p.B, N), ("c", p.c, N), ("H", p.H, N + 1), ("h", p.h, N + 1)):
        if len(seq) != count:
            issues.append(f"{name} has {len(seq)} stages, expected {count}")
    for t, (At, Bt, ct) in enumerate(zip(p.A, p.B, p.c)):
        for name, arr, shape in ((f"A[{t}]", At, (n, n)), (f"B[{t}]", Bt, (n, m)), (f"c[{t}]", ct, (n,))):
            msg = _shape_issue(name, arr, shape)
            if msg:
                issues.append(f"stage {t}: {msg}")
    for t, (Ht, ht) in enumerate(zip(p.H, p.h)):
        rows = np.shape(Ht)[0] if np.ndim(Ht) == 2 else -1
        msg = _shape_issue(f"H[{t}]", Ht, (rows, n + m)) or _shape_issue(f"h[{t}]", ht, (rows,))
        if msg:
            issues.append(f"stage {t}: {msg}")
    if len(p.H) == N + 1 and np.ndim(p.H[N]) == 2 and np.shape(p.H[N])[1] == n + m:
        if np.any(p.H[N][:, n:] != 0):
            issues.append(f"stage {N}: H[{N}] must not constrain the terminal input")
    if issues:
        raise ValidationError(issues)
    return ValidatedProblem(**{f.name: getattr(p, f.name) for f in fields(FtocProblem)})


@dataclass(frozen=True)
class StageMatrices:
    P: np.ndarray
    F: np.ndarray | None  # None at t = N (no outgoing dynamics)
    G0: np.ndarray
    G1: np.ndarray


@dataclass(frozen=True)
class StageRole:
    kind: Literal["first", "middle", "last"]
    t: int

    @classmethod
    def for_stage(cls, t: int, N: int) -> "StageRole":
        if not 0 <= t <= N:
            raise IndexError(f"stage {t} outside 0..{N}")
        if t == 0:
            return cls("first", 0)
        if t == N:
            return cls("last", N)
        return cls("middle", t)

    def __post_init__(self):
        if self.kind == "first" and self.t != 0:
            raise ValueError("the first stage has t = 0")
        if self.kind == "middle" and self.t < 1:
            raise ValueError("middle stages have t >= 1")


def stage_matrices(p: FtocProblem, t: int) -> StageMatrices:
    if not 0 <= t <= p.N:
        raise IndexError(f"stage {t} outside 0..{p.N}")
    n, m = p.n, p.m
    d = 2 * n + m
    P = np.zeros((d, d))
    P[:n, :n] = p.Q
    P[n:n + m, n:n + m] = p.R
    G0 = np.zeros((n, d))
    G0[:, :n] = np.eye(n)
    G1 = np.zeros((n, d))
    G1[:, n + m:] = np.eye(n)
    F = None
    if t < p.N:
        F = np.hstack([-p.A[t], -p.B[t], np.eye(n)])
    return StageMatrices(P, F, G0, G1)


def _check_vec(name, v, n):
    if v is None:
        raise DimensionMismatch(f"{name} is required for this stage role")
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise DimensionMismatch(f"{name} has shape {v.shape}, expected ({n},)")
    return v


def stage_linear_terms(p: FtocProblem, role: StageRole, rho: float,
                       z_t=None, z_next=None, w_t=None, v_next=None) -> tuple[np.ndarray, float]:
    """Linear term ``q`` and constant ``r`` of a stage QP.

    ``z_t``/``w_t`` couple the stage's own state copy (absent for the first
    stage); ``z_next``/``v_next`` couple the predicted next state (absent for
    the last stage).
    """
    n, m = p.n, p.m
    q = np.zeros(2 * n + m)
    r = 0.0
    if role.kind != "first":
        z_t = _check_vec("z_t", z_t, n)
        w_t = _check_vec("w_t", w_t, n)
        q[:n] = -rho * (z_t + w_t)
        r += 0.5 * rho * (z_t @ z_t) + rho * (w_t @ z_t)
    if role.kind != "last":
        z_next = _check_vec("z_next", z_next, n)
        v_next = _check_vec("v_next", v_next, n)
        q[n + m:] = -rho * (z_next + v_next)
        r += 0.5 * rho * (z_next @ z_next) + rho * (v_next @ z_next)
    return q, float(r)


def assemble_stage_qp(p: FtocProblem, role: StageRole, rho: float,
                      z_t=None, z_next=None, w_t=None, v_next=None) -> StandardQp:
    """Standard-form QP whose minimizer is the stage update of the outer loop."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    t = role.t
    sm = stage_matrices(p, t)
    n, d = p.n, p.stage_dimension
    M = sm.P.copy()
    if role.kind != "first":
        M += rho * (sm.G0.T @ sm.G0)
    if role.kind != "last":
        M += rho * (sm.G1.T @ sm.G1)
    q, r = stage_linear_terms(p, role, rho, z_t, z_next, w_t, v_next)
    if role.kind == "first":
        A = np.vstack([sm.G0, sm.F])
        b = np.concatenate([p.x_init, p.c[0]])
    elif role.kind == "middle":
        A, b = sm.F, np.asarray(p.c[t], dtype=float)
    else:
        A, b = np.zeros((0, d)), np.zeros(0)
    Ht = p.H[t]
    H = np.hstack([Ht, np.zeros((Ht.shape[0], n))])
    return StandardQp(M, q, r, A, b, H, np.asarray(p.h[t], dtype=float))


def _split_trajectory(p: FtocProblem, states, inputs):
    X = np.asarray(states, dtype=float)
    U = np.asarray(inputs, dtype=float)
    if X.shape != (p.N + 1, p.n) or U.shape != (p.N + 1, p.m):
        raise DimensionMismatch(
            f"trajectory shapes {X.shape}/{U.shape}, expected {(p.N + 1, p.n)}/{(p.N + 1, p.m)}"
        )
    return X, U


def objective_value(p: FtocProblem, states, inputs) -> float:
    """Horizon cost of a trajectory; ``states``/``inputs`` have N+1 rows."""
    X, U = _split_trajectory(p, states, inputs)
    return 0.5 * float(np.einsum("ti,ij,tj->", X, p.Q, X) + np.einsum("ti,ij,tj->", U, p.R, U))


@dataclass
class FeasibilityReport:
    dynamics_violation: float
    dynamics_per_stage: np.ndarray
    inequality_violation: float
    inequality_per_stage: np.ndarray
    initial_violation: float
    feasible: bool

    @property
    def worst_dynamics_stage(self) -> int:
        return int(np.argmax(self.dynamics_per_stage)) if self.dynamics_per_stage.size else -1


def check_feasibility(p: FtocProblem, states, inputs, tol: float = 1e-6) -> FeasibilityReport:
    """Max-norm violations of dynamics, stage inequalities and the initial condition."""
    X, U = _split_trajectory(p, states, inputs)
    dyn = np.array([
        np.max(np.abs(X[t + 1] - p.A[t] @ X[t] - p.B[t] @ U[t] - p.c[t]), initial=0.0)
        for t in range(p.N)
    ])
    ineq = np.array([
        max(0.0, float(np.max(p.H[t] @ np.concatenate([X[t], U[t]]) - p.h[t], initial=0.0)))
        for t in range(p.N + 1)
    ])
    init = float(np.max(np.abs(X[0] - p.x_init), initial=0.0))
    dmax = float(dyn.max(initial=0.0))
    imax = float(ineq.max(initial=0.0))
    return FeasibilityReport(dmax, dyn, imax, ineq, init, max(dmax, imax, init) <= tol)


def stacked_qp(p: FtocProblem) -> StandardQp:
    """The whole horizon as one QP over ``(x_0, u_0, x_1, u_1, ..., x_N, u_N)``."""
    n, m, N = p.n, p.m, p.N
    k = n + m
    dim = k * (N + 1)
    M = np.zeros((dim, dim))
    for t in range(N + 1):
        M[t * k:t * k + n, t * k:t * k + n] = p.Q
        M[t * k + n:(t + 1) * k, t * k + n:(t + 1) * k] = p.R
    A = np.zeros((n * (N + 1), dim))
    b = np.zeros(n * (N + 1))
    A[:n, :n] = np.eye(n)
    b[:n] = p.x_init
    for t in range(N):
        rows = slice(n * (t + 1), n * (t + 2))
        A[rows, t * k:t * k + n] = -p.A[t]
        A[rows, t * k + n:(t + 1) * k] = -p.B[t]
        A[rows, (t + 1) * k:(t + 1) * k + n] = np.eye(n)
        b[rows] = p.c[t]
    blocks = []
    for t in range(N + 1):
        Ht = p.H[t]
        blk = np.zeros((Ht.shape[0], dim))
        blk[:, t * k:(t + 1) * k] = Ht
        blocks.append(blk)
    H = np.vstack(blocks) if blocks else np.zeros((0, dim))
    h = np.concatenate([np.asarray(hh, dtype=float) for hh in p.h]) if p.h else np.zeros(0)
    return StandardQp(M, np.zeros(dim), 0.0, A, b, H, h)


def split_stacked(p: FtocProblem, x) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of the ``stacked_qp`` variable ordering: ``(states, inputs)``."""
    Z = np.asarray(x, dtype=float).reshape(p.N + 1, p.n + p.m)
    return Z[:, :p.n].copy(), Z[:, p.n:].copy()
