"""Shared test fixtures: random instance builders and independent reference routines."""

from __future__ import annotations

import numpy as np

from ftoc_admm.model import FtocProblem, StandardQp


def random_spd(rng: np.random.Generator, n: int, floor: float = 0.5) -> np.ndarray:
    B = rng.standard_normal((n, n))
    return B.T @ B / n + floor * np.eye(n)


def random_qp(rng: np.random.Generator, n_q: int | None = None, m_eq: int | None = None,
              p: int | None = None) -> StandardQp:
    """Strictly convex, feasible QP with some rows active at the sampled feasible point."""
    n_q = int(rng.integers(2, 13)) if n_q is None else n_q
    m_eq = int(rng.integers(0, min(4, n_q - 1) + 1)) if m_eq is None else m_eq
    p = int(rng.integers(0, 9)) if p is None else p
    M = random_spd(rng, n_q)
    q = rng.standard_normal(n_q) * 2.0
    x0 = rng.standard_normal(n_q)
    A = rng.standard_normal((m_eq, n_q))
    b = A @ x0
    H = rng.standard_normal((p, n_q))
    slack = np.where(rng.random(p) < 0.3, 0.0, rng.random(p))
    h = H @ x0 + slack
    return StandardQp.build(M, q, float(rng.standard_normal()), A, b, H, h)


def box_family(n: int, m: int, dx: float, u_max: float, terminal: bool = False):
    """Consecutive-state-difference rows plus an input box, as in the benchmark family.

    Returns the rows with the uniform right-hand side ``(dx, ..., u_max, ...)``.
    """
    rows, rhs = [], []
    for i in range(1, n):
        r = np.zeros(n + m)
        r[i], r[i - 1] = 1.0, -1.0
        rows.append(r)
        rhs.append(dx)
    if not terminal:
        for j in range(m):
            for sgn in (1.0, -1.0):
                r = np.zeros(n + m)
                r[n + j] = sgn
                rows.append(r)
                rhs.append(u_max)
    if not rows:
        return np.zeros((0, n + m)), np.zeros(0)
    return np.array(rows), np.array(rhs)


def random_ftoc(rng: np.random.Generator, n: int | None = None, m: int | None = None,
                N: int | None = None, max_rows: int = 16, constrained: bool = True,
                disturbance: bool = True) -> FtocProblem:
    """Small random horizon problem with at most ``max_rows`` inequality rows in total.

    Feasible by construction: bounds are placed around a simulated trajectory,
    with roughly 40% of the rows tight at that trajectory.
    """
    while True:
        nn = int(rng.integers(1, 5)) if n is None else n
        mm = int(rng.integers(1, 3)) if m is None else m
        NN = int(rng.integers(1, 7)) if N is None else N
        if not constrained:
            break
        # per-stage rows (n-1 + 2m), terminal stage (n-1)
        rows = NN * (nn - 1 + 2 * mm) + (nn - 1)
        if rows <= max_rows:
            break
        if None not in (n, m, N):
            raise ValueError(f"{rows} inequality rows exceed max_rows={max_rows}")
    A = rng.standard_normal((nn, nn))
    A *= 0.9 / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-12)
    B = rng.standard_normal((nn, mm))
    c = [np.zeros(nn) for _ in range(NN)]
    spike = rng.standard_normal(nn)
    if disturbance:
        c[int(rng.integers(0, NN))] = spike
    x_init = rng.standard_normal(nn) * 2.0
    Q = np.diag(rng.uniform(0.5, 2.0, nn))
    R = np.diag(rng.uniform(0.5, 2.0, mm))
    H = h = None
    if constrained:
        # roll a random input sequence forward and place the bounds around it
        us = rng.standard_normal((NN, mm)) * 0.3
        xs = [x_init]
        for t in range(NN):
            xs.append(A @ xs[-1] + B @ us[t] + c[t])
        H, h = [], []
        for t in range(NN + 1):
            Ht, _ = box_family(nn, mm, dx=1.0, u_max=1.0, terminal=(t == NN))
            pt = np.concatenate([xs[t], us[t] if t < NN else np.zeros(mm)])
            slack = np.where(rng.random(Ht.shape[0]) < 0.4, 0.0, rng.uniform(0.0, 0.5, Ht.shape[0]))
            H.append(Ht)
            h.append(Ht @ pt + slack)
    return FtocProblem.build(Q, R, [A] * NN, [B] * NN, c, x_init, H, h)


def gauss_jordan_inverse(S: np.ndarray) -> np.ndarray:
    """Inverse by Gauss-Jordan elimination with partial pivoting, written out row by row."""
    n = S.shape[0]
    aug = np.hstack([np.array(S, dtype=float), np.eye(n)])
    for col in range(n):
        piv = col + int(np.argmax(np.abs(aug[col:, col])))
        if aug[piv, col] == 0.0:
            raise np.linalg.LinAlgError("singular")
        if piv != col:
            aug[[col, piv]] = aug[[piv, col]]
        aug[col] /= aug[col, col]
        for r in range(n):
            if r != col:
                aug[r] -= aug[r, col] * aug[col]
    return aug[:, n:]


def dual_projected_gradient(qp: StandardQp, steps: int = 200_000, tol: float = 1e-13):
    """Solve a strictly convex QP through its dual by projected gradient ascent.

    Dual variables: ``nu`` free for ``Ax = b`` and ``lam >= 0`` for ``Hx <= h``.
    The primal point is ``x = -M^{-1}(q + A'nu + H'lam)``.
    """
    Minv = gauss_jordan_inverse(qp.M)
    C = np.vstack([qp.A, qp.H])
    d = np.concatenate([qp.b, qp.h])
    m_eq = qp.m_eq
    K = C @ Minv @ C.T
    L = max(np.linalg.eigvalsh(K).max(), 1e-12) if K.size else 1.0
    mu = np.zeros(C.shape[0])
    for _ in range(steps):
        x = -Minv @ (qp.q + C.T @ mu)
        grad = C @ x - d
        new = mu + grad / L
        new[m_eq:] = np.maximum(new[m_eq:], 0.0)
        if np.max(np.abs(new - mu), initial=0.0) < tol:
            mu = new
            break
        mu = new
    return -Minv @ (qp.q + C.T @ mu)
