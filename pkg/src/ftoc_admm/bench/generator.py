"""Random benchmark instances: stable LTI dynamics, consecutive-state
difference limits, input boxes and disturbance spikes that push the optimal
trajectory onto the constraints."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..model import FtocProblem, split_stacked, stacked_qp, validate

__all__ = ["GeneratorSpec", "SIZE_PRESETS", "generate", "unconstrained_optimum"]


@dataclass(frozen=True)
class GeneratorSpec:
    """Instance family parameters.

    ``dx`` and ``u_max`` are derived from the instance when left as ``None``:
    the inputs of the unconstrained optimum are scaled by ``constraint_scale``
    and the bounds are set so that this scaled trajectory is exactly feasible.
    The unconstrained optimum then violates the input box, so at least one
    inequality is active at the constrained optimum.
    """

    n: int
    m: int
    N: int
    seed: int = 0
    spectral_radius: float = 0.95
    dx: float | None = None
    u_max: float | None = None
    constraint_scale: float = 0.5
    disturbance: float = 5.0
    spike_times: tuple | None = None
    x_init_scale: float = 1.0

    def __post_init__(self):
        if min(self.n, self.m, self.N) < 1:
            raise ValueError("n, m and N must be positive")
        if self.spectral_radius <= 0 or self.disturbance < 0 or self.x_init_scale < 0:
            raise ValueError("spectral_radius must be positive, magnitudes nonnegative")
        if not 0 < self.constraint_scale < 1:
            raise ValueError("constraint_scale must lie in (0, 1)")
        for name in ("dx", "u_max"):
            val = getattr(self, name)
            if val is not None and val <= 0:
                raise ValueError(f"{name} must be positive")

    def schedule(self) -> tuple:
        if self.spike_times is not None:
            return tuple(int(t) for t in self.spike_times)
        return tuple(sorted({max(0, self.N // 3), max(0, (2 * self.N) // 3)} - {self.N}))


# Preset problem shapes with the penalty parameter used for each.
SIZE_PRESETS = {
    "small": {"n": 10, "m": 10, "N": 10, "rho": 15.0},
    "medium": {"n": 20, "m": 10, "N": 30, "rho": 25.0},
    "large": {"n": 50, "m": 40, "N": 60, "rho": 50.0},
}


def _difference_rows(n: int, m: int) -> np.ndarray:
    # x_i - x_{i-1} <= dx for i = 1..n-1
    D = np.zeros((n - 1, n + m))
    idx = np.arange(n - 1)
    D[idx, idx + 1] = 1.0
    D[idx, idx] = -1.0
    return D


def _box_rows(n: int, m: int) -> np.ndarray:
    E = np.zeros((2 * m, n + m))
    E[:m, n:] = np.eye(m)
    E[m:, n:] = -np.eye(m)
    return E


def unconstrained_optimum(p: FtocProblem) -> tuple[np.ndarray, np.ndarray]:
    """Minimizer subject to dynamics only, from one dense KKT solve."""
    qp = stacked_qp(p)
    k = qp.m_eq
    K = np.block([[qp.M, qp.A.T], [qp.A, np.zeros((k, k))]])
    sol = np.linalg.solve(K, np.concatenate([-qp.q, qp.b]))
    return split_stacked(p, sol[:qp.n])


def _simulate(p: FtocProblem, inputs: np.ndarray) -> np.ndarray:
    X = np.empty((p.N + 1, p.n))
    X[0] = p.x_init
    for t in range(p.N):
        X[t + 1] = p.A[t] @ X[t] + p.B[t] @ inputs[t] + p.c[t]
    return X


def generate(spec: GeneratorSpec) -> FtocProblem:
    """Build a seeded instance; identical specs give bitwise identical problems."""
    n, m, N = spec.n, spec.m, spec.N
    rng = np.random.default_rng(spec.seed)
    A = rng.standard_normal((n, n))
    A *= spec.spectral_radius / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-12)
    B = rng.standard_normal((n, m))
    x_init = spec.x_init_scale * rng.standard_normal(n)
    spikes = spec.schedule()
    c = [np.zeros(n) for _ in range(N)]
    for t in spikes:
        direction = rng.standard_normal(n)
        c[t] = spec.disturbance * direction / np.linalg.norm(direction)
    Q, R = np.eye(n), np.eye(m)
    base = FtocProblem.build(Q, R, [A] * N, [B] * N, c, x_init)

    dx, u_max = spec.dx, spec.u_max
    if dx is None or u_max is None:
        _, U = unconstrained_optimum(base)
        U_scaled = spec.constraint_scale * U
        U_scaled[N] = 0.0
        X_scaled = _simulate(base, U_scaled)
        if u_max is None:
            u_max = float(max(np.max(np.abs(U_scaled[:N])), 1e-6))
        if dx is None:
            dx = float(max(np.max(X_scaled[:, 1:] - X_scaled[:, :-1], initial=0.0), 1e-6)) if n > 1 else 1.0

    D = _difference_rows(n, m)
    E = _box_rows(n, m)
    H = [np.vstack([D, E])] * N + [D]
    h = [np.concatenate([np.full(n - 1, dx), np.full(2 * m, u_max)])] * N + [np.full(n - 1, dx)]
    kinds = ["difference"] * (n - 1) + ["box"] * (2 * m)
    meta = {
        "generator": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(spec).items()},
        "spike_times": list(spikes),
        "dx": dx,
        "u_max": u_max,
        "row_kinds": [kinds] * N + [["difference"] * (n - 1)],
    }
    return validate(base.replace(H=H, h=h, meta=meta))
