"""Dense factorization kernels reused across ADMM iterations.

Factors are computed once and then applied to many right-hand sides, so the
objects returned here are immutable and can be shared between workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

__all__ = [
    "CholeskyFactor",
    "DimensionMismatch",
    "KktFactor",
    "NotPositiveDefinite",
    "RankDeficient",
    "cholesky_factorize",
    "cholesky_solve",
    "kkt_factorize",
    "kkt_solve",
    "project_nonneg",
]

SYMMETRY_RTOL = 1e-12
RANK_RTOL = 1e-13


class DimensionMismatch(ValueError):
    """Operand shapes do not agree."""


class NotPositiveDefinite(np.linalg.LinAlgError):
    """A non-positive pivot was met during Cholesky factorization."""


class RankDeficient(np.linalg.LinAlgError):
    """The equality matrix of a KKT system does not have full row rank."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, order="F")
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular ``L`` with ``L @ L.T == S``."""

    lower: np.ndarray

    @property
    def dimension(self) -> int:
        return self.lower.shape[0]


@dataclass(frozen=True)
class KktFactor:
    """Block elimination data for ``[[rho*I, A.T], [A, 0]]``.

    ``schur`` factors ``A @ A.T / rho``; it is ``None`` when ``A`` has no rows.
    """

    A: np.ndarray
    rho: float
    schur: CholeskyFactor | None

    @property
    def dimension(self) -> int:
        return self.A.shape[1]

    @property
    def m_eq(self) -> int:
        return self.A.shape[0]


def cholesky_factorize(S) -> CholeskyFactor:
    """Cholesky factor of a symmetric positive definite matrix.

    The input is symmetrized as ``(S + S.T) / 2`` to absorb assembly round-off;
    asymmetry beyond a relative 1e-12 is rejected. ``S`` is not modified.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise ValueError("matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(S)))) if S.size else 1.0
    if S.size and np.max(np.abs(S - S.T)) > SYMMETRY_RTOL * scale:
        raise ValueError("matrix is not symmetric")
    n = S.shape[0]
    if n == 0:
        return CholeskyFactor(_frozen(np.zeros((0, 0))))
    L, info = lapack.dpotrf(0.5 * (S + S.T), lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefinite(f"leading minor of order {info} is not positive definite")
    if info < 0:
        raise ValueError(f"dpotrf: illegal argument {-info}")
    return CholeskyFactor(_frozen(L))


def _chol_solve(f: CholeskyFactor, rhs: np.ndarray) -> np.ndarray:
    if f.dimension == 0:
        return np.zeros(0)
    x, info = lapack.dpotrs(f.lower, rhs, lower=1)
    if info != 0:
        raise ValueError(f"dpotrs: illegal argument {-info}")
    return x


def cholesky_solve(f: CholeskyFactor, rhs) -> np.ndarray:
    """Solve ``S x = rhs`` with a precomputed factor of ``S``."""
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (f.dimension,):
        raise DimensionMismatch(f"rhs has shape {rhs.shape}, factor has dimension {f.dimension}")
    return _chol_solve(f, rhs)


def kkt_factorize(A, rho: float) -> KktFactor:
    """Prepare ``[[rho*I, A.T], [A, 0]]`` for repeated solves.

    The positive definite (1,1) block is eliminated, leaving the Schur
    complement ``A A^T / rho`` which is Cholesky-factored.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise DimensionMismatch(f"A must be 2-D, got shape {A.shape}")
    if not rho > 0:
        raise ValueError("rho must be positive")
    if A.shape[0] > A.shape[1]:
        raise RankDeficient(f"A has more rows ({A.shape[0]}) than columns ({A.shape[1]})")
    if A.shape[0] == 0:
        return KktFactor(_frozen(A), float(rho), None)
    try:
        schur = cholesky_factorize((A @ A.T) / rho)
    except NotPositiveDefinite as exc:
        raise RankDeficient("A does not have full row rank") from exc
    # round-off can leave a tiny positive pivot for dependent rows
    pivots = np.diag(schur.lower) ** 2
    if pivots.min() <= RANK_RTOL * A.shape[0] * pivots.max():
        raise RankDeficient("A does not have full row rank")
    return KktFactor(_frozen(A), float(rho), schur)


def _kkt_solve(f: KktFactor, top: np.ndarray, bottom: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if f.schur is None:
        return top / f.rho, np.zeros(0)
    nu = _chol_solve(f.schur, f.A @ top / f.rho - bottom)
    x = (top - f.A.T @ nu) / f.rho
    return x, nu


def kkt_solve(f: KktFactor, rhs_top, rhs_bottom) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``rho x + A^T nu = rhs_top``, ``A x = rhs_bottom``.

    Returns ``(x, nu)``.
    """
    top = np.asarray(rhs_top, dtype=float)
    bottom = np.asarray(rhs_bottom, dtype=float)
    if top.shape != (f.dimension,) or bottom.shape != (f.m_eq,):
        raise DimensionMismatch(
            f"rhs shapes {top.shape}/{bottom.shape} do not match n={f.dimension}, m_eq={f.m_eq}"
        )
    return _kkt_solve(f, top, bottom)


def project_nonneg(v) -> np.ndarray:
    """Euclidean projection onto the nonnegative orthant."""
    return np.maximum(np.asarray(v, dtype=float), 0.0)
