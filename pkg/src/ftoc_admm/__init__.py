"""Hierarchical operator-splitting solvers for finite-time optimal control."""

from .linalg import (
    CholeskyFactor,
    DimensionMismatch,
    KktFactor,
    NotPositiveDefinite,
    RankDeficient,
    cholesky_factorize,
    cholesky_solve,
    kkt_factorize,
    kkt_solve,
    project_nonneg,
)
from .model import (
    FtocProblem,
    StageRole,
    StandardQp,
    ValidatedProblem,
    ValidationError,
    assemble_stage_qp,
    check_feasibility,
    objective_value,
    stacked_qp,
    stage_matrices,
    validate,
)
from .oracle import oracle_solve_ftoc, oracle_solve_qp
from .qp3split import InnerConfig, InnerState, QpSolution, Status
from .qp3split import solve as solve_qp
from .timesplit import FtocSolution, OuterConfig, solve_ftoc

__version__ = "0.1.0"
