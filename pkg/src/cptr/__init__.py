"""Multi-stage preconditioners for coupled thermal-compositional Jacobians."""
from .blockmat import BlockMatrix, DiagonalApprox, FieldLayout, assemble, block_diagonal_of, extract_submatrix
from .krylov import SolveResult, gmres, residual_check
from .stages import (
    ScaledSystem,
    StagePreconditioner,
    build_cpr,
    build_cptr,
    build_cptr3,
    build_preconditioner,
    left_scale,
    left_scale_cpr,
    left_scale_cptr,
    left_scale_cptr3,
    spectral_diagnostic,
)

__version__ = "0.1.0"
