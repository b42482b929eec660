"""Sub-preconditioners: ILU(0), classical AMG and direct LU."""
from .amg import AMGHierarchy, AMGParams, amg_apply, amg_setup, rs_splitting, strength_of_connection
from .direct import DenseFactor, SparseLUFactor, dense_factor, dense_solve, direct_factor
from .ilu import ILU0Factor, ilu0_apply, ilu0_factor

__all__ = [
    "AMGHierarchy",
    "AMGParams",
    "DenseFactor",
    "ILU0Factor",
    "SparseLUFactor",
    "amg_apply",
    "amg_setup",
    "dense_factor",
    "dense_solve",
    "direct_factor",
    "ilu0_apply",
    "ilu0_factor",
    "rs_splitting",
    "strength_of_connection",
]
