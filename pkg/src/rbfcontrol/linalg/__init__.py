"""Working-precision arithmetic and the dense / sparse linear algebra used by the solvers."""

from .dd import DD, Precision, as_float, concatenate, is_dd, sqrt, where
from .dense import (
    Condition,
    LuFactors,
    batch_cond_1,
    batch_inverse,
    batch_matmul,
    batch_solve,
    cond_1,
    inverse,
    lu_factor,
    lu_solve,
    matmul,
    norm_1,
    solve,
)
from .sparse import SparseMatrix, sparse_solve

__all__ = [
    "DD",
    "Condition",
    "LuFactors",
    "Precision",
    "SparseMatrix",
    "as_float",
    "batch_cond_1",
    "batch_inverse",
    "batch_matmul",
    "batch_solve",
    "concatenate",
    "cond_1",
    "inverse",
    "is_dd",
    "lu_factor",
    "lu_solve",
    "matmul",
    "norm_1",
    "solve",
    "sparse_solve",
    "sqrt",
    "where",
]
