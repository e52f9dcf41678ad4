"""Compressed-row sparse matrices and the iterative sparse solve.

Values may be float64 or double-double.  The solve is a mixed-precision
iterative refinement: residuals are formed in the matrix's own precision and
corrections come from restarted GMRES on the row-scaled float64 matrix.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import DimensionMismatch, NoConvergence, SingularMatrix
from . import _ddkern as K
from .dd import DD, Precision, as_float

logger = logging.getLogger(__name__)

DENSE_FALLBACK_LIMIT = 2000
SMALL_GMRES_BUDGET = 1000
BACKWARD_ERROR_FLOOR = 64


@dataclass(frozen=True)
class SparseMatrix:
    """CSR storage; column indices strictly increase within each row."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray | DD
    shape: tuple[int, int]

    @property
    def nnz(self) -> int:
        return int(self.indptr[-1])

    @property
    def precision(self) -> Precision:
        return Precision.of(self.data)

    @classmethod
    def from_triplets(cls, rows, cols, values, shape) -> SparseMatrix:
        """Build from (row, col, value) triplets, summing duplicates."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if rows.shape != cols.shape or rows.shape[0] != values.shape[0]:
            raise DimensionMismatch("triplet arrays differ in length")
        nr, nc = shape
        if rows.size and (rows.min() < 0 or rows.max() >= nr or cols.min() < 0 or cols.max() >= nc):
            raise DimensionMismatch("triplet index out of range")
        order = np.lexsort((cols, rows))
        r, c = rows[order], cols[order]
        new = np.ones(r.size, dtype=bool)
        new[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
        starts = np.flatnonzero(new)
        if isinstance(values, DD):
            vh, vl = K.segment_sum(starts, values.hi[order].copy(), values.lo[order].copy())
            data = DD(vh, vl)
        else:
            v = np.asarray(values, dtype=np.float64)[order]
            data = np.add.reduceat(v, starts) if v.size else v
        r, c = r[starts], c[starts]
        indptr = np.zeros(nr + 1, dtype=np.int64)
        np.add.at(indptr, r + 1, 1)
        return cls(np.cumsum(indptr), c, data, (int(nr), int(nc)))

    @classmethod
    def from_dense(cls, a) -> SparseMatrix:
        h = as_float(a)
        rows, cols = np.nonzero(h if not isinstance(a, DD) else (a.hi != 0) | (a.lo != 0))
        return cls.from_triplets(rows, cols, a[rows, cols], a.shape)

    @classmethod
    def identity(cls, n, precision=Precision.DOUBLE) -> SparseMatrix:
        idx = np.arange(n)
        return cls.from_triplets(idx, idx, precision.asarray(np.ones(n)), (n, n))

    def row(self, k):
        sl = slice(self.indptr[k], self.indptr[k + 1])
        return self.indices[sl], self.data[sl]

    def diagonal(self) -> np.ndarray:
        return self.to_scipy().diagonal()

    def to_scipy(self) -> sp.csr_matrix:
        """float64 image of the matrix."""
        return sp.csr_matrix((as_float(self.data), self.indices, self.indptr), shape=self.shape)

    def to_dense(self):
        out = self.precision.zeros(self.shape)
        rows = np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))
        out[rows, self.indices] = self.data
        return out

    def matvec(self, x):
        if x.shape[0] != self.shape[1]:
            raise DimensionMismatch(f"vector of length {x.shape[0]} for matrix {self.shape}")
        if isinstance(self.data, DD) or isinstance(x, DD):
            d = self.data if isinstance(self.data, DD) else DD(self.data)
            xx = x if isinstance(x, DD) else DD(x)
            return DD(*K.csr_matvec(self.indptr, self.indices, d.hi, d.lo,
                                    np.ascontiguousarray(xx.hi), np.ascontiguousarray(xx.lo)))
        return self.to_scipy() @ x

    __matmul__ = matvec

    def cond_1(self, exact_limit: int = 400):
        """1-norm condition number evaluated on the float64 image."""
        from .dense import Condition, cond_1, hager_norm1_inverse

        A = self.to_scipy()
        n = A.shape[0]
        if n <= exact_limit:
            return cond_1(A.toarray())
        try:
            lu = spla.splu(A.tocsc())
        except RuntimeError:
            return Condition(float("inf"), False)
        est = hager_norm1_inverse(lu.solve, lambda v: lu.solve(v, trans="T"), n)
        return Condition(float(abs(A).sum(axis=0).max()) * est, True)


def _norm2(v) -> float:
    if isinstance(v, DD):
        return math.sqrt(float((v * v).sum()))
    return float(np.linalg.norm(v))


def sparse_solve(
    s: SparseMatrix,
    b,
    tol: float | None = None,
    maxiter: int | None = None,
    restart: int = 50,
    max_refinements: int = 25,
):
    """Solve ``S x = b`` to relative residual ``tol`` in the precision of ``S``.

    Default tolerance is 1e-12 for float64 and 1e-26 for double-double.
    ``maxiter`` bounds the GMRES iterations per correction (default ``10 n``).
    Below ``DENSE_FALLBACK_LIMIT`` unknowns GMRES gets at most ``SMALL_GMRES_BUDGET``
    iterations before the corrections switch to a dense LU.

    When refinement stagnates above ``tol`` but the componentwise backward error
    ``max |r| / (|S||x| + |b|)`` is already at the rounding level of the working
    precision, the solution is returned: no solver can do better on that system.
    """
    n, m = s.shape
    if n != m:
        raise DimensionMismatch("sparse_solve needs a square matrix")
    if b.shape[0] != n:
        raise DimensionMismatch(f"rhs length {b.shape[0]} does not match {n}")
    prec = Precision.EXTENDED if (isinstance(s.data, DD) or isinstance(b, DD)) else Precision.DOUBLE
    if tol is None:
        tol = 1e-12 if prec is Precision.DOUBLE else 1e-26
    maxiter = maxiter or 10 * n
    b = prec.asarray(b)
    if not np.all(np.isfinite(as_float(b))) or not np.all(np.isfinite(as_float(s.data))):
        raise ValueError("sparse_solve needs finite matrix and right-hand side")
    x = prec.zeros(n)
    bnorm = _norm2(b)
    if bnorm == 0.0:
        return x

    A = s.to_scipy()
    diag = A.diagonal()
    rowmax = np.asarray(abs(A).max(axis=1).todense()).ravel()
    scale = np.where(diag != 0.0, diag, rowmax)
    scale[scale == 0.0] = 1.0
    As = sp.diags(1.0 / scale) @ A
    budget = maxiter if n >= DENSE_FALLBACK_LIMIT else min(maxiter, SMALL_GMRES_BUDGET)
    cycles = max(1, math.ceil(budget / restart))
    dense_lu = None

    def correction(r):
        nonlocal dense_lu
        rs = as_float(r) / scale
        if dense_lu is None:
            d, info = spla.gmres(As, rs, rtol=1e-13, atol=0.0, restart=min(restart, n),
                                 maxiter=cycles)
            if info == 0:
                return d
            if n >= DENSE_FALLBACK_LIMIT:
                raise NoConvergence(maxiter, float(np.linalg.norm(As @ d - rs) / np.linalg.norm(rs)))
            logger.info("GMRES stalled on %d unknowns; switching to dense LU", n)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)  # zero pivots are checked below
                dense_lu = sla.lu_factor(As.toarray(), check_finite=False)
            zero = np.flatnonzero(np.diag(dense_lu[0]) == 0.0)
            if zero.size:
                raise SingularMatrix("sparse system is singular", index=int(zero[0]))
        return sla.lu_solve(dense_lu, rs)

    res = float("inf")
    history = []
    for it in range(max_refinements + 1):
        r = b - s.matvec(x)
        res = _norm2(r) / bnorm
        history.append(res)
        if res <= tol:
            return x
        if it >= 3 and res > 0.5 * history[-2] and history[-2] > 0.5 * history[-3]:
            break  # stagnation
        x = x + prec.asarray(correction(r))
    if _backward_error(A, x, b, r) <= BACKWARD_ERROR_FLOOR * prec.unit_roundoff:
        logger.info("residual %.3e stalled at the rounding floor; accepting", res)
        return x
    raise NoConvergence(len(history) - 1, res)


def _backward_error(A, x, b, r) -> float:
    """Componentwise (Oettli-Prager) backward error, evaluated in float64."""
    denom = abs(A) @ np.abs(as_float(x)) + np.abs(as_float(b))
    num = np.abs(as_float(r))
    mask = denom > 0
    if np.any(num[~mask] > 0):
        return float("inf")
    return float(np.max(num[mask] / denom[mask])) if mask.any() else 0.0
