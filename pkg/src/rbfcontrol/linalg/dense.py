"""Dense LU, inverse, products and 1-norm condition numbers in either precision.

Double precision goes through LAPACK (scipy); extended precision through the
compiled double-double kernels.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg as sla

from ..errors import DimensionMismatch, SingularMatrix
from . import _ddkern as K
from .dd import DD, Precision, as_float

EXACT_COND_LIMIT = 400


@dataclass(frozen=True)
class LuFactors:
    """``A[perm] = L @ U`` with unit-diagonal ``L`` stored below the diagonal of ``lu``."""

    perm: np.ndarray
    lu: np.ndarray | DD
    piv: np.ndarray | None = None  # LAPACK swap sequence, double only

    @property
    def n(self) -> int:
        return self.lu.shape[0]

    @property
    def precision(self) -> Precision:
        return Precision.of(self.lu)

    def lower(self):
        lu = self.lu
        eye = np.eye(self.n)
        if isinstance(lu, DD):
            return DD(np.tril(lu.hi, -1) + eye, np.tril(lu.lo, -1))
        return np.tril(lu, -1) + eye

    def upper(self):
        lu = self.lu
        if isinstance(lu, DD):
            return DD(np.triu(lu.hi), np.triu(lu.lo))
        return np.triu(lu)


def _check_square(a):
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")


def _swaps_to_perm(piv):
    perm = np.arange(len(piv))
    for i, p in enumerate(piv):
        perm[i], perm[p] = perm[p], perm[i]
    return perm


def lu_factor(a) -> LuFactors:
    """Partial-pivoted LU factorization; raises ``SingularMatrix`` on an exactly zero pivot."""
    _check_square(a)
    if isinstance(a, DD):
        if not (np.all(np.isfinite(a.hi)) and np.all(np.isfinite(a.lo))):
            raise ValueError("matrix has non-finite entries")
        h = np.ascontiguousarray(a.hi, dtype=np.float64).copy()
        l = np.ascontiguousarray(a.lo, dtype=np.float64).copy()
        perm = np.empty(a.shape[0], dtype=np.int64)
        info = K.lu_factor_inplace(h, l, perm)
        if info >= 0:
            raise SingularMatrix(f"zero pivot in column {info}", index=int(info))
        return LuFactors(perm=perm, lu=DD(h, l))
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    if a.shape[0] == 0:
        return LuFactors(np.zeros(0, dtype=np.int64), a.copy(), np.zeros(0, dtype=np.int32))
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)  # zero pivots are checked below
        lu, piv = sla.lu_factor(a, check_finite=False)
    zero = np.flatnonzero(np.diag(lu) == 0.0)
    if zero.size:
        raise SingularMatrix(f"zero pivot in column {zero[0]}", index=int(zero[0]))
    return LuFactors(perm=_swaps_to_perm(piv), lu=lu, piv=piv)


def lu_solve(f: LuFactors, b, trans: bool = False):
    """Solve ``A x = b`` (or ``A^T x = b``) from factors; ``b`` may be 1-D or 2-D."""
    if b.shape[0] != f.n:
        raise DimensionMismatch(f"rhs has {b.shape[0]} rows, matrix is {f.n}x{f.n}")
    if isinstance(f.lu, DD):
        if trans:
            raise NotImplementedError("transposed solve: factor the transpose instead")
        b = b if isinstance(b, DD) else DD(b)
        vec = b.ndim == 1
        bh = np.ascontiguousarray(b.hi.reshape(f.n, -1))
        bl = np.ascontiguousarray(b.lo.reshape(f.n, -1))
        xh, xl = K.lu_solve(f.lu.hi, f.lu.lo, f.perm, bh, bl)
        x = DD(xh, xl)
        return x[:, 0] if vec else x
    return sla.lu_solve((f.lu, f.piv), as_float(b), trans=1 if trans else 0, check_finite=False)


def solve(a, b):
    return lu_solve(lu_factor(a), b)


def inverse(a):
    f = lu_factor(a)
    return lu_solve(f, Precision.of(a).eye(a.shape[0]))


def matmul(a, b):
    """Matrix product; promotes to double-double if either operand is ``DD``."""
    if isinstance(a, DD) or isinstance(b, DD):
        a = a if isinstance(a, DD) else DD(a)
        b = b if isinstance(b, DD) else DD(b)
        va, vb = a.ndim == 1, b.ndim == 1
        A = a.reshape(1, -1) if va else a
        B = b.reshape(-1, 1) if vb else b
        if A.shape[1] != B.shape[0]:
            raise DimensionMismatch(f"cannot multiply {a.shape} by {b.shape}")
        ch, cl = K.matmul(
            np.ascontiguousarray(A.hi), np.ascontiguousarray(A.lo),
            np.ascontiguousarray(B.hi), np.ascontiguousarray(B.lo),
        )
        c = DD(ch, cl)
        if va and vb:
            return c.reshape(())
        if va:
            return c[0]
        if vb:
            return c[:, 0]
        return c
    return np.asarray(a) @ np.asarray(b)


def norm_1(a) -> float:
    """Maximum absolute column sum (float64 accuracy is plenty for a norm)."""
    return float(np.max(np.sum(np.abs(as_float(a)), axis=0))) if a.size else 0.0


class Condition(NamedTuple):
    value: float
    estimated: bool

    def __float__(self):
        return self.value


def hager_norm1_inverse(
    solve: Callable, solve_t: Callable, n: int, max_iter: int = 5
) -> float:
    """Estimate ``||A^{-1}||_1`` from solves with ``A`` and ``A^T`` (Hager / Higham).

    The iteration budget is at least three; the result is the max with
    Higham's alternating-sign test vector.
    """
    x = np.full(n, 1.0 / n)
    est = 0.0
    last_j = -1
    for _ in range(max(3, max_iter)):
        y = as_float(solve(x))
        est = max(est, float(np.sum(np.abs(y))))
        z = as_float(solve_t(np.where(y >= 0, 1.0, -1.0)))
        j = int(np.argmax(np.abs(z)))
        if np.max(np.abs(z)) <= z @ x or j == last_j:
            break
        last_j = j
        x = np.zeros(n)
        x[j] = 1.0
    if n > 1:
        alt = np.array([(-1.0) ** i * (1.0 + i / (n - 1)) for i in range(n)])
        est = max(est, 2.0 * float(np.sum(np.abs(as_float(solve(alt))))) / (3.0 * n))
    return est


def cond_1(a, factors: LuFactors | None = None, exact_limit: int = EXACT_COND_LIMIT) -> Condition:
    """1-norm condition number ``||A||_1 ||A^{-1}||_1``.

    Exact (explicit inverse) up to ``exact_limit`` rows, Hager estimate beyond.
    A singular matrix reports ``inf``.
    """
    from .sparse import SparseMatrix

    if isinstance(a, SparseMatrix):
        return a.cond_1(exact_limit=exact_limit)
    _check_square(a)
    n = a.shape[0]
    try:
        f = factors or lu_factor(a)
    except SingularMatrix:
        return Condition(float("inf"), False)
    anorm = norm_1(a)
    if n <= exact_limit:
        inv = lu_solve(f, Precision.of(a).eye(n))
        return Condition(anorm * norm_1(inv), False)
    if isinstance(a, DD):
        ft = lu_factor(a.T.copy())
        prec = Precision.EXTENDED
        solve_ = lambda v: lu_solve(f, prec.asarray(v))
        solve_t = lambda v: lu_solve(ft, prec.asarray(v))
    else:
        solve_ = lambda v: lu_solve(f, v)
        solve_t = lambda v: lu_solve(f, v, trans=True)
    return Condition(anorm * hager_norm1_inverse(solve_, solve_t, n), True)


# ----------------------------------------------------------- batched helpers


def batch_solve(a, b):
    """Solve ``a[k] x[k] = b[k]`` for a stack of square systems."""
    if isinstance(a, DD) or isinstance(b, DD):
        a = a if isinstance(a, DD) else DD(a)
        b = b if isinstance(b, DD) else DD(b)
        xh, xl, info = K.batch_solve(
            np.ascontiguousarray(a.hi), np.ascontiguousarray(a.lo),
            np.ascontiguousarray(b.hi), np.ascontiguousarray(b.lo),
        )
        bad = np.flatnonzero(info >= 0)
        if bad.size:
            raise SingularMatrix(f"local system {bad[0]} is singular", index=int(bad[0]))
        return DD(xh, xl)
    try:
        return np.linalg.solve(a, b[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix(str(exc)) from exc


def batch_inverse(a):
    if isinstance(a, DD):
        oh, ol, info = K.batch_inverse(np.ascontiguousarray(a.hi), np.ascontiguousarray(a.lo))
        bad = np.flatnonzero(info >= 0)
        if bad.size:
            raise SingularMatrix(f"local system {bad[0]} is singular", index=int(bad[0]))
        return DD(oh, ol)
    try:
        return np.linalg.inv(a)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix(str(exc)) from exc


def batch_matmul(a, b, exact: bool = False):
    """Stacked products; ``exact`` rounds every entry of the exact product once.

    Exact products are computed in double-double for either input precision.
    """
    if exact or isinstance(a, DD) or isinstance(b, DD):
        a = a if isinstance(a, DD) else DD(a)
        b = b if isinstance(b, DD) else DD(b)
        kern = K.batch_matmul_exact if exact else K.batch_matmul
        ch, cl = kern(
            np.ascontiguousarray(a.hi), np.ascontiguousarray(a.lo),
            np.ascontiguousarray(b.hi), np.ascontiguousarray(b.lo),
        )
        return DD(ch, cl)
    return np.matmul(a, b)


def batch_norm_1(a) -> np.ndarray:
    return np.max(np.sum(np.abs(as_float(a)), axis=-2), axis=-1)


def batch_cond_1(a, inv=None) -> np.ndarray:
    """Exact 1-norm condition number of every matrix in a stack (``inf`` when singular)."""
    try:
        inv = batch_inverse(a) if inv is None else inv
    except SingularMatrix:
        out = np.empty(a.shape[0])
        for k in range(a.shape[0]):
            out[k] = cond_1(a[k]).value
        return out
    return batch_norm_1(a) * batch_norm_1(inv)
