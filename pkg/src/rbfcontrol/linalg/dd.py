"""Double-double arrays and the two working precisions.

``DD`` wraps a pair of float64 arrays and behaves like a small subset of a numpy
array: broadcasting arithmetic, indexing, reductions.  Code written against
plain operators therefore runs unchanged on ``np.ndarray`` (working double
precision) or ``DD`` (extended precision, about 32 significant digits).
"""

from __future__ import annotations

import enum
from decimal import Decimal
from fractions import Fraction
from numbers import Integral

import mpmath
import numpy as np

from . import _ddkern as K

__all__ = [
    "DD",
    "Precision",
    "as_float",
    "concatenate",
    "is_dd",
    "sqrt",
    "to_dd_parts",
    "where",
]


def to_dd_parts(value) -> tuple[float, float]:
    """Round an exact scalar (str, Fraction, Decimal, int, float, mpf) to double-double."""
    if isinstance(value, DD):
        return float(value.hi), float(value.lo)
    if isinstance(value, (float, np.floating)):
        return float(value), 0.0
    with mpmath.workprec(160):
        if isinstance(value, Fraction):
            v = mpmath.mpf(value.numerator) / value.denominator
        elif isinstance(value, (Decimal, str)):
            v = mpmath.mpf(str(value))
        elif isinstance(value, (Integral, mpmath.mpf)):
            v = mpmath.mpf(value)
        else:
            raise TypeError(f"cannot convert {type(value).__name__} to double-double")
        hi = float(v)
        lo = float(v - hi)
    return hi, lo


def _parts(x):
    if isinstance(x, DD):
        return x.hi, x.lo
    a = np.asarray(x, dtype=np.float64)
    return a, np.zeros_like(a)


class DD:
    """Array of double-double numbers."""

    __array_ufunc__ = None  # make ndarray binary ops defer to our reflected methods
    __slots__ = ("hi", "lo")

    def __init__(self, hi, lo=None):
        self.hi = np.asarray(hi, dtype=np.float64)
        if lo is None:
            self.lo = np.zeros_like(self.hi)
        else:
            self.lo = np.asarray(lo, dtype=np.float64)
            if self.lo.shape != self.hi.shape:
                self.lo = np.broadcast_to(self.lo, self.hi.shape).copy()

    @classmethod
    def from_value(cls, value) -> DD:
        hi, lo = to_dd_parts(value)
        return cls(hi, lo)

    @classmethod
    def from_values(cls, values) -> DD:
        obj = np.array(values, dtype=object)
        pairs = [to_dd_parts(v) for v in obj.ravel()]
        hi = np.array([p[0] for p in pairs]).reshape(obj.shape)
        lo = np.array([p[1] for p in pairs]).reshape(obj.shape)
        return cls(hi, lo)

    @classmethod
    def zeros(cls, shape) -> DD:
        return cls(np.zeros(shape), np.zeros(shape))

    # -- array protocol -----------------------------------------------------
    @property
    def shape(self):
        return self.hi.shape

    @property
    def ndim(self):
        return self.hi.ndim

    @property
    def size(self):
        return self.hi.size

    @property
    def T(self) -> DD:
        return DD(self.hi.T, self.lo.T)

    def __len__(self):
        return len(self.hi)

    def __getitem__(self, idx) -> DD:
        return DD(self.hi[idx], self.lo[idx])

    def __setitem__(self, idx, value):
        h, l = _parts(value)
        self.hi[idx] = h
        self.lo[idx] = l

    def copy(self) -> DD:
        return DD(self.hi.copy(), self.lo.copy())

    def reshape(self, *shape) -> DD:
        return DD(self.hi.reshape(*shape), self.lo.reshape(*shape))

    def ravel(self) -> DD:
        return DD(self.hi.ravel(), self.lo.ravel())

    def swapaxes(self, a, b) -> DD:
        return DD(self.hi.swapaxes(a, b), self.lo.swapaxes(a, b))

    # -- arithmetic ---------------------------------------------------------
    def __add__(self, other):
        h, l = _parts(other)
        return DD(*K.g_add(self.hi, self.lo, h, l))

    __radd__ = __add__

    def __sub__(self, other):
        h, l = _parts(other)
        return DD(*K.g_add(self.hi, self.lo, -h, -l))

    def __rsub__(self, other):
        h, l = _parts(other)
        return DD(*K.g_add(h, l, -self.hi, -self.lo))

    def __mul__(self, other):
        h, l = _parts(other)
        return DD(*K.g_mul(self.hi, self.lo, h, l))

    __rmul__ = __mul__

    def __truediv__(self, other):
        h, l = _parts(other)
        return DD(*K.g_div(self.hi, self.lo, h, l))

    def __rtruediv__(self, other):
        h, l = _parts(other)
        return DD(*K.g_div(h, l, self.hi, self.lo))

    def __neg__(self):
        return DD(-self.hi, -self.lo)

    def __pos__(self):
        return self

    def __abs__(self):
        neg = self.hi < 0
        return DD(np.where(neg, -self.hi, self.hi), np.where(neg, -self.lo, self.lo))

    def __pow__(self, n):
        if not isinstance(n, Integral) or n < 0:
            raise ValueError("only non-negative integer powers are supported")
        result = DD(np.ones_like(self.hi))
        base = self
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    def __matmul__(self, other):
        from .dense import matmul

        return matmul(self, other)

    def __rmatmul__(self, other):
        from .dense import matmul

        return matmul(other, self)

    # -- reductions / conversion -------------------------------------------
    def sum(self, axis=None) -> DD:
        if axis is None:
            h, l = self.hi.ravel(), self.lo.ravel()
            return DD(*K.g_sum(h, l))
        h = np.moveaxis(self.hi, axis, -1)
        l = np.moveaxis(self.lo, axis, -1)
        return DD(*K.g_sum(np.ascontiguousarray(h), np.ascontiguousarray(l)))

    def to_float(self) -> np.ndarray:
        return self.hi + self.lo

    def __float__(self):
        return float(self.hi + self.lo)

    def to_mpf(self):
        """Exact value of a scalar as an mpmath number."""
        with mpmath.workprec(160):
            return mpmath.mpf(float(self.hi)) + mpmath.mpf(float(self.lo))

    def __repr__(self):
        if self.size == 1:
            with mpmath.workdps(34):
                return f"DD({mpmath.nstr(self.reshape(()).to_mpf(), 32)})"
        return f"DD(shape={self.shape}, hi=\n{self.hi!r})"


class Precision(enum.Enum):
    """Working precision: hardware double or double-double."""

    DOUBLE = "double"
    EXTENDED = "extended"

    @classmethod
    def parse(cls, value) -> Precision:
        if isinstance(value, Precision):
            return value
        return cls(str(value).lower())

    @classmethod
    def of(cls, x) -> Precision:
        return cls.EXTENDED if isinstance(x, DD) else cls.DOUBLE

    @property
    def unit_roundoff(self) -> float:
        return 2.0**-53 if self is Precision.DOUBLE else 2.0**-104

    @property
    def digits(self) -> int:
        return 16 if self is Precision.DOUBLE else 32

    def scalar(self, value):
        """Best representation of an exact scalar in this precision."""
        hi, lo = to_dd_parts(value)
        if self is Precision.DOUBLE:
            return hi + lo
        return DD(hi, lo)

    def asarray(self, x):
        if self is Precision.DOUBLE:
            if isinstance(x, DD):
                return x.to_float()
            return np.asarray(x, dtype=np.float64)
        if isinstance(x, DD):
            return x
        return DD(x)

    def zeros(self, shape):
        if self is Precision.DOUBLE:
            return np.zeros(shape)
        return DD.zeros(shape)

    def eye(self, n):
        return self.asarray(np.eye(n))

    def from_values(self, values):
        """Array from exact scalars (str / Fraction / mpf ...)."""
        if self is Precision.DOUBLE:
            return DD.from_values(values).to_float()
        return DD.from_values(values)


def is_dd(x) -> bool:
    return isinstance(x, DD)


def as_float(x) -> np.ndarray:
    """Nearest float64 array of either representation."""
    if isinstance(x, DD):
        return x.to_float()
    return np.asarray(x, dtype=np.float64)


def sqrt(x):
    if isinstance(x, DD):
        return DD(*K.g_sqrt(x.hi, x.lo))
    return np.sqrt(x)


def where(cond, a, b):
    if isinstance(a, DD) or isinstance(b, DD):
        ah, al = _parts(a)
        bh, bl = _parts(b)
        return DD(np.where(cond, ah, bh), np.where(cond, al, bl))
    return np.where(cond, a, b)


def concatenate(arrays, axis=0):
    if any(isinstance(a, DD) for a in arrays):
        parts = [_parts(a) for a in arrays]
        return DD(
            np.concatenate([p[0] for p in parts], axis=axis),
            np.concatenate([p[1] for p in parts], axis=axis),
        )
    return np.concatenate(arrays, axis=axis)
