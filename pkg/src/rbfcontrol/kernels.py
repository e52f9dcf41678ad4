"""Multiquadric kernel, linear polynomial augmentation and the operator calculus.

The convection-diffusion operator is ``E = -eps*Lap + w.grad`` with adjoint
``E* = -eps*Lap - w.grad``.  For constant ``w`` the composition is
``E*E = eps^2 Lap^2 - (w.grad)^2`` and the state operator is ``M = I + beta E*E``.

Every evaluator is vectorised: ``x`` and ``xj`` broadcast against each other
with a trailing axis of length 2, and the arithmetic runs in the working
precision selected by the caller (float64 arrays or ``DD``).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import numpy as np

from .linalg.dd import DD, Precision, concatenate, sqrt

__all__ = [
    "Kernel",
    "OpTag",
    "OperatorSpec",
    "PolyBasis",
    "eval_kernel_op",
    "eval_poly_op",
    "kernel_matrix",
    "poly_matrix",
    "reconstruction_row",
]


def _exact(value):
    """Keep decimal input exact: floats go through their shortest repr."""
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value)
    return value


@dataclass(frozen=True)
class Kernel:
    """Multiquadric ``phi(r) = sqrt(c + r^2)`` (shape parameter added under the root)."""

    c: object

    def __post_init__(self):
        object.__setattr__(self, "c", _exact(self.c))
        if float(self.c) <= 0.0:
            raise ValueError("shape parameter must be positive")

    def shape_in(self, precision: Precision):
        return precision.scalar(self.c)

    def perturbed(self, delta_fraction=Fraction(1, 1000)) -> Kernel:
        """Kernel with ``c = m*10^a`` replaced by ``(m + 0.001)*10^a``."""
        c = Fraction(self.c)
        alpha = math.floor(math.log10(c))
        # guard the float log10 at exact powers of ten
        while Fraction(10) ** alpha > c:
            alpha -= 1
        while Fraction(10) ** (alpha + 1) <= c:
            alpha += 1
        return Kernel(c + delta_fraction * Fraction(10) ** alpha)

    def __str__(self):
        return f"MQ(c={float(self.c):g})"


@dataclass(frozen=True)
class PolyBasis:
    """Monomials {1} (degree 0), {1, x1, x2} (degree 1) or none (degree None)."""

    degree: int | None = 1

    def __post_init__(self):
        if self.degree not in (None, 0, 1):
            raise ValueError("polynomial degree must be None, 0 or 1")

    @property
    def n_p(self) -> int:
        return 0 if self.degree is None else (self.degree + 1) * (self.degree + 2) // 2


@dataclass(frozen=True)
class OperatorSpec:
    """Diffusion ``eps``, unit wind ``omega`` and penalty ``beta``."""

    eps: object = 1
    omega: tuple = (0, 0)
    beta: object = Fraction(1, 10**6)

    def __post_init__(self):
        object.__setattr__(self, "eps", _exact(self.eps))
        object.__setattr__(self, "beta", _exact(self.beta))
        object.__setattr__(self, "omega", tuple(_exact(w) for w in self.omega))
        if len(self.omega) != 2:
            raise ValueError("omega must be a 2-vector")
        if float(self.eps) < 0.0 or float(self.beta) < 0.0:
            raise ValueError("eps and beta must be non-negative")
        wnorm = math.hypot(float(self.omega[0]), float(self.omega[1]))
        if float(self.eps) < 1.0 and abs(wnorm - 1.0) > 1e-12:
            raise ValueError("convection problems need a unit wind vector")

    @classmethod
    def poisson(cls, beta) -> OperatorSpec:
        return cls(1, (0, 0), beta)

    @classmethod
    def convection(cls, eps, theta, beta) -> OperatorSpec:
        """Wind ``(cos theta, sin theta)``; ``theta`` may be an mpmath number for full accuracy."""
        with mpmath.workdps(40):
            if isinstance(theta, Fraction):
                th = mpmath.mpf(theta.numerator) / theta.denominator
            else:
                th = mpmath.mpf(theta)
            omega = (+mpmath.cos(th), +mpmath.sin(th))
        return cls(eps, omega, beta)

    def with_beta(self, beta) -> OperatorSpec:
        return OperatorSpec(self.eps, self.omega, beta)

    @property
    def is_poisson(self) -> bool:
        return float(self.omega[0]) == 0.0 and float(self.omega[1]) == 0.0

    def params(self, precision: Precision):
        s = precision.scalar
        return s(self.eps), s(self.omega[0]), s(self.omega[1]), s(self.beta)


class OpTag(enum.Enum):
    IDENTITY = "I"
    DIRICHLET = "B"
    E = "E"
    ESTAR = "E*"
    BETA_ESTAR = "beta E*"
    M = "M"
    ESTAR_E = "E*E"
    # primitives, used for cross-checks
    LAPLACIAN = "Lap"
    BILAPLACIAN = "Lap^2"
    CONVECTION = "w.grad"
    CONVECTION2 = "(w.grad)^2"
    DX1 = "d/dx1"
    DX2 = "d/dx2"


def _prec_of(*xs):
    return Precision.EXTENDED if any(isinstance(x, DD) for x in xs) else Precision.DOUBLE


def _differences(x, xj, precision):
    x = precision.asarray(x)
    xj = precision.asarray(xj)
    d = x - xj
    return d[..., 0], d[..., 1]


def eval_kernel_op(op: OpTag, spec: OperatorSpec, kernel: Kernel, x, xj,
                   precision: Precision = Precision.DOUBLE):
    """``(Q phi)(x - xj)`` with ``Q`` acting on the first argument."""
    precision = Precision.parse(precision)
    dx, dy = _differences(x, xj, precision)
    c = kernel.shape_in(precision)
    eps, w1, w2, beta = spec.params(precision)
    s = dx * dx + dy * dy
    phi = sqrt(c + s)

    if op in (OpTag.IDENTITY, OpTag.DIRICHLET):
        return phi
    inv = 1.0 / phi
    inv3 = inv * inv * inv

    def lap():
        return (2.0 * c + s) * inv3

    def conv():
        return (w1 * dx + w2 * dy) * inv

    def conv2():
        wd = w1 * dx + w2 * dy
        return (w1 * w1 + w2 * w2) * inv - wd * wd * inv3

    def bilap():
        inv7 = inv3 * inv3 * inv
        return (s * s + 8.0 * c * s - 8.0 * (c * c)) * inv7

    if op is OpTag.LAPLACIAN:
        return lap()
    if op is OpTag.BILAPLACIAN:
        return bilap()
    if op is OpTag.CONVECTION:
        return conv()
    if op is OpTag.CONVECTION2:
        return conv2()
    if op is OpTag.DX1:
        return dx * inv
    if op is OpTag.DX2:
        return dy * inv
    if op is OpTag.E:
        return conv() - eps * lap()
    if op is OpTag.ESTAR:
        return -(eps * lap()) - conv()
    if op is OpTag.BETA_ESTAR:
        return beta * (-(eps * lap()) - conv())
    if op is OpTag.ESTAR_E:
        return (eps * eps) * bilap() - conv2()
    if op is OpTag.M:
        return phi + beta * ((eps * eps) * bilap() - conv2())
    raise ValueError(f"unsupported operator {op}")


def eval_poly_op(op: OpTag, spec: OperatorSpec, p: int, x,
                 precision: Precision = Precision.DOUBLE):
    """Operator applied to monomial ``p`` (0 -> 1, 1 -> x1, 2 -> x2) at ``x``."""
    precision = Precision.parse(precision)
    if p not in (0, 1, 2):
        raise ValueError("polynomial index must be 0, 1 or 2")
    x = np.asarray(x, dtype=np.float64)
    shape = x.shape[:-1]
    ones = np.ones(shape)
    eps, w1, w2, beta = spec.params(precision)
    if op in (OpTag.IDENTITY, OpTag.DIRICHLET, OpTag.M):
        return precision.asarray(ones if p == 0 else x[..., p - 1].copy())
    if p == 0 or op in (OpTag.LAPLACIAN, OpTag.BILAPLACIAN, OpTag.CONVECTION2, OpTag.ESTAR_E):
        return precision.zeros(shape)
    w = w1 if p == 1 else w2
    if op in (OpTag.E, OpTag.CONVECTION):
        return w * precision.asarray(ones)
    if op is OpTag.ESTAR:
        return -w * precision.asarray(ones)
    if op is OpTag.BETA_ESTAR:
        return -(beta * w) * precision.asarray(ones)
    if op is OpTag.DX1:
        return precision.asarray(ones if p == 1 else np.zeros(shape))
    if op is OpTag.DX2:
        return precision.asarray(ones if p == 2 else np.zeros(shape))
    raise ValueError(f"unsupported operator {op}")


def kernel_matrix(op, spec, kernel, x, y, precision=Precision.DOUBLE):
    """``K[..., i, j] = (Q phi)(x_i - y_j)`` for point arrays ``x (..., m, 2)``, ``y (..., n, 2)``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return eval_kernel_op(op, spec, kernel, x[..., :, None, :], y[..., None, :, :], precision)


def poly_matrix(op, spec, poly: PolyBasis, x, precision=Precision.DOUBLE):
    """``P[..., i, l] = (Q p_l)(x_i)``, shape ``(..., m, n_p)``."""
    precision = Precision.parse(precision)
    x = np.asarray(x, dtype=np.float64)
    if poly.n_p == 0:
        return precision.zeros(x.shape[:-1] + (0,))
    cols = [eval_poly_op(op, spec, p, x, precision)[..., None] for p in range(poly.n_p)]
    return concatenate(cols, axis=-1)


def reconstruction_row(op, spec, kernel, poly, x, members, precision=Precision.DOUBLE):
    """``[(Q phi)(x - x_j) for members | (Q p_l)(x)]``; batched over leading axes of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    members = np.asarray(members, dtype=np.float64)
    if members.shape[-2] == 0:
        raise ValueError("reconstruction row needs at least one member")
    k = eval_kernel_op(op, spec, kernel, x[..., None, :], members, precision)
    return concatenate([k, poly_matrix(op, spec, poly, x[..., None, :], precision)[..., 0, :]], axis=-1)
