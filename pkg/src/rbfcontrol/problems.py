"""Benchmark control problems on the unit square and the discrete error measures."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

import mpmath
import numpy as np

from .kernels import OperatorSpec
from .linalg.dd import DD, Precision, as_float, sqrt

__all__ = [
    "ControlProblem",
    "Metrics",
    "compute_metrics",
    "get_problem",
    "problem_1",
    "problem_2",
    "problem_3",
    "verify_exact_solution",
]

_DPS = 40


def _points(x):
    x = np.asarray(x, dtype=np.float64)
    return x.reshape(-1, 2) if x.ndim == 1 else x


def _sinpi(v, precision):
    if precision is Precision.DOUBLE:
        out = np.sin(np.pi * v)
        out[(v == 0.0) | (v == 1.0)] = 0.0
        return out
    with mpmath.workdps(_DPS):
        vals = [mpmath.sinpi(mpmath.mpf(float(t))) for t in v]
    return Precision.EXTENDED.from_values(vals)


def _pi(precision):
    with mpmath.workdps(_DPS):
        return precision.scalar(+mpmath.pi)


@dataclass(frozen=True)
class ControlProblem:
    """Target ``y_hat``, boundary data ``g`` and, when known, the exact optimal pair.

    Data callables take an ``(n, 2)`` point array and a Precision; the exact
    solution callables additionally take ``beta``.
    """

    id: int
    name: str
    eps: object
    theta: object | None
    target: Callable
    boundary: Callable
    exact_state: Optional[Callable] = None
    exact_control: Optional[Callable] = None

    def spec(self, beta) -> OperatorSpec:
        if self.theta is None:
            return OperatorSpec.poisson(beta)
        return OperatorSpec.convection(self.eps, self.theta, beta)

    @property
    def has_exact(self) -> bool:
        return self.exact_state is not None


# ---------------------------------------------------------------- problem 1


def _p1_target(x, precision=Precision.DOUBLE):
    x = _points(x)
    precision = Precision.parse(precision)
    return _sinpi(x[:, 0], precision) * _sinpi(x[:, 1], precision)


def _p1_boundary(x, precision=Precision.DOUBLE):
    return Precision.parse(precision).zeros(_points(x).shape[0])


def _p1_denominator(beta, precision):
    return 1.0 + 4.0 * precision.scalar(beta) * _pi(precision) ** 4


def _p1_state(x, beta, precision=Precision.DOUBLE):
    precision = Precision.parse(precision)
    return _p1_target(x, precision) / _p1_denominator(_frac(beta), precision)


def _p1_control(x, beta, precision=Precision.DOUBLE):
    precision = Precision.parse(precision)
    pi = _pi(precision)
    return (2.0 * (pi * pi)) * _p1_state(x, beta, precision)


def _frac(beta):
    if isinstance(beta, float):
        return Fraction(repr(beta))
    return Fraction(beta)


def problem_1() -> ControlProblem:
    """Poisson control with target sin(pi x1) sin(pi x2) and homogeneous boundary data."""
    return ControlProblem(1, "poisson", 1, None, _p1_target, _p1_boundary, _p1_state, _p1_control)


# ---------------------------------------------------------------- problem 2


def _p2_target(x, precision=Precision.DOUBLE):
    return Precision.parse(precision).zeros(_points(x).shape[0])


def _p2_boundary(x, precision=Precision.DOUBLE):
    x = _points(x)
    # closed sets: {0} x [1/2, 1]  and  [0, 1] x {1}
    one = ((x[:, 0] == 0.0) & (x[:, 1] >= 0.5)) | (x[:, 1] == 1.0)
    return Precision.parse(precision).asarray(one.astype(np.float64))


def problem_2() -> ControlProblem:
    """Boundary-layer convection-diffusion control, eps = 1/200, wind angle pi/6."""
    with mpmath.workdps(_DPS):
        theta = mpmath.pi / 6
    return ControlProblem(2, "boundary-layer", Fraction(1, 200), theta, _p2_target, _p2_boundary)


# ---------------------------------------------------------------- problem 3


def _bump(x, precision):
    x = _points(x)
    inside = (x[:, 0] <= 0.5) & (x[:, 1] <= 0.5)
    v = np.where(inside, (2.0 * x[:, 0] - 1.0) ** 2 * (2.0 * x[:, 1] - 1.0) ** 2, 0.0)
    if precision is Precision.DOUBLE:
        return v
    a = DD(2.0 * x[:, 0] - 1.0)  # exact in binary for node coordinates
    b = DD(2.0 * x[:, 1] - 1.0)
    return DD(np.where(inside, 1.0, 0.0)) * (a * a * b * b)


def _p3_target(x, precision=Precision.DOUBLE):
    return _bump(x, Precision.parse(precision))


def _p3_boundary(x, precision=Precision.DOUBLE):
    return _bump(x, Precision.parse(precision))


def problem_3() -> ControlProblem:
    """Convection-diffusion control with a corner bump target, eps = 1/200, wind angle 2.4."""
    return ControlProblem(3, "corner-bump", Fraction(1, 200), Fraction("2.4"), _p3_target, _p3_boundary)


def get_problem(pid: int) -> ControlProblem:
    try:
        return {1: problem_1, 2: problem_2, 3: problem_3}[int(pid)]()
    except KeyError:
        raise ValueError(f"unknown problem {pid!r}; choose 1, 2 or 3") from None


# ---------------------------------------------------------------- metrics


@dataclass(frozen=True)
class Metrics:
    """Discrete norms over all nodes; relative errors only when an exact solution exists."""

    norm_y_minus_target: float
    norm_u: float
    cost: float
    re_y: float | None = None
    re_u: float | None = None


def _norm(v) -> float:
    if isinstance(v, DD):
        return float(sqrt((v * v).sum()))
    return float(np.sqrt(np.sum(np.asarray(v) ** 2)))


def compute_metrics(nodes, y, u, problem: ControlProblem, beta, over: str = "all") -> Metrics:
    """Norms ``||f||^2 = sum_k f(x_k)^2`` over every node, cost ``(||y-yh||^2 + beta ||u||^2) / 2``.

    ``over="interior"`` restricts every sum to interior nodes (needs a NodeSet).
    """
    pts = nodes.points if hasattr(nodes, "points") else _points(nodes)
    if y.shape[0] != pts.shape[0] or u.shape[0] != pts.shape[0]:
        raise ValueError("fields must be given at every node")
    if over == "interior":
        nb = nodes.n_boundary
        pts, y, u = pts[nb:], y[nb:], u[nb:]
    elif over != "all":
        raise ValueError(f"over must be 'all' or 'interior', got {over!r}")
    precision = Precision.of(y)
    u = precision.asarray(u)
    r = y - problem.target(pts, precision)
    ny, nu = _norm(r), _norm(u)
    if precision is Precision.EXTENDED:
        b = precision.scalar(_frac(beta))
        cost = float(((r * r).sum() + b * (u * u).sum()) * 0.5)
    else:
        cost = 0.5 * (float(np.sum(r * r)) + float(beta) * float(np.sum(u * u)))
    re_y = re_u = None
    if problem.has_exact:
        ys = problem.exact_state(pts, _frac(beta), precision)
        us = problem.exact_control(pts, _frac(beta), precision)
        re_y = _norm(y - ys) / _norm(ys)
        re_u = _norm(u - us) / _norm(us)
    return Metrics(ny, nu, cost, re_y, re_u)


def verify_exact_solution(beta, points, precision=Precision.EXTENDED) -> float:
    """Largest residual of the closed-form Problem 1 pair in the optimality system.

    Uses Lap^2 (sin sin) = 4 pi^4 sin sin and Lap (sin sin) = -2 pi^2 sin sin, so
    the residuals are ``y + beta Lap^2 y - y_hat`` and ``u - (-Lap y)``.
    """
    precision = Precision.parse(precision)
    p = problem_1()
    pts = _points(points)
    beta = _frac(beta)
    pi = _pi(precision)
    y = p.exact_state(pts, beta, precision)
    u = p.exact_control(pts, beta, precision)
    target = p.target(pts, precision)
    b = precision.scalar(beta)
    r_state = y + b * (4.0 * pi**4) * y - target
    r_control = u - (2.0 * (pi * pi)) * y
    return float(max(np.max(np.abs(as_float(r_state))), np.max(np.abs(as_float(r_control)))))
