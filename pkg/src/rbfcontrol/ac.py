"""Global asymmetric collocation for the coupled state / control optimality system.

With ``y = H lam`` and ``u = H mu`` over all nodes, the collocated system is::

    [ G   beta E* ] [lam]   [d]
    [ -E  G       ] [mu ] = [0]

where ``G`` is the Gram matrix with polynomial constraint rows, ``E`` / ``E*``
carry the operator rows at interior nodes (zero elsewhere) and
``d = [g | y_hat | 0]``.  The block factorisation eliminates with ``-E G^-1``
and leaves the Schur complement ``R = G + beta E G^-1 E*``.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConditionOverflow, UnsupportedBoundaryOperator
from .geometry import NodeSet
from .kernels import Kernel, OperatorSpec, OpTag, PolyBasis, kernel_matrix, poly_matrix
from .linalg import Condition, Precision, as_float, cond_1, lu_factor, lu_solve, matmul
from .linalg.dd import concatenate

logger = logging.getLogger(__name__)


@dataclass
class AcSystem:
    nodes: NodeSet
    kernel: Kernel
    poly: PolyBasis
    spec: OperatorSpec
    precision: Precision
    G: object
    E: object
    Estar: object
    d: object

    @property
    def size(self) -> int:
        return self.G.shape[0]

    @property
    def beta(self):
        return self.spec.beta

    def full_matrix(self):
        """Monolithic ``2N x 2N`` matrix of the coupled system."""
        N = self.size
        A = self.precision.zeros((2 * N, 2 * N))
        b = self.precision.scalar(self.spec.beta)
        A[:N, :N] = self.G
        A[:N, N:] = b * self.Estar
        A[N:, :N] = -self.E
        A[N:, N:] = self.G
        return A

    def full_rhs(self):
        return concatenate([self.d, self.precision.zeros(self.size)])


@dataclass
class AcSolution:
    lam: object
    mu: object
    nodes: NodeSet
    kernel: Kernel
    poly: PolyBasis
    precision: Precision
    kappa: Condition
    residual: float = float("nan")
    timings: dict = field(default_factory=dict)

    @property
    def reliable(self) -> bool:
        return self.kappa.value * self.precision.unit_roundoff < 1.0


def _operator_rows(op, nodes, kernel, poly, spec, precision):
    """Rows of E-type blocks: zeros at boundary and constraint rows."""
    n, nb, npoly = nodes.n, nodes.n_boundary, poly.n_p
    N = n + npoly
    out = precision.zeros((N, N))
    interior = nodes.interior
    out[nb:n, :n] = kernel_matrix(op, spec, kernel, interior, nodes.points, precision)
    if npoly:
        out[nb:n, n:] = poly_matrix(op, spec, poly, interior, precision)
    return out


def gram_matrix(nodes: NodeSet, kernel: Kernel, poly: PolyBasis, precision=Precision.DOUBLE):
    """``[[Phi, P], [P^T, 0]]`` over all nodes (boundary rows first)."""
    precision = Precision.parse(precision)
    n, npoly = nodes.n, poly.n_p
    G = precision.zeros((n + npoly, n + npoly))
    G[:n, :n] = kernel_matrix(OpTag.IDENTITY, OperatorSpec(), kernel, nodes.points, nodes.points, precision)
    if npoly:
        P = poly_matrix(OpTag.IDENTITY, OperatorSpec(), poly, nodes.points, precision)
        G[:n, n:] = P
        G[n:, :n] = P.T
    return G


def assemble_ac(nodes: NodeSet, kernel: Kernel, poly: PolyBasis, spec: OperatorSpec,
                problem, precision=Precision.DOUBLE, boundary_operator=OpTag.DIRICHLET) -> AcSystem:
    """Assemble the blocks and data vector ``d = [g(boundary) | y_hat(interior) | 0]``."""
    if boundary_operator not in (OpTag.DIRICHLET, OpTag.IDENTITY):
        raise UnsupportedBoundaryOperator(f"only Dirichlet boundaries are supported, got {boundary_operator}")
    precision = Precision.parse(precision)
    G = gram_matrix(nodes, kernel, poly, precision)
    E = _operator_rows(OpTag.E, nodes, kernel, poly, spec, precision)
    Es = _operator_rows(OpTag.ESTAR, nodes, kernel, poly, spec, precision)
    g = problem.boundary(nodes.boundary, precision)
    yhat = problem.target(nodes.interior, precision)
    d = concatenate([g, yhat, precision.zeros(poly.n_p)])
    return AcSystem(nodes, kernel, poly, spec, precision, G, E, Es, d)


def _interior_rows(sys: AcSystem):
    return slice(sys.nodes.n_boundary, sys.nodes.n)


def _check_condition(kappa: Condition, precision: Precision, what: str):
    if kappa.value * precision.unit_roundoff >= 1.0:
        warnings.warn(
            f"{what} condition number {kappa.value:.2e} exceeds 1/u of {precision.value} precision",
            ConditionOverflow,
            stacklevel=3,
        )


def solve_ac_schur(sys: AcSystem) -> AcSolution:
    """Block-LU solve: ``R mu = E G^-1 d``, then ``G lam = d - beta E* mu``."""
    prec = sys.precision
    t0 = time.perf_counter()
    fG = lu_factor(sys.G)
    rows = _interior_rows(sys)
    beta = prec.scalar(sys.spec.beta)

    # E has non-zero rows only at interior nodes
    X = lu_solve(fG, sys.Estar)
    R = sys.G.copy()
    R[rows] = R[rows] + beta * matmul(sys.E[rows], X)
    z = prec.zeros(sys.size)
    z[rows] = matmul(sys.E[rows], lu_solve(fG, sys.d))
    t1 = time.perf_counter()
    mu = lu_solve(lu_factor(R), z)
    lam = lu_solve(fG, sys.d - beta * matmul(sys.Estar, mu))
    t2 = time.perf_counter()
    kappa = cond_1(sys.G, factors=fG)
    _check_condition(kappa, prec, "Gram matrix")
    sol = AcSolution(lam, mu, sys.nodes, sys.kernel, sys.poly, prec, kappa,
                     timings={"factor": t1 - t0, "solve": t2 - t1, "condition": time.perf_counter() - t2})
    sol.residual = system_residual(sys, lam, mu)
    return sol


def solve_ac_monolithic(sys: AcSystem) -> AcSolution:
    """Dense LU of the full coupled matrix (verification path)."""
    t0 = time.perf_counter()
    x = lu_solve(lu_factor(sys.full_matrix()), sys.full_rhs())
    N = sys.size
    lam, mu = x[:N], x[N:]
    kappa = cond_1(sys.G)
    sol = AcSolution(lam, mu, sys.nodes, sys.kernel, sys.poly, sys.precision, kappa,
                     timings={"solve": time.perf_counter() - t0})
    sol.residual = system_residual(sys, lam, mu)
    return sol


def system_residual(sys: AcSystem, lam, mu) -> float:
    """``||A [lam; mu] - [d; 0]||_inf / ||d||_inf`` evaluated in the working precision."""
    beta = sys.precision.scalar(sys.spec.beta)
    r1 = matmul(sys.G, lam) + beta * matmul(sys.Estar, mu) - sys.d
    r2 = matmul(sys.G, mu) - matmul(sys.E, lam)
    dn = float(np.max(np.abs(as_float(sys.d))))
    num = max(float(np.max(np.abs(as_float(r1)))), float(np.max(np.abs(as_float(r2)))))
    return num / dn if dn > 0 else num


def evaluate_ac(sol: AcSolution, x):
    """State and control ``(H(x) lam, H(x) mu)`` at points ``x`` (shape ``(2,)`` or ``(m, 2)``)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = x.reshape(-1, 2)
    prec = sol.precision
    H = concatenate([
        kernel_matrix(OpTag.IDENTITY, OperatorSpec(), sol.kernel, pts, sol.nodes.points, prec),
        poly_matrix(OpTag.IDENTITY, OperatorSpec(), sol.poly, pts, prec),
    ], axis=1)
    y, u = matmul(H, sol.lam), matmul(H, sol.mu)
    if single:
        return y[0], u[0]
    return y, u


def nodal_fields(sol: AcSolution):
    """State and control at every node (with exact zero control on the boundary rows' target)."""
    return evaluate_ac(sol, sol.nodes.points)
