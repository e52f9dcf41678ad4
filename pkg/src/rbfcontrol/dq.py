"""Differential quadrature for ``E``: control recovery ``u = E y`` from nodal state values.

At an evaluation node ``x_k`` with its ``n_k`` nearest nodes ``x_{k,j}`` the
weights solve the (symmetric) system::

    [Phi  P] [w]   [E Phi(x_k - x_i)]
    [P^T  0] [v] = [E p(x_k)       ]

so that ``sum_j w_j f(x_{k,j})`` reproduces ``(E f)(x_k)`` for every kernel
translate on the stencil and for the augmented monomials.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import MissingStateValue, TooFewNodes
from .geometry import NodeSet, knn
from .kernels import Kernel, OperatorSpec, OpTag, PolyBasis, kernel_matrix, poly_matrix, reconstruction_row
from .linalg import Precision, as_float, batch_solve


@dataclass
class DqWeights:
    """Weights for the nodes ``rows``; ``neighbors[r]`` are the nodes that ``weights[r]`` multiply."""

    rows: np.ndarray
    neighbors: np.ndarray  # (m, n_k)
    weights: object  # (m, n_k)
    op: OpTag = OpTag.E
    multipliers: object = None  # (m, n_p) polynomial block of the solution

    def apply(self, values):
        prec = Precision.of(self.weights)
        return (self.weights * prec.asarray(values)[self.neighbors]).sum(axis=1)


def dq_system(nodes: NodeSet, kernel: Kernel, poly: PolyBasis, neighbors: np.ndarray,
              precision=Precision.DOUBLE):
    """Stacked ``[[Phi, P], [P^T, 0]]`` matrices for the neighbour sets (shape ``(m, N, N)``)."""
    precision = Precision.parse(precision)
    pts = nodes.points[neighbors]
    nk, npoly = neighbors.shape[1], poly.n_p
    A = precision.zeros((len(neighbors), nk + npoly, nk + npoly))
    A[:, :nk, :nk] = kernel_matrix(OpTag.IDENTITY, OperatorSpec(), kernel, pts, pts, precision)
    if npoly:
        P = poly_matrix(OpTag.IDENTITY, OperatorSpec(), poly, pts, precision)
        A[:, :nk, nk:] = P
        A[:, nk:, :nk] = P.swapaxes(-1, -2)
    return A


def _interior_knn(nodes: NodeSet, rows: np.ndarray, k: int) -> np.ndarray:
    if k > nodes.n_interior:
        raise TooFewNodes(f"stencil of {k} requested from {nodes.n_interior} interior nodes")
    pool = np.arange(nodes.n_boundary, nodes.n)
    _, idx = cKDTree(nodes.interior).query(nodes.points[rows], k=k)
    return pool[np.asarray(idx).reshape(len(rows), k)]


def dq_weights(nodes: NodeSet, kernel: Kernel, poly: PolyBasis, spec: OperatorSpec, rows=None,
               n_k: int = 50, precision=Precision.DOUBLE, op: OpTag = OpTag.E,
               neighbors: str = "all") -> DqWeights:
    """Weights of ``op`` at ``rows`` (default: every interior node) from the ``n_k`` nearest nodes.

    ``neighbors="all"`` draws the stencil from every node (boundary values then
    come from the Dirichlet data); ``"interior"`` restricts it to interior nodes.
    """
    precision = Precision.parse(precision)
    rows = np.arange(nodes.n_boundary, nodes.n) if rows is None else np.atleast_1d(np.asarray(rows, dtype=np.int64))
    if neighbors == "all":
        neighbors = knn(nodes, rows, n_k)
    elif neighbors == "interior":
        neighbors = _interior_knn(nodes, rows, n_k)
    else:
        raise ValueError(f"neighbors must be 'all' or 'interior', got {neighbors!r}")
    A = dq_system(nodes, kernel, poly, neighbors, precision)
    pts = nodes.points[neighbors]
    rhs = reconstruction_row(op, spec, kernel, poly, nodes.points[rows], pts, precision)
    # A is symmetric, so the transposed weight system is A itself
    sol = batch_solve(A, rhs)
    return DqWeights(rows, neighbors, sol[:, :n_k], op, sol[:, n_k:])


def recover_control_dq(nodes: NodeSet, weights: DqWeights, y):
    """``u = E y`` at the weight rows (interior), ``u = 0`` on the boundary."""
    if len(y) != nodes.n:
        raise MissingStateValue(f"state given at {len(y)} of {nodes.n} nodes")
    yf = as_float(y)
    used = np.unique(weights.neighbors)
    if np.any(~np.isfinite(yf[used])):
        bad = used[~np.isfinite(yf[used])][0]
        raise MissingStateValue(f"state value at node {bad} is missing")
    prec = Precision.of(y)
    u = prec.zeros(nodes.n)
    u[weights.rows] = weights.apply(y)
    u[: nodes.n_boundary] = prec.zeros(nodes.n_boundary)
    return u


def control_dq(nodes: NodeSet, kernel: Kernel, poly: PolyBasis, spec: OperatorSpec, y, n_k: int = 50,
               precision=Precision.DOUBLE, neighbors: str = "all"):
    """Weights plus recovery in one call; returns ``(u, seconds)``."""
    t0 = time.perf_counter()
    w = dq_weights(nodes, kernel, poly, spec, n_k=n_k, precision=precision, neighbors=neighbors)
    return recover_control_dq(nodes, w, y), time.perf_counter() - t0
