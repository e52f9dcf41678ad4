"""Local asymmetric method (LAM): per-center local systems, weight rows and the sparse global solve.

State problem ``M y = y_hat`` in the interior with the boundary pair ``y = g``
(D-tagged nodes) and ``E y = 0`` (E-tagged nodes).  Around every center
``x1`` a local interpolant ``y ~ H lam`` is fitted to the stencil data::

    A lam = [Phi P; B Phi  B P; E Phi  E P; M Phi  M P; P^T 0] lam = d

and the interior equation is imposed at the center through the weight row
``w = (M H)(x1) A^-1``.  Gathering ``w . d = y_hat(x1)`` over all centers gives
the sparse system ``S y_c = b`` in the center values.

The control pass reuses the pipeline with ``beta E*`` in place of ``M``,
Dirichlet-zero data on every boundary node and ``y_hat - y`` as interior data.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateStencil, InconsistentLayout, MissingStateValue, SingularMatrix
from .geometry import DIRICHLET, OPERATOR_E, NodeSet, Stencil, build_stencils
from .kernels import Kernel, OperatorSpec, OpTag, PolyBasis, eval_kernel_op, poly_matrix, reconstruction_row
from .linalg import (
    Condition,
    Precision,
    SparseMatrix,
    as_float,
    batch_cond_1,
    batch_inverse,
    batch_matmul,
    batch_solve,
    sparse_solve,
)

logger = logging.getLogger(__name__)

# row kinds of a local system, in block order
ROW_CENTER, ROW_DIRICHLET, ROW_OPERATOR_E, ROW_INTERIOR, ROW_POLY = range(5)

STATE, CONTROL = "state", "control"

DEGENERATE_TOL = 1e-14 * math.sqrt(2.0)


def _row_ops(mode):
    if mode == STATE:
        return {ROW_CENTER: OpTag.IDENTITY, ROW_DIRICHLET: OpTag.DIRICHLET,
                ROW_OPERATOR_E: OpTag.E, ROW_INTERIOR: OpTag.M}
    if mode == CONTROL:
        return {ROW_CENTER: OpTag.IDENTITY, ROW_DIRICHLET: OpTag.DIRICHLET,
                ROW_INTERIOR: OpTag.BETA_ESTAR}
    raise ValueError(f"unknown mode {mode!r}")


def center_operator(mode) -> OpTag:
    return OpTag.M if mode == STATE else OpTag.BETA_ESTAR


@dataclass
class LocalBatch:
    """Local systems of a set of equally sized stencils, stacked along axis 0."""

    nodes: NodeSet
    stencils: list
    members: np.ndarray  # (n_c, n_local) node ids in block order
    kinds: np.ndarray  # (n_c, n_local + n_p) row kinds
    A: object  # (n_c, N, N)
    kernel: Kernel
    poly: PolyBasis
    spec: OperatorSpec
    mode: str
    precision: Precision

    @property
    def n_centers(self) -> int:
        return self.members.shape[0]

    @property
    def size(self) -> int:
        return self.kinds.shape[1]

    def __getitem__(self, k) -> LocalSystem:
        return LocalSystem(self.stencils[k], self.members[k], self.kinds[k], self.A[k], self.mode)


@dataclass
class LocalSystem:
    stencil: Stencil
    members: np.ndarray
    kinds: np.ndarray
    A: object
    mode: str
    kappa: float | None = None

    @property
    def block_sizes(self) -> tuple:
        return tuple(int(np.sum(self.kinds == r)) for r in range(5))


@dataclass
class WeightRows:
    """Weight rows ``(op H)(x1) A^-1`` for every center; ``kappa`` is per-center cond_1."""

    centers: np.ndarray
    weights: object  # (n_c, N)
    op: OpTag
    kappa: np.ndarray | None = None
    preconditioned: bool = False

    @property
    def kappa_max(self) -> float:
        return float(np.max(self.kappa)) if self.kappa is not None and self.kappa.size else float("nan")


@dataclass
class GlobalSparse:
    S: SparseMatrix
    b: object
    centers: np.ndarray
    kappa: Condition | None = None


@dataclass
class LamResult:
    """Field at every node plus diagnostics of one LAM pass."""

    values: object  # length n: solved centers, data elsewhere, reconstruction at non-center interior
    centers: np.ndarray
    kappa: float  # max_k cond_1 of the local (or preconditioned local) systems
    kappa_S: Condition | None
    timings: dict = field(default_factory=dict)
    preconditioned: bool = False


def _row_kinds(nodes: NodeSet, members: np.ndarray, mode: str, n_p: int) -> np.ndarray:
    tags = nodes.bc_tags[members]
    kinds = np.full(members.shape, ROW_INTERIOR, dtype=np.int8)
    if mode == STATE:
        kinds[tags == DIRICHLET] = ROW_DIRICHLET
        kinds[tags == OPERATOR_E] = ROW_OPERATOR_E
    else:
        kinds[(tags == DIRICHLET) | (tags == OPERATOR_E)] = ROW_DIRICHLET
    kinds[nodes.is_center[members]] = ROW_CENTER
    poly = np.full(members.shape[:-1] + (n_p,), ROW_POLY, dtype=np.int8)
    return np.concatenate([kinds, poly], axis=-1)


def _check_degenerate(pts: np.ndarray, centers):
    diff = pts[:, :, None, :] - pts[:, None, :, :]
    d2 = np.einsum("kijx,kijx->kij", diff, diff)
    idx = np.arange(pts.shape[1])
    d2[:, idx, idx] = np.inf
    dmin = np.sqrt(d2.min(axis=(1, 2)))
    bad = np.flatnonzero(dmin < DEGENERATE_TOL)
    if bad.size:
        raise DegenerateStencil(f"stencil of center {centers[bad[0]]} has coincident nodes")


def local_systems(nodes: NodeSet, stencils, kernel: Kernel, poly: PolyBasis, spec: OperatorSpec,
                  mode: str = STATE, precision=Precision.DOUBLE) -> LocalBatch:
    """Assemble ``A`` for every stencil (all stencils must have the same size)."""
    precision = Precision.parse(precision)
    stencils = list(stencils)
    if not stencils:
        raise InconsistentLayout("no stencils")
    sizes = {s.size for s in stencils}
    if len(sizes) != 1:
        raise InconsistentLayout(f"stencils differ in size: {sorted(sizes)}")
    if mode == CONTROL and any(s.n_b2 for s in stencils) and np.any(nodes.bc_tags == OPERATOR_E):
        logger.debug("control pass treats every boundary node as Dirichlet")
    members = np.array([s.members for s in stencils], dtype=np.int64)
    pts = nodes.points[members]
    _check_degenerate(pts, members[:, 0])
    nl, npoly = members.shape[1], poly.n_p
    N = nl + npoly
    kinds = _row_kinds(nodes, members, mode, npoly)

    A = precision.zeros((len(stencils), N, N))
    for kind, op in _row_ops(mode).items():
        b, r = np.nonzero(kinds[:, :nl] == kind)
        if b.size == 0:
            continue
        xr = pts[b, r]
        A[b, r, :nl] = eval_kernel_op(op, spec, kernel, xr[:, None, :], pts[b], precision)
        if npoly:
            A[b, r, nl:] = poly_matrix(op, spec, poly, xr, precision)
    if npoly:
        P = poly_matrix(OpTag.IDENTITY, spec, poly, pts, precision)  # (n_c, nl, n_p)
        A[:, nl:, :nl] = P.swapaxes(-1, -2)
    return LocalBatch(nodes, stencils, members, kinds, A, kernel, poly, spec, mode, precision)


def assemble_local(nodes: NodeSet, stencil: Stencil, kernel: Kernel, poly: PolyBasis, spec: OperatorSpec,
                   mode: str = STATE, precision=Precision.DOUBLE) -> LocalSystem:
    return local_systems(nodes, [stencil], kernel, poly, spec, mode, precision)[0]


def _check_finite(w, centers):
    bad = np.flatnonzero(~np.all(np.isfinite(as_float(w)), axis=1))
    if bad.size:
        raise SingularMatrix(f"local system of center {centers[bad[0]]} is numerically singular",
                             index=int(bad[0]))
    return w


def _in(precision: Precision, x):
    return x if precision is Precision.EXTENDED else as_float(x)


def _rhs_rows(batch: LocalBatch, op: OpTag, kernel: Kernel | None = None):
    pts = batch.nodes.points[batch.members]
    return reconstruction_row(op, batch.spec, kernel or batch.kernel, batch.poly, pts[:, 0], pts, batch.precision)


def weight_rows(batch: LocalBatch, op: OpTag | None = None, precond=None, condition: bool = True) -> WeightRows:
    """Solve ``A^T w^T = (op H)(x1)^T`` for every center.

    ``precond`` may be ``None``/``False`` (plain), ``True`` (shape ``c`` perturbed
    by the 0.001 rule) or an explicit perturbed shape parameter.  In
    preconditioned mode ``P = A+^-1`` is built on the same stencil with the
    perturbed shape, the weights come from ``(PA)^T v^T = h^T, w = v P`` and the
    recorded condition numbers are those of ``PA``.  The products with ``P``
    are exactly rounded, which keeps the preconditioned path backward stable.
    """
    op = op or center_operator(batch.mode)
    h = _rhs_rows(batch, op)
    centers = batch.members[:, 0]
    if not precond:
        A = batch.A
        w = _check_finite(batch_solve(A.swapaxes(-1, -2), h), centers)
        kappa = batch_cond_1(A) if condition else None
        return WeightRows(centers, w, op, kappa, False)

    kplus = batch.kernel.perturbed() if precond is True else Kernel(precond)
    plus = local_systems(batch.nodes, batch.stencils, kplus, batch.poly, batch.spec, batch.mode, batch.precision)
    P = batch_inverse(plus.A)
    # both products cancel by about cond(A+); round them once from the exact value
    PA = _in(batch.precision, batch_matmul(P, batch.A, exact=True))
    v = batch_solve(PA.swapaxes(-1, -2), h)
    w = _in(batch.precision, batch_matmul(v[:, None, :], P, exact=True)[:, 0, :])
    w = _check_finite(w, centers)
    kappa = batch_cond_1(PA) if condition else None
    return WeightRows(centers, w, op, kappa, True)


def weight_row(ls: LocalSystem, nodes: NodeSet, kernel: Kernel, poly: PolyBasis, spec: OperatorSpec,
               op: OpTag | None = None, precond=None, precision=None):
    """Single-stencil convenience wrapper around :func:`weight_rows`."""
    precision = Precision.of(ls.A) if precision is None else Precision.parse(precision)
    batch = local_systems(nodes, [ls.stencil], kernel, poly, spec, ls.mode, precision)
    wr = weight_rows(batch, op, precond)
    ls.kappa = float(wr.kappa[0])
    return wr.weights[0]


def assemble_global(batch: LocalBatch, wr: WeightRows, known, rhs) -> GlobalSparse:
    """Gather ``S y_c = b`` from the weight rows.

    ``known`` holds, at every node, the datum its local row carries (``g`` or 0 at
    the boundary, interior data elsewhere); entries at centers are ignored.
    ``rhs`` holds the interior data at the centers.
    """
    nodes = batch.nodes
    nl = batch.members.shape[1]
    centers = batch.members[:, 0]
    if wr.weights.shape[0] != batch.n_centers or wr.weights.shape[1] != batch.size:
        raise InconsistentLayout("weight rows do not match the local systems")
    if not np.array_equal(wr.centers, centers):
        raise InconsistentLayout("weight rows belong to different centers")
    if len(known) != nodes.n or len(rhs) != nodes.n:
        raise InconsistentLayout("data must be given at every node")
    col_of = np.full(nodes.n, -1, dtype=np.int64)
    col_of[centers] = np.arange(len(centers))

    w = wr.weights[:, :nl]
    is_c = batch.kinds[:, :nl] == ROW_CENTER
    cols = col_of[batch.members]
    if np.any(cols[is_c] < 0):
        raise InconsistentLayout("stencil references a center without its own row")
    k, j = np.nonzero(is_c)
    S = SparseMatrix.from_triplets(k, cols[k, j], w[k, j], (len(centers), len(centers)))

    prec = batch.precision
    known = prec.asarray(known)
    rhs = prec.asarray(rhs)
    d = known[batch.members]
    d = d * prec.asarray((~is_c).astype(np.float64))
    b = rhs[centers] - (w * d).sum(axis=1)
    return GlobalSparse(S, b, centers)


def _reconstruct(batch: LocalBatch, values, targets: np.ndarray):
    """Local interpolant of the nearest center's stencil evaluated at ``targets``.

    ``values`` is the full nodal data vector (center values solved, others known).
    """
    nodes = batch.nodes
    prec = batch.precision
    if targets.size == 0:
        return prec.zeros(0)
    centers = batch.members[:, 0]
    near = np.argmin(((nodes.points[targets][:, None, :] - nodes.points[centers][None, :, :]) ** 2).sum(-1), axis=1)
    A = batch.A[near]
    pts = nodes.points[batch.members[near]]
    h = reconstruction_row(OpTag.IDENTITY, batch.spec, batch.kernel, batch.poly,
                           nodes.points[targets], pts, prec)
    nl = batch.members.shape[1]
    d = prec.zeros((len(targets), batch.size))
    d[:, :nl] = prec.asarray(values)[batch.members[near]]
    lam = batch_solve(A, d)
    return (h * lam).sum(axis=1)


def _solve_pass(nodes, kernel, poly, spec, mode, known, rhs, n_local, precision, precond, stencils=None):
    precision = Precision.parse(precision)
    timings = {}
    t0 = time.perf_counter()
    stencils = build_stencils(nodes, n_local) if stencils is None else stencils
    batch = local_systems(nodes, stencils, kernel, poly, spec, mode, precision)
    wr = weight_rows(batch, precond=precond)
    t1 = time.perf_counter()
    timings["weights"] = t1 - t0
    g = assemble_global(batch, wr, known, rhs)
    t2 = time.perf_counter()
    timings["assembly"] = t2 - t1
    yc = sparse_solve(g.S, g.b)
    g.kappa = g.S.cond_1()
    t3 = time.perf_counter()
    timings["solve"] = t3 - t2

    values = precision.asarray(known).copy()
    values[g.centers] = yc
    others = np.flatnonzero((nodes.bc_tags == "-") & ~nodes.is_center)
    if others.size:
        values[others] = _reconstruct(batch, values, others)
    timings["reconstruct"] = time.perf_counter() - t3
    return LamResult(values, g.centers, wr.kappa_max, g.kappa, timings, bool(precond))


def solve_state(nodes: NodeSet, kernel: Kernel, poly: PolyBasis, spec: OperatorSpec, problem,
                n_local: int = 50, precision=Precision.DOUBLE, precond=None) -> LamResult:
    """LAM state solve; boundary values are the Dirichlet data ``g``."""
    precision = Precision.parse(precision)
    pts = nodes.points
    nb = nodes.n_boundary
    g = problem.boundary(pts[:nb], precision)
    yhat = problem.target(pts, precision)
    known = yhat.copy()
    known[:nb] = g * precision.asarray((nodes.bc_tags[:nb] == DIRICHLET).astype(np.float64))
    res = _solve_pass(nodes, kernel, poly, spec, STATE, known, yhat, n_local, precision, precond)
    res.values[:nb] = g
    return res


def solve_control_lam(nodes: NodeSet, kernel: Kernel, poly: PolyBasis, spec: OperatorSpec, y, problem,
                      n_local: int = 50, precision=Precision.DOUBLE, precond=None) -> LamResult:
    """Second LAM pass for ``beta E* u = y_hat - y`` with ``u = 0`` on the boundary.

    ``y`` must be given at every node (only interior entries are used).
    """
    precision = Precision.parse(precision)
    if len(y) != nodes.n:
        raise MissingStateValue("state must be known at every node")
    if np.any(~np.isfinite(as_float(y)[nodes.n_boundary:])):
        raise MissingStateValue("state has missing interior values")
    dnodes = nodes.with_tags(DIRICHLET)
    data = problem.target(nodes.points, precision) - precision.asarray(y)
    data[: nodes.n_boundary] = precision.zeros(nodes.n_boundary)
    return _solve_pass(dnodes, kernel, poly, spec, CONTROL, data, data, n_local, precision, precond)


__all__ = [
    "CONTROL",
    "STATE",
    "GlobalSparse",
    "LamResult",
    "LocalBatch",
    "LocalSystem",
    "WeightRows",
    "assemble_global",
    "assemble_local",
    "center_operator",
    "local_systems",
    "solve_control_lam",
    "solve_state",
    "weight_row",
    "weight_rows",
]
