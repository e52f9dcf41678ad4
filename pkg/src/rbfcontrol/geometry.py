"""Node sets on the unit square, boundary tags and k-nearest stencils."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .errors import InvalidLayout, TooFewNodes

DIRICHLET = "D"
OPERATOR_E = "E"
INTERIOR = "-"


@dataclass(frozen=True, eq=False)
class NodeSet:
    """Scattered nodes in [0,1]^2; the first ``n_boundary`` lie on the boundary.

    ``bc_tags[i]`` is ``"D"`` (y = g) or ``"E"`` (E y = 0) for boundary nodes and
    ``"-"`` for interior ones.  ``is_center`` flags the interior nodes whose
    values are the unknowns of the local method.
    """

    points: np.ndarray
    n_boundary: int
    bc_tags: np.ndarray
    is_center: np.ndarray
    _tree: cKDTree | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "bc_tags", np.asarray(self.bc_tags, dtype="<U1"))
        object.__setattr__(self, "is_center", np.asarray(self.is_center, dtype=bool))
        pts.setflags(write=False)
        self.validate()

    def validate(self):
        n, nb = self.n, self.n_boundary
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise InvalidLayout("points must be an (n, 2) array")
        if not 0 < nb < n:
            raise InvalidLayout(f"need 0 < n_boundary < n, got {nb} of {n}")
        if np.any(self.points < 0.0) or np.any(self.points > 1.0):
            raise InvalidLayout("points must lie in the unit square")
        on_edge = np.any((self.points == 0.0) | (self.points == 1.0), axis=1)
        if not np.all(on_edge[:nb]) or np.any(on_edge[nb:]):
            raise InvalidLayout("boundary nodes must come first and interior nodes be strictly inside")
        if not np.all(np.isin(self.bc_tags[:nb], [DIRICHLET, OPERATOR_E])):
            raise InvalidLayout("every boundary node needs a D or E tag")
        if np.any(self.bc_tags[nb:] != INTERIOR) or np.any(self.is_center[:nb]):
            raise InvalidLayout("interior nodes carry no tag; only interior nodes are centers")
        if n > 1 and self.tree.query(self.points, k=2)[0][:, 1].min() <= 0.0:
            raise InvalidLayout("duplicate nodes")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def n_interior(self) -> int:
        return self.n - self.n_boundary

    @property
    def boundary(self) -> np.ndarray:
        return self.points[: self.n_boundary]

    @property
    def interior(self) -> np.ndarray:
        return self.points[self.n_boundary :]

    @property
    def centers(self) -> np.ndarray:
        return np.flatnonzero(self.is_center)

    @property
    def tree(self) -> cKDTree:
        if self._tree is None:
            object.__setattr__(self, "_tree", cKDTree(self.points))
        return self._tree

    def with_tags(self, tag: str) -> NodeSet:
        """Copy with every boundary node carrying ``tag``."""
        tags = self.bc_tags.copy()
        tags[: self.n_boundary] = tag
        return replace(self, bc_tags=tags, _tree=self._tree)

    # -- CSV ---------------------------------------------------------------
    def to_csv(self, target):
        """Write to a path or an open text handle."""
        if hasattr(target, "write"):
            self._write_csv(target)
        else:
            with open(target, "w", newline="") as fh:
                self._write_csv(fh)

    def _write_csv(self, fh):
        w = csv.writer(fh)
        w.writerow(["x", "y", "is_boundary", "bc_tag", "is_center"])
        for i, (x, y) in enumerate(self.points):
            w.writerow([repr(float(x)), repr(float(y)), int(i < self.n_boundary),
                        self.bc_tags[i], int(self.is_center[i])])

    @classmethod
    def from_csv(cls, path) -> NodeSet:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        pts = np.array([[float(r["x"]), float(r["y"])] for r in rows])
        isb = np.array([int(r["is_boundary"]) for r in rows], dtype=bool)
        nb = int(isb.sum())
        if not np.all(isb[:nb]):
            raise InvalidLayout("boundary rows must precede interior rows")
        return cls(pts, nb, [r["bc_tag"] for r in rows], [int(r["is_center"]) for r in rows])


def perimeter_points(per_side: int) -> np.ndarray:
    """Equispaced counter-clockwise perimeter traversal starting at the origin, corners included."""
    t = np.arange(per_side) / per_side
    zero, one = np.zeros(per_side), np.ones(per_side)
    sides = [
        np.column_stack([t, zero]),
        np.column_stack([one, t]),
        np.column_stack([1.0 - t, one]),
        np.column_stack([zero, 1.0 - t]),
    ]
    return np.vstack(sides)


def make_nodeset(boundary, interior, bc_pattern="DE", centers="all") -> NodeSet:
    """Assemble a NodeSet, dropping repeated points (first occurrence wins).

    ``bc_pattern`` is repeated along the boundary order ("DE" alternates,
    "D" is all-Dirichlet, "DDE" is a 2:1 ratio).  ``centers`` is ``"all"`` or a
    fraction of the interior nodes (taken in the given order).
    """
    boundary = _dedupe(np.asarray(boundary, dtype=np.float64).reshape(-1, 2))
    interior = _dedupe(np.asarray(interior, dtype=np.float64).reshape(-1, 2))
    if not bc_pattern or set(bc_pattern) - {DIRICHLET, OPERATOR_E}:
        raise InvalidLayout(f"bad boundary pattern {bc_pattern!r}")
    nb, ni = len(boundary), len(interior)
    tags = np.array([bc_pattern[i % len(bc_pattern)] for i in range(nb)] + [INTERIOR] * ni)
    if centers == "all":
        n_centers = ni
    else:
        frac = float(centers)
        if not 0.0 < frac <= 1.0:
            raise InvalidLayout("center fraction must lie in (0, 1]")
        n_centers = max(1, math.ceil(frac * ni))
    is_center = np.zeros(nb + ni, dtype=bool)
    is_center[nb : nb + n_centers] = True
    return NodeSet(np.vstack([boundary, interior]), nb, tags, is_center)


def _dedupe(points):
    if len(points) < 2:
        return points
    _, first = np.unique(points, axis=0, return_index=True)
    return points[np.sort(first)]


def generate_nodes(
    n_target: int,
    layout: str = "halton",
    boundary_spacing: float | str = "auto",
    bc_pattern: str = "DE",
    seed: int = 0,
    centers="all",
) -> NodeSet:
    """Quasi-uniform nodes on [0,1]^2.

    ``grid`` gives an m x m tensor grid with m = round(sqrt(n_target)).
    ``halton`` puts ``4 (round(sqrt(n_target)) - 1)`` equispaced nodes on the
    perimeter (unless ``boundary_spacing`` is given) and fills the interior
    from the Halton(2, 3) sequence, starting at index ``1 + seed`` and rejecting
    points closer than half the boundary spacing to the boundary.
    """
    if n_target < 9:
        raise InvalidLayout("n_target must be at least 9")
    m = int(round(math.sqrt(n_target)))
    if layout == "grid":
        g = np.linspace(0.0, 1.0, m)
        xx, yy = np.meshgrid(g[1:-1], g[1:-1])
        interior = np.column_stack([xx.ravel(), yy.ravel()])
        return make_nodeset(perimeter_points(m - 1), interior, bc_pattern, centers)
    if layout != "halton":
        raise InvalidLayout(f"unknown layout {layout!r}")
    if boundary_spacing == "auto":
        per_side = max(2, m - 1)
    else:
        per_side = max(2, int(round(1.0 / float(boundary_spacing))))
    boundary = perimeter_points(per_side)
    need = n_target - len(boundary)
    if need < 1:
        raise InvalidLayout("boundary spacing leaves no room for interior nodes")
    margin = 0.5 / per_side
    engine = qmc.Halton(d=2, scramble=False)
    engine.fast_forward(1 + int(seed))
    chunks, have = [], 0
    while have < need:
        cand = engine.random(2 * (need - have) + 16)
        keep = np.all((cand >= margin) & (cand <= 1.0 - margin), axis=1)
        chunks.append(cand[keep])
        have += int(keep.sum())
    interior = np.vstack(chunks)[:need]
    return make_nodeset(boundary, interior, bc_pattern, centers)


@dataclass(frozen=True)
class Stencil:
    """Neighbourhood of one center, ordered centers | D-boundary | E-boundary | other interior."""

    center: int
    members: np.ndarray
    n_c: int
    n_b1: int
    n_b2: int
    n_i: int

    @property
    def size(self) -> int:
        return len(self.members)


def knn(nodes: NodeSet, query: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest nodes to each query node, ties broken by node index."""
    query = np.atleast_1d(np.asarray(query, dtype=np.int64))
    if k > nodes.n:
        raise TooFewNodes(f"stencil of {k} requested from {nodes.n} nodes")
    if k < 1:
        raise TooFewNodes("stencil size must be positive")
    pts = nodes.points
    extra = min(nodes.n, k + 8)
    _, cand = nodes.tree.query(pts[query], k=extra)
    cand = np.asarray(cand).reshape(len(query), extra)
    out = np.empty((len(query), k), dtype=np.int64)
    for r, q in enumerate(query):
        c = cand[r]
        d2 = np.sum((pts[c] - pts[q]) ** 2, axis=1)
        order = np.lexsort((c, d2))
        if extra < nodes.n and d2[order[k - 1]] >= d2.max():
            c = np.arange(nodes.n)  # ties reach past the candidate list
            d2 = np.sum((pts - pts[q]) ** 2, axis=1)
            order = np.lexsort((c, d2))
        out[r] = c[order[:k]]
    return out


def order_stencil(nodes: NodeSet, center: int, members: np.ndarray) -> Stencil:
    members = np.asarray(members, dtype=np.int64)
    rest = members[members != center]
    tags = nodes.bc_tags[rest]
    is_c = nodes.is_center[rest]
    blocks = [
        rest[is_c],
        rest[tags == DIRICHLET],
        rest[tags == OPERATOR_E],
        rest[(tags == INTERIOR) & ~is_c],
    ]
    ordered = np.concatenate([[center], *blocks]).astype(np.int64)
    return Stencil(center, ordered, 1 + len(blocks[0]), len(blocks[1]), len(blocks[2]), len(blocks[3]))


def build_stencil(nodes: NodeSet, center: int, n_local: int) -> Stencil:
    if not nodes.is_center[center]:
        raise ValueError(f"node {center} is not a center")
    return order_stencil(nodes, center, knn(nodes, [center], n_local)[0])


def build_stencils(nodes: NodeSet, n_local: int, centers=None) -> list[Stencil]:
    centers = nodes.centers if centers is None else np.asarray(centers)
    if not np.all(nodes.is_center[centers]):
        raise ValueError("stencils can only be built around centers")
    neigh = knn(nodes, centers, n_local)
    return [order_stencil(nodes, int(c), row) for c, row in zip(centers, neigh)]


def fill_distance(nodes, probe: int = 200) -> float:
    """Largest distance from a (probe+1)^2 grid on the square to its nearest node.

    Accepts a NodeSet or any (n, 2) point array.
    """
    tree = nodes.tree if isinstance(nodes, NodeSet) else cKDTree(np.asarray(nodes, dtype=float).reshape(-1, 2))
    g = np.linspace(0.0, 1.0, probe + 1)
    xx, yy = np.meshgrid(g, g)
    d, _ = tree.query(np.column_stack([xx.ravel(), yy.ravel()]))
    return float(d.max())
