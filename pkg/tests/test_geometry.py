import io

import numpy as np
import pytest

from rbfcontrol.errors import InvalidLayout, TooFewNodes
from rbfcontrol.geometry import (
    NodeSet,
    build_stencil,
    build_stencils,
    fill_distance,
    generate_nodes,
    knn,
    make_nodeset,
    order_stencil,
    perimeter_points,
)


def test_grid_nine(grid9):
    assert grid9.n == 9 and grid9.n_boundary == 8
    assert np.array_equal(grid9.interior, [[0.5, 0.5]])
    assert list(grid9.bc_tags[:8]) == list("DEDEDEDE")
    assert list(grid9.centers) == [8]


def test_halton_622(nodes622):
    assert nodes622.n == 622
    assert nodes622.n_boundary == 96
    assert nodes622.n_interior == 526
    b = nodes622.boundary
    on_edge = np.any((b == 0.0) | (b == 1.0), axis=1)
    assert on_edge.all()
    assert {tuple(p) for p in [(0, 0), (1, 0), (1, 1), (0, 1)]} <= {tuple(p) for p in b}
    assert len(nodes622.centers) == 526


def test_layout_is_deterministic():
    a, b = generate_nodes(300, seed=3), generate_nodes(300, seed=3)
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, generate_nodes(300, seed=4).points)


def test_perimeter_counter_clockwise():
    p = perimeter_points(2)
    assert np.array_equal(p, [[0, 0], [0.5, 0], [1, 0], [1, 0.5], [1, 1], [0.5, 1], [0, 1], [0, 0.5]])


@pytest.mark.parametrize("pattern,expect", [("D", "DDDDDDDD"), ("DDE", "DDEDDEDD")])
def test_bc_patterns(pattern, expect):
    nodes = generate_nodes(9, layout="grid", bc_pattern=pattern)
    assert "".join(nodes.bc_tags[:8]) == expect
    assert set(nodes.with_tags("E").bc_tags[:8]) == {"E"}


def test_center_fraction():
    nodes = generate_nodes(200, centers=0.5)
    ni = nodes.n_interior
    assert len(nodes.centers) == int(np.ceil(ni / 2))
    assert nodes.is_center[nodes.n_boundary : nodes.n_boundary + len(nodes.centers)].all()


def test_csv_round_trip_path_and_handle(tmp_path, nodes100):
    path = tmp_path / "n.csv"
    nodes100.to_csv(path)
    back = NodeSet.from_csv(path)
    assert np.array_equal(back.points, nodes100.points)
    assert np.array_equal(back.bc_tags, nodes100.bc_tags)
    assert np.array_equal(back.is_center, nodes100.is_center)
    buf = io.StringIO()
    nodes100.to_csv(buf)
    assert buf.getvalue() == path.read_bytes().decode()
    assert buf.getvalue().splitlines()[0] == "x,y,is_boundary,bc_tag,is_center"


def test_invalid_layouts():
    with pytest.raises(InvalidLayout):
        generate_nodes(4)
    with pytest.raises(InvalidLayout):
        generate_nodes(100, layout="hex")
    with pytest.raises(InvalidLayout):
        make_nodeset([[0, 0], [1, 0]], [[0.5, 0.5]], bc_pattern="DX")
    with pytest.raises(InvalidLayout):
        NodeSet(np.array([[0.5, 0.5], [0, 0]]), 1, ["D", "-"], [False, True])
    with pytest.raises(InvalidLayout):
        NodeSet(np.array([[0, 0], [0.5, 0.5], [1.5, 0.5]]), 1, ["D", "-", "-"], [False, True, True])
    with pytest.raises(InvalidLayout):
        NodeSet(np.array([[0, 0], [0.5, 0.5]]), 1, ["-", "-"], [False, True])


def test_duplicates_are_dropped():
    nodes = make_nodeset([[0, 0], [0, 0], [1, 0], [1, 1]], [[0.5, 0.5], [0.5, 0.5], [0.25, 0.5]])
    assert nodes.n == 5


def test_knn_matches_brute_force(nodes100):
    idx = knn(nodes100, np.arange(nodes100.n), 12)
    for q in range(nodes100.n):
        d2 = np.sum((nodes100.points - nodes100.points[q]) ** 2, axis=1)
        want = np.lexsort((np.arange(nodes100.n), d2))[:12]
        assert np.array_equal(idx[q], want)
    assert np.all(idx[:, 0] == np.arange(nodes100.n))


def test_knn_ties_break_by_index(grid9):
    # the centre of the 3x3 grid has four equidistant edge midpoints
    row = knn(grid9, [8], 5)[0]
    assert row[0] == 8
    assert list(row[1:]) == sorted(row[1:])
    assert set(row[1:]) == {1, 3, 5, 7}


def test_knn_errors(grid9):
    with pytest.raises(TooFewNodes):
        knn(grid9, [8], 10)
    with pytest.raises(TooFewNodes):
        knn(grid9, [8], 0)


def test_stencil_block_order(nodes622):
    for s in build_stencils(nodes622, 50)[::25]:
        m = s.members
        assert m[0] == s.center and s.size == 50
        assert s.n_c + s.n_b1 + s.n_b2 + s.n_i == 50
        tags = nodes622.bc_tags[m]
        assert nodes622.is_center[m[: s.n_c]].all()
        assert (tags[s.n_c : s.n_c + s.n_b1] == "D").all()
        assert (tags[s.n_c + s.n_b1 : s.n_c + s.n_b1 + s.n_b2] == "E").all()
        assert (tags[s.n_c + s.n_b1 + s.n_b2 :] == "-").all()


def test_order_stencil_blocks_with_partial_centers():
    nodes = generate_nodes(100, centers=0.5)
    c = int(nodes.centers[0])
    s = build_stencil(nodes, c, 30)
    assert s.n_i > 0
    assert not nodes.is_center[s.members[-s.n_i :]].any()
    with pytest.raises(ValueError):
        build_stencil(nodes, 0, 10)
    s2 = order_stencil(nodes, c, s.members[::-1])
    assert set(s2.members) == set(s.members) and s2.members[0] == c


def test_fill_distance(grid9, nodes622):
    assert fill_distance(grid9) == pytest.approx(np.sqrt(2) / 4, rel=1e-12)
    h = fill_distance(nodes622)
    assert 0.02 < h < 0.08
    assert fill_distance(nodes622.points) == h
