import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lswg.mesh import (
    GAMMA1,
    GAMMA2,
    INTERIOR,
    MESH_KINDS,
    MeshError,
    build_mesh,
    generate,
    generate_figure_pattern,
    generate_uniform_triangular,
    is_convex,
    read_mesh,
    signed_area,
    tag_boundary,
    write_mesh,
)


def brute_force_edges(cells):
    """Undirected edge set and per-edge incidence count, straight from the cell lists."""
    count = {}
    for ids in cells:
        for a, b in zip(ids, ids[1:] + ids[:1]):
            key = frozenset((a, b))
            count[key] = count.get(key, 0) + 1
    return count


def test_uniform_n1_counts():
    mesh = generate_uniform_triangular(1)
    assert (mesh.n_cells, mesh.n_edges, mesh.n_vertices) == (2, 5, 4)


def test_uniform_n2_area():
    mesh = generate_uniform_triangular(2)
    assert mesh.n_cells == 8
    assert mesh.areas.sum() == pytest.approx(1.0, abs=1e-12)


def test_uniform_n4_edge_counts_match_brute_force():
    mesh = generate_uniform_triangular(4)
    count = brute_force_edges([list(c) for c in mesh.cells])
    n_boundary = sum(1 for v in count.values() if v == 1)
    n_interior = sum(1 for v in count.values() if v == 2)
    assert (n_boundary, n_interior) == (16, 40)
    assert len(mesh.boundary_edges) == n_boundary
    assert len(mesh.interior_edges) == n_interior


def test_pentagon_n1_cells_are_nonconvex_pentagons():
    mesh = generate_figure_pattern(1, "pentagon")
    assert mesh.n_cells == 2
    for c in range(2):
        xy = mesh.cell_vertices(c)
        assert len(xy) == 5
        assert not is_convex(xy)
        assert mesh.areas[c] == pytest.approx(0.5, abs=1e-14)


def test_tri_figure_n1_layout():
    mesh = generate_figure_pattern(1, "tri_figure")
    assert mesh.n_cells == 4
    shapes = sorted(
        (len(mesh.cells[c]), sorted(map(tuple, np.round(mesh.cell_vertices(c), 12).tolist()))) for c in range(4)
    )
    triangles = [s[1] for s in shapes if s[0] == 3]
    assert sorted(triangles) == sorted([[(0.0, 0.0), (0.0, 1.0), (0.25, 0.75)], [(0.75, 0.25), (1.0, 0.0), (1.0, 1.0)]])
    assert [s[0] for s in shapes] == [3, 3, 4, 4]
    assert mesh.areas.sum() == pytest.approx(1.0, abs=1e-14)


def test_pentagon_n2_area():
    mesh = generate("pentagon", 2)
    assert mesh.n_cells == 8
    assert mesh.areas.sum() == pytest.approx(1.0, abs=1e-12)


def test_default_tags_uniform_n2():
    mesh = generate_uniform_triangular(2)
    mids = mesh.midpoints()
    gamma2 = np.flatnonzero(mesh.edge_tags == GAMMA2)
    gamma1 = np.flatnonzero(mesh.edge_tags == GAMMA1)
    assert len(gamma2) == 2 and np.allclose(mids[gamma2, 0], 0.0)
    assert len(gamma1) == 6
    assert np.all(mesh.edge_tags[mesh.interior_edges] == INTERIOR)


def test_tag_predicates():
    mesh = generate_uniform_triangular(2)
    all_one = tag_boundary(mesh, lambda mid: False)
    assert np.all(all_one.edge_tags[mesh.boundary_edges] == GAMMA1)
    with pytest.raises(MeshError):
        tag_boundary(mesh, lambda mid: True)


def test_round_trip_uniform_n1():
    mesh = generate_uniform_triangular(1)
    back = read_mesh(write_mesh(mesh))
    assert np.array_equal(back.vertices, mesh.vertices)
    assert back.cells == mesh.cells
    assert np.array_equal(back.edges, mesh.edges)
    assert np.array_equal(back.edge_tags, mesh.edge_tags)


def test_round_trip_pentagon_keeps_nonconvex_flag():
    mesh = generate_figure_pattern(1, "pentagon")
    back = read_mesh(write_mesh(mesh))
    assert [is_convex(back.cell_vertices(c)) for c in range(back.n_cells)] == [False, False]


def test_clockwise_cell_rejected():
    text = "3 1 3\n0 0\n0 1\n1 0\n3 0 1 2\n0 1 1\n1 2 1\n2 0 1\n"
    with pytest.raises(MeshError, match="counterclockwise"):
        read_mesh(text)


@pytest.mark.parametrize(
    "text",
    [
        "",
        "x y z\n",
        "3 1 3\n0 0\n1 0\n",
        "3 1 3\n0 0\n1 0\n0 1\n3 0 1 2\n0 1 1\n1 2 1\n0 2 5\n",
        "3 1 2\n0 0\n1 0\n0 1\n3 0 1 2\n0 1 1\n1 2 1\n",
    ],
)
def test_malformed_files(text):
    with pytest.raises(MeshError):
        read_mesh(text)


def test_build_mesh_validation():
    with pytest.raises(MeshError, match="self-intersecting"):
        build_mesh([[0, 0], [2, 0], [0, 1], [1, 1]], [[0, 1, 2, 3]])
    with pytest.raises(MeshError):
        build_mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 5]])


def test_reversed_edge_orientation_is_kept():
    mesh = generate_uniform_triangular(1)
    e = int(mesh.interior_edges[0])
    edges = mesh.edges.copy()
    edges[e] = edges[e, ::-1]
    flipped = build_mesh(mesh.vertices, mesh.cells, edges, mesh.edge_tags)
    assert np.allclose(flipped.normals[e], -mesh.normals[e])
    for c in range(mesh.n_cells):
        if e in mesh.cell_edges[c]:
            assert flipped.cell_sign(c, e) == -mesh.cell_sign(c, e)


@given(kind=st.sampled_from(MESH_KINDS), n=st.integers(1, 6))
def test_generated_mesh_invariants(kind, n):
    mesh = generate(kind, n)
    assert mesh.areas.sum() == pytest.approx(1.0, abs=1e-10)
    assert all(signed_area(mesh.cell_vertices(c)) > 0 for c in range(mesh.n_cells))
    # incidence and opposite signs on interior edges
    signs = {}
    for c in range(mesh.n_cells):
        for e, s in zip(mesh.cell_edges[c], mesh.cell_signs[c]):
            signs.setdefault(int(e), []).append(int(s))
    for e in range(mesh.n_edges):
        if e in set(mesh.interior_edges.tolist()):
            assert sorted(signs[e]) == [-1, 1]
        else:
            assert len(signs[e]) == 1
    # signed edge cycles close
    for c in range(mesh.n_cells):
        vec = np.zeros(2)
        for e, s in zip(mesh.cell_edges[c], mesh.cell_signs[c]):
            p0, p1 = mesh.edge_endpoints(e)
            vec += s * (p1 - p0)
        assert np.abs(vec).max() <= 1e-12


@given(kind=st.sampled_from(MESH_KINDS), n=st.integers(1, 8))
def test_refinement_halves_h(kind, n):
    assert generate(kind, 2 * n).h == pytest.approx(generate(kind, n).h / 2, rel=1e-12)


def test_unknown_kind():
    with pytest.raises(ValueError):
        generate("hexagon", 2)
