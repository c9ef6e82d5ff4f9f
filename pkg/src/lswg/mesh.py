"""Two-dimensional polygonal meshes with Cauchy boundary tagging.

Every edge carries one fixed global normal (the direction ``v1 - v0``
rotated by -90 degrees).  A cell sees the edge with sign ``+1`` when the
global normal is its outward normal, i.e. when the cell traverses the edge
from ``v0`` to ``v1`` in its counterclockwise vertex order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

INTERIOR = 0
GAMMA1 = 1
GAMMA2 = 2
UNTAGGED = -1

TAG_NAMES = {INTERIOR: "Interior", GAMMA1: "Gamma1", GAMMA2: "Gamma2", UNTAGGED: "Untagged"}


class MeshError(ValueError):
    """Raised for malformed or inconsistent mesh input."""


@dataclass(frozen=True)
class Point2:
    x: float
    y: float


@dataclass(frozen=True)
class Cell:
    vertex_ids: tuple[int, ...]
    vertices: np.ndarray
    diameter: float
    centroid: Point2
    area: float


@dataclass(frozen=True)
class Edge:
    v0: int
    v1: int
    normal: np.ndarray
    left_cell: int
    right_cell: int | None
    tag: int


def signed_area(xy: np.ndarray) -> float:
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(xy: np.ndarray) -> np.ndarray:
    x, y = xy[:, 0], xy[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * cross.sum()
    return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6.0 * a)


def polygon_diameter(xy: np.ndarray) -> float:
    d = xy[:, None, :] - xy[None, :, :]
    return float(np.sqrt((d**2).sum(-1)).max())


def is_convex(xy: np.ndarray, tol: float = 1e-14) -> bool:
    """True when no vertex of the CCW polygon is a reflex corner."""
    e = np.roll(xy, -1, axis=0) - xy
    en = np.roll(e, -1, axis=0)
    cross = e[:, 0] * en[:, 1] - e[:, 1] * en[:, 0]
    return bool(np.all(cross >= -tol))


def _segments_cross(p, q, r, s) -> bool:
    """Proper intersection test for the open segments pq and rs."""

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(r, s, p), orient(r, s, q)
    d3, d4 = orient(p, q, r), orient(p, q, s)
    return d1 * d2 < 0 and d3 * d4 < 0


def is_simple(xy: np.ndarray) -> bool:
    k = len(xy)
    for i in range(k):
        for j in range(i + 2, k):
            if i == 0 and j == k - 1:
                continue
            if _segments_cross(xy[i], xy[(i + 1) % k], xy[j], xy[(j + 1) % k]):
                return False
    return True


@dataclass(frozen=True, eq=False)
class PolyMesh:
    """Polygonal partition of a planar domain.

    Array fields are indexed by cell or edge number.  ``cell_edges[c]`` and
    ``cell_signs[c]`` list the edges of cell ``c`` in counterclockwise order,
    side ``i`` joining vertex ``i`` to vertex ``i+1``.
    """

    vertices: np.ndarray
    cells: tuple[tuple[int, ...], ...]
    edges: np.ndarray
    edge_tags: np.ndarray
    edge_cells: np.ndarray
    cell_edges: tuple[np.ndarray, ...]
    cell_signs: tuple[np.ndarray, ...]
    areas: np.ndarray
    centroids: np.ndarray
    diameters: np.ndarray
    normals: np.ndarray
    lengths: np.ndarray

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_cells[:, 1] < 0)

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_cells[:, 1] >= 0)

    def cell_vertices(self, c: int) -> np.ndarray:
        return self.vertices[list(self.cells[c])]

    def cell(self, c: int) -> Cell:
        return Cell(
            vertex_ids=self.cells[c],
            vertices=self.cell_vertices(c),
            diameter=float(self.diameters[c]),
            centroid=Point2(*self.centroids[c]),
            area=float(self.areas[c]),
        )

    def edge(self, e: int) -> Edge:
        left, right = self.edge_cells[e]
        return Edge(
            v0=int(self.edges[e, 0]),
            v1=int(self.edges[e, 1]),
            normal=self.normals[e],
            left_cell=int(left),
            right_cell=None if right < 0 else int(right),
            tag=int(self.edge_tags[e]),
        )

    def edge_endpoints(self, e: int) -> np.ndarray:
        return self.vertices[self.edges[e]]

    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    def cell_sign(self, c: int, e: int) -> int:
        local = np.flatnonzero(self.cell_edges[c] == e)
        if len(local) != 1:
            raise MeshError(f"edge {e} is not a side of cell {c}")
        return int(self.cell_signs[c][local[0]])

    def with_tags(self, tags: np.ndarray) -> "PolyMesh":
        return replace(self, edge_tags=np.asarray(tags, dtype=np.int64).copy())


def build_mesh(
    vertices: Sequence[Sequence[float]] | np.ndarray,
    cells: Sequence[Sequence[int]],
    edges: np.ndarray | None = None,
    tags: Sequence[int] | np.ndarray | None = None,
) -> PolyMesh:
    """Build a mesh from vertex coordinates and CCW cell vertex lists.

    When ``edges`` is given its orientation is kept and it must list every
    cell side exactly once; otherwise edges are created in order of first
    appearance, oriented so the first cell to traverse them is the left cell.
    Tags default to interior/untagged.
    """
    verts = np.asarray(vertices, dtype=float)
    if verts.ndim != 2 or verts.shape[1] != 2:
        raise MeshError("vertices must be an (NV, 2) array")
    if not np.all(np.isfinite(verts)):
        raise MeshError("non-finite vertex coordinate")
    nv = len(verts)
    cells = tuple(tuple(int(i) for i in c) for c in cells)

    areas = np.empty(len(cells))
    centroids = np.empty((len(cells), 2))
    diameters = np.empty(len(cells))
    for c, ids in enumerate(cells):
        if len(ids) < 3:
            raise MeshError(f"cell {c} has fewer than 3 vertices")
        if min(ids) < 0 or max(ids) >= nv:
            raise MeshError(f"cell {c} references a vertex outside 0..{nv - 1}")
        if len(set(ids)) != len(ids):
            raise MeshError(f"cell {c} repeats a vertex")
        xy = verts[list(ids)]
        a = signed_area(xy)
        if a <= 0.0:
            raise MeshError(f"cell {c} is not counterclockwise (signed area {a:g})")
        if not is_simple(xy):
            raise MeshError(f"cell {c} is self-intersecting")
        areas[c] = a
        centroids[c] = polygon_centroid(xy)
        diameters[c] = polygon_diameter(xy)

    index: dict[tuple[int, int], int] = {}
    if edges is None:
        edge_list: list[tuple[int, int]] = []
        for ids in cells:
            k = len(ids)
            for i in range(k):
                a, b = ids[i], ids[(i + 1) % k]
                key = (min(a, b), max(a, b))
                if key not in index:
                    index[key] = len(edge_list)
                    edge_list.append((a, b))
        edge_arr = np.array(edge_list, dtype=np.int64).reshape(-1, 2)
    else:
        edge_arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edge_arr.size and (edge_arr.min() < 0 or edge_arr.max() >= nv):
            raise MeshError("edge references a vertex outside the vertex list")
        for e, (a, b) in enumerate(edge_arr):
            key = (min(a, b), max(a, b))
            if a == b:
                raise MeshError(f"edge {e} is degenerate")
            if key in index:
                raise MeshError(f"edge {e} duplicates edge {index[key]}")
            index[key] = e

    ne = len(edge_arr)
    # slot 0: cell with sign +1 (left), slot 1: cell with sign -1 (right)
    slots = -np.ones((ne, 2), dtype=np.int64)
    cell_edges, cell_signs = [], []
    for c, ids in enumerate(cells):
        k = len(ids)
        ce = np.empty(k, dtype=np.int64)
        cs = np.empty(k, dtype=np.int64)
        for i in range(k):
            a, b = ids[i], ids[(i + 1) % k]
            key = (min(a, b), max(a, b))
            if key not in index:
                raise MeshError(f"side ({a}, {b}) of cell {c} is missing from the edge list")
            e = index[key]
            sign = 1 if edge_arr[e, 0] == a else -1
            slot = 0 if sign == 1 else 1
            if slots[e, slot] >= 0:
                raise MeshError(f"edge {e} is traversed twice in the same direction")
            slots[e, slot] = c
            ce[i], cs[i] = e, sign
        cell_edges.append(ce)
        cell_signs.append(cs)

    unused = np.flatnonzero((slots[:, 0] < 0) & (slots[:, 1] < 0))
    if len(unused):
        raise MeshError(f"edge {unused[0]} is not a side of any cell")

    # edge_cells: first column the incident cell for boundary edges
    edge_cells = slots.copy()
    lone_right = (slots[:, 0] < 0) & (slots[:, 1] >= 0)
    edge_cells[lone_right, 0] = slots[lone_right, 1]
    edge_cells[lone_right, 1] = -1

    p0 = verts[edge_arr[:, 0]]
    p1 = verts[edge_arr[:, 1]]
    d = p1 - p0
    lengths = np.sqrt((d**2).sum(1))
    normals = np.column_stack([d[:, 1], -d[:, 0]]) / lengths[:, None]

    boundary = edge_cells[:, 1] < 0
    if tags is None:
        tag_arr = np.where(boundary, UNTAGGED, INTERIOR).astype(np.int64)
    else:
        tag_arr = np.asarray(tags, dtype=np.int64).copy()
        if tag_arr.shape != (ne,):
            raise MeshError("one tag per edge required")
        if np.any(~np.isin(tag_arr, [INTERIOR, GAMMA1, GAMMA2, UNTAGGED])):
            raise MeshError("edge tags must be 0, 1 or 2")
        if np.any(tag_arr[~boundary] != INTERIOR):
            raise MeshError("interior edge tagged as boundary")

    return PolyMesh(
        vertices=verts,
        cells=cells,
        edges=edge_arr,
        edge_tags=tag_arr,
        edge_cells=edge_cells,
        cell_edges=tuple(cell_edges),
        cell_signs=tuple(cell_signs),
        areas=areas,
        centroids=centroids,
        diameters=diameters,
        normals=normals,
        lengths=lengths,
    )


def default_gamma2(midpoint: np.ndarray) -> bool:
    """Left side x = 0 of the unit square is the inaccessible boundary."""
    return bool(midpoint[0] < 1e-12)


def tag_boundary(
    mesh: PolyMesh, gamma2_predicate: Callable[[np.ndarray], bool] | None = None
) -> PolyMesh:
    """Split the boundary into Gamma1 (Cauchy data) and Gamma2 (no data)."""
    pred = default_gamma2 if gamma2_predicate is None else gamma2_predicate
    mids = mesh.midpoints()
    tags = np.full(mesh.n_edges, INTERIOR, dtype=np.int64)
    for e in mesh.boundary_edges:
        tags[e] = GAMMA2 if pred(mids[e]) else GAMMA1
    if not np.any(tags == GAMMA1):
        raise MeshError("Gamma1 is empty; Cauchy data needs a boundary part of positive length")
    return mesh.with_tags(tags)


def _dedup_vertices(points: list[tuple[float, float]]):
    """Map each point to a shared vertex index (points are exact dyadic values)."""
    index: dict[tuple[float, float], int] = {}
    verts: list[tuple[float, float]] = []
    ids = []
    for p in points:
        key = (round(p[0], 14), round(p[1], 14))
        if key not in index:
            index[key] = len(verts)
            verts.append(p)
        ids.append(index[key])
    return np.array(verts), ids


def generate_uniform_triangular(n: int) -> PolyMesh:
    """n x n squares of the unit square, each cut by its (0,0)-(1,1) diagonal."""
    if n < 1:
        raise MeshError("n must be positive")
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    cells = []
    for j in range(n):
        for i in range(n):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            cells.append((a, b, c))
            cells.append((a, c, d))
    return tag_boundary(build_mesh(verts, cells))


# breakpoints of the polyline (0,0)-(1/4,3/4)-(3/4,1/4)-(1,1) inside a macro square
_P = (0.25, 0.75)
_Q = (0.75, 0.25)

_PENTAGON = [
    [(0, 0), (1, 0), (1, 1), _Q, _P],
    [(0, 0), _P, _Q, (1, 1), (0, 1)],
]
_TRI_FIGURE = [
    [(0, 0), _P, (0, 1)],
    [(0, 0), (1, 0), _Q, _P],
    [(1, 0), (1, 1), _Q],
    [_P, _Q, (1, 1), (0, 1)],
]


def generate_figure_pattern(n: int, kind: str) -> PolyMesh:
    """Macro-square pattern meshes.

    ``pentagon`` cuts each of the n x n squares along the polyline through
    relative points (0,0), (1/4,3/4), (3/4,1/4), (1,1) into two non-convex
    pentagons; ``tri_figure`` also inserts the anti-diagonal, giving two
    triangles and two quadrilaterals per square.
    """
    if n < 1:
        raise MeshError("n must be positive")
    if kind == "pentagon":
        template = _PENTAGON
    elif kind == "tri_figure":
        template = _TRI_FIGURE
    else:
        raise MeshError(f"unknown pattern kind {kind!r}")
    hsq = 1.0 / n
    points, cell_slices = [], []
    for j in range(n):
        for i in range(n):
            for poly in template:
                start = len(points)
                points.extend(((i + px) * hsq, (j + py) * hsq) for px, py in poly)
                cell_slices.append((start, len(points)))
    verts, ids = _dedup_vertices(points)
    cells = [tuple(ids[a:b]) for a, b in cell_slices]
    return tag_boundary(build_mesh(verts, cells))


MESH_KINDS = ("tri_uniform", "tri_figure", "pentagon")


def generate(kind: str, n: int) -> PolyMesh:
    if kind == "tri_uniform":
        return generate_uniform_triangular(n)
    return generate_figure_pattern(n, kind)


def write_mesh(mesh: PolyMesh) -> str:
    lines = [f"{mesh.n_vertices} {mesh.n_cells} {mesh.n_edges}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += [" ".join(str(v) for v in (len(c), *c)) for c in mesh.cells]
    tags = np.where(mesh.edge_tags == UNTAGGED, GAMMA1, mesh.edge_tags)
    lines += [f"{a} {b} {t}" for (a, b), t in zip(mesh.edges.tolist(), tags.tolist())]
    return "\n".join(lines) + "\n"


def read_mesh(text: str) -> PolyMesh:
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise MeshError("empty mesh file")
    try:
        nv, nc, ne = (int(t) for t in rows[0])
    except ValueError as exc:
        raise MeshError(f"header must be 'NV NC NE': {' '.join(rows[0])}") from exc
    if min(nv, nc, ne) < 0 or len(rows) != 1 + nv + nc + ne:
        raise MeshError(f"expected {1 + nv + nc + ne} non-empty lines, found {len(rows)}")
    try:
        verts = [(float(r[0]), float(r[1])) for r in rows[1 : 1 + nv] if len(r) == 2 or _bad(r)]
        cells = []
        for r in rows[1 + nv : 1 + nv + nc]:
            k = int(r[0])
            if len(r) != k + 1:
                raise MeshError(f"cell line declares {k} vertices: {' '.join(r)}")
            cells.append(tuple(int(t) for t in r[1:]))
        edge_rows = [tuple(int(t) for t in r) for r in rows[1 + nv + nc :] if len(r) == 3 or _bad(r)]
    except ValueError as exc:
        if isinstance(exc, MeshError):
            raise
        raise MeshError(f"could not parse mesh: {exc}") from exc
    edges = np.array([r[:2] for r in edge_rows], dtype=np.int64).reshape(-1, 2)
    tags = np.array([r[2] for r in edge_rows], dtype=np.int64)
    return build_mesh(verts, cells, edges=edges, tags=tags)


def _bad(row) -> bool:
    raise MeshError(f"wrong number of fields: {' '.join(row)}")
