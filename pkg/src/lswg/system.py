"""Global dof numbering, assembly, Cauchy-data elimination and linear solves.

Global layout: all v0 blocks cell by cell, then one block ``[vb | vgn]`` per
edge.  Edge polynomials use the parameter t in [-1, 1] from ``v0`` to ``v1``
and ``vgn`` is the flux against the global edge normal, so both are
single-valued by construction.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .approx import dim_cell
from .mesh import GAMMA1, GAMMA2, MeshError, PolyMesh
from .wgcore import LocalGeometry, WgConfig, local_geometry, local_layout

DIRECT_LIMIT = 20000


class SolverError(RuntimeError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = [] if history is None else history


class NotSPDError(SolverError):
    """The assembled system failed a positive-definiteness check."""


@dataclass(frozen=True)
class DofMap:
    mesh: PolyMesh
    m: int
    cell_offset: np.ndarray
    edge_offset: np.ndarray
    constrained: np.ndarray
    n_dofs: int

    @property
    def cell_block(self) -> int:
        return dim_cell(self.m)

    @property
    def edge_block(self) -> int:
        return 2 * self.m + 1

    @property
    def free(self) -> np.ndarray:
        return np.flatnonzero(~self.constrained)

    @property
    def constrained_dofs(self) -> np.ndarray:
        return np.flatnonzero(self.constrained)

    @property
    def free_count(self) -> int:
        return int((~self.constrained).sum())

    @property
    def constrained_count(self) -> int:
        return int(self.constrained.sum())

    def vb_dofs(self, e: int) -> np.ndarray:
        return self.edge_offset[e] + np.arange(self.m + 1)

    def vgn_dofs(self, e: int) -> np.ndarray:
        return self.edge_offset[e] + self.m + 1 + np.arange(self.m)

    def v0_dofs(self, c: int) -> np.ndarray:
        return self.cell_offset[c] + np.arange(self.cell_block)

    def local_dofs(self, c: int) -> tuple[np.ndarray, np.ndarray]:
        """Global indices and orientation signs of a cell's local dofs."""
        m = self.m
        eb = self.edge_block
        idx = [self.v0_dofs(c)]
        sgn = [np.ones(self.cell_block)]
        j = np.arange(m + 1)
        flip_b = (-1.0) ** j
        flip_g = -((-1.0) ** j[:m])
        for e, s in zip(self.mesh.cell_edges[c], self.mesh.cell_signs[c]):
            idx.append(self.edge_offset[e] + np.arange(eb))
            if s > 0:
                sgn.append(np.ones(eb))
            else:
                sgn.append(np.concatenate([flip_b, flip_g]))
        return np.concatenate(idx), np.concatenate(sgn)


def build_dof_map(mesh: PolyMesh, config: WgConfig) -> DofMap:
    m = config.m
    bnd = mesh.boundary_edges
    bad = bnd[~np.isin(mesh.edge_tags[bnd], [GAMMA1, GAMMA2])]
    if len(bad):
        raise MeshError(f"boundary edge {bad[0]} has no Gamma1/Gamma2 tag")
    nb = dim_cell(m)
    eb = 2 * m + 1
    cell_offset = np.arange(mesh.n_cells) * nb
    edge_offset = mesh.n_cells * nb + np.arange(mesh.n_edges) * eb
    n = mesh.n_cells * nb + mesh.n_edges * eb
    constrained = np.zeros(n, dtype=bool)
    for e in np.flatnonzero(mesh.edge_tags == GAMMA1):
        constrained[edge_offset[e] : edge_offset[e] + eb] = True
    return DofMap(mesh, m, cell_offset, edge_offset, constrained, n)


def boundary_orientation(mesh: PolyMesh) -> np.ndarray:
    """Per edge: +1 if the global normal is the outward domain normal, -1 if not, 0 inside."""
    out = np.zeros(mesh.n_edges, dtype=np.int64)
    for e in mesh.boundary_edges:
        out[e] = mesh.cell_sign(int(mesh.edge_cells[e, 0]), int(e))
    return out


@dataclass
class _Group:
    geometry: LocalGeometry
    cells: np.ndarray
    dofs: np.ndarray  # (ncells, nloc)
    signs: np.ndarray


def _shape_key(rel: np.ndarray) -> tuple:
    return (len(rel),) + tuple(np.round(rel, 12).ravel().tolist())


class Discretization:
    """Element operators of a mesh, grouped by congruent cell shape.

    Cells that are translates of one another share one set of local
    matrices; the load vector and projections use the true positions.
    Groups are ordered by their first cell so assembly order is fixed.
    """

    def __init__(self, mesh: PolyMesh, config: WgConfig, dofmap: DofMap | None = None):
        self.mesh = mesh
        self.config = config
        self.dofmap = build_dof_map(mesh, config) if dofmap is None else dofmap
        m = config.m
        buckets: dict[tuple, list[int]] = {}
        for c in range(mesh.n_cells):
            rel = mesh.cell_vertices(c) - mesh.centroids[c]
            buckets.setdefault(_shape_key(rel), []).append(c)
        self.groups: list[_Group] = []
        self.cell_group = np.empty(mesh.n_cells, dtype=np.int64)
        for cells in buckets.values():
            self.cell_group[cells] = len(self.groups)
            c0 = cells[0]
            rel = mesh.cell_vertices(c0) - mesh.centroids[c0]
            geo = local_geometry(rel, m, center=np.zeros(2), scale=mesh.diameters[c0])
            pairs = [self.dofmap.local_dofs(c) for c in cells]
            self.groups.append(
                _Group(
                    geo,
                    np.array(cells),
                    np.array([p[0] for p in pairs]),
                    np.array([p[1] for p in pairs]),
                )
            )

    # -- local evaluation ---------------------------------------------------
    def local_vectors(self, x: np.ndarray, g: _Group) -> np.ndarray:
        return x[g.dofs] * g.signs

    def weak_laplacian(self, x: np.ndarray) -> np.ndarray:
        """P_m coefficients of Delta_w x, shape (n_cells, dim P_m)."""
        out = np.empty((self.mesh.n_cells, self.dofmap.cell_block))
        for g in self.groups:
            out[g.cells] = self.local_vectors(x, g) @ g.geometry.L.T
        return out

    def quadratic_form(self, x: np.ndarray) -> float:
        total = 0.0
        for g in self.groups:
            xl = self.local_vectors(x, g)
            A = g.geometry.ls_matrix(self.config)
            total += float(np.einsum("ci,ij,cj->", xl, A, xl))
        return total

    def quadratic_form_scale(self, x: np.ndarray) -> float:
        total = 0.0
        for g in self.groups:
            xl = np.abs(x[g.dofs])
            total += float(np.einsum("ci,ij,cj->", xl, np.abs(g.geometry.ls_matrix(self.config)), xl))
        return total

    # -- assembly -----------------------------------------------------------
    def _assemble(self, local) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        for g in self.groups:
            K = local(g.geometry)
            n = K.shape[0]
            rows.append(np.repeat(g.dofs, n, axis=1).ravel())
            cols.append(np.tile(g.dofs, (1, n)).ravel())
            vals.append((g.signs[:, :, None] * K[None] * g.signs[:, None, :]).ravel())
        N = self.dofmap.n_dofs
        A = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
        ).tocsr()
        A.sum_duplicates()
        return A

    def matrix(self) -> sp.csr_matrix:
        return self._assemble(lambda geo: geo.ls_matrix(self.config))

    def stabilizer_matrix(self) -> sp.csr_matrix:
        return self._assemble(lambda geo: geo.stabilizer(self.config))

    def load(self, f) -> np.ndarray:
        b = np.zeros(self.dofmap.n_dofs)
        for g in self.groups:
            geo = g.geometry
            moments = self.cell_moments(f, g)
            bl = moments @ geo.residual_map(self.config.k2)
            np.add.at(b, g.dofs, bl * g.signs)
        return b

    def cell_points(self, g: _Group) -> np.ndarray:
        """Quadrature points of every cell in a group, shape (ncells, nq, 2)."""
        return self.mesh.centroids[g.cells][:, None, :] + g.geometry.quad_points[None]

    def cell_moments(self, f, g: _Group) -> np.ndarray:
        pts = self.cell_points(g)
        fv = np.broadcast_to(np.asarray(f(pts[..., 0], pts[..., 1]), dtype=float), pts.shape[:2])
        return (fv * g.geometry.quad_weights) @ g.geometry.V

    # -- projections --------------------------------------------------------
    def project_cells(self, f) -> np.ndarray:
        """Q0 f on every cell, shape (n_cells, dim P_m)."""
        out = np.empty((self.mesh.n_cells, self.dofmap.cell_block))
        for g in self.groups:
            out[g.cells] = np.linalg.solve(g.geometry.M, self.cell_moments(f, g).T).T
        return out

    def _edge_samples(self, edges: np.ndarray):
        npts = self.config.edge_points
        t, w = np.polynomial.legendre.leggauss(npts)
        p0 = self.mesh.vertices[self.mesh.edges[edges, 0]]
        p1 = self.mesh.vertices[self.mesh.edges[edges, 1]]
        pts = 0.5 * (1 - t)[None, :, None] * p0[:, None, :] + 0.5 * (1 + t)[None, :, None] * p1[:, None, :]
        return t, w, pts

    def project_edges(self, values, edges: np.ndarray, degree: int) -> np.ndarray:
        """L2 projection onto P_degree(e) of sampled values (nedges, npts) on each edge."""
        t, w, _ = self._edge_samples(edges)
        T = t[:, None] ** np.arange(degree + 1)
        G = (T * w[:, None]).T @ T
        return np.linalg.solve(G, ((values * w) @ T).T).T

    def interpolate(self, u, grad_u) -> np.ndarray:
        """Global coefficients of Q_h u = {Q0 u, Qb u, Qg(grad u)}."""
        m = self.config.m
        x = np.zeros(self.dofmap.n_dofs)
        q0 = self.project_cells(u)
        for c in range(self.mesh.n_cells):
            x[self.dofmap.v0_dofs(c)] = q0[c]
        edges = np.arange(self.mesh.n_edges)
        _, _, pts = self._edge_samples(edges)
        uv = np.broadcast_to(np.asarray(u(pts[..., 0], pts[..., 1]), dtype=float), pts.shape[:2])
        gx, gy = grad_u(pts[..., 0], pts[..., 1])
        n = self.mesh.normals
        flux = gx * n[:, 0:1] + gy * n[:, 1:2]
        vb = self.project_edges(uv, edges, m)
        vg = self.project_edges(flux, edges, m - 1)
        off = self.dofmap.edge_offset
        for k in range(m + 1):
            x[off + k] = vb[:, k]
        for k in range(m):
            x[off + m + 1 + k] = vg[:, k]
        return x

    def cell_values(self, x: np.ndarray, c: int, pts: np.ndarray) -> np.ndarray:
        """u0 of cell c at arbitrary points."""
        g = self.groups[self.cell_group[c]]
        rel = np.asarray(pts, dtype=float) - self.mesh.centroids[c]
        return g.geometry.basis.values(rel) @ x[self.dofmap.v0_dofs(c)]


def assemble(mesh: PolyMesh, config: WgConfig, f=None, disc: Discretization | None = None):
    """Matrix of a(., .) over all dofs and the load vector sum_T (f, Delta_w v + k^2 v0)_T."""
    disc = Discretization(mesh, config) if disc is None else disc
    A = disc.matrix()
    b = np.zeros(disc.dofmap.n_dofs) if f is None else disc.load(f)
    return A, b


def symmetry_defect(A: sp.spmatrix) -> float:
    """max|A - A^T| / max|A|."""
    D = (A - A.T).tocoo()
    amax = abs(A).max()
    return 0.0 if D.nnz == 0 else float(abs(D.data).max() / amax)


@dataclass
class ReducedSystem:
    A: sp.csr_matrix
    b: np.ndarray
    x_c: np.ndarray
    dofmap: DofMap


def _eval(fn, *args):
    try:
        v = np.asarray(fn(*args), dtype=float)
    except Exception as exc:  # noqa: BLE001 - user data callbacks
        raise ValueError(f"boundary data could not be evaluated: {exc}") from exc
    v = np.broadcast_to(v, args[0].shape)
    if not np.all(np.isfinite(v)):
        raise ValueError("boundary data is not finite on a Gamma1 edge")
    return v


def cauchy_values(dofmap: DofMap, g1, g2, disc: Discretization | None = None) -> np.ndarray:
    """Vector holding Qb g1 and the stored normal flux of Qn g2 on Gamma1 edges, zero elsewhere.

    ``g2(x, y, nx, ny)`` is the flux against the outward domain normal (nx, ny);
    the stored coefficient is converted to the global edge normal.
    """
    mesh = dofmap.mesh
    m = dofmap.m
    edges = np.flatnonzero(mesh.edge_tags == GAMMA1)
    if len(edges) == 0:
        raise ValueError("Gamma1 is empty")
    disc = disc if disc is not None else _EdgeOnly(mesh, m)
    _, _, pts = disc._edge_samples(edges)
    sigma = boundary_orientation(mesh)[edges].astype(float)
    n_out = mesh.normals[edges] * sigma[:, None]
    X, Y = pts[..., 0], pts[..., 1]
    NX = np.broadcast_to(n_out[:, 0:1], X.shape)
    NY = np.broadcast_to(n_out[:, 1:2], X.shape)
    vb = disc.project_edges(_eval(g1, X, Y), edges, m)
    vg = disc.project_edges(_eval(g2, X, Y, NX, NY), edges, m - 1) * sigma[:, None]
    x_c = np.zeros(dofmap.n_dofs)
    off = dofmap.edge_offset[edges]
    for k in range(m + 1):
        x_c[off + k] = vb[:, k]
    for k in range(m):
        x_c[off + m + 1 + k] = vg[:, k]
    return x_c


class _EdgeOnly(Discretization):
    """Edge projections without building element operators."""

    def __init__(self, mesh, m):
        self.mesh = mesh
        self.config = WgConfig(m=m)


def apply_cauchy_bc(A: sp.spmatrix, b: np.ndarray, dofmap: DofMap, g1, g2, disc=None) -> ReducedSystem:
    """Eliminate the Gamma1 dofs fixed by the Cauchy data."""
    x_c = cauchy_values(dofmap, g1, g2, disc)
    free = dofmap.free
    con = dofmap.constrained_dofs
    A = sp.csr_matrix(A)
    Af = A[free]
    b_f = b[free] - Af[:, con] @ x_c[con]
    return ReducedSystem(Af[:, free].tocsr(), b_f, x_c, dofmap)


@dataclass
class SolveReport:
    method: str
    iterations: int
    residual: float
    wall_time: float
    diag_range: float = float("nan")
    history: list = field(default_factory=list, repr=False)


def _jacobi_scaled(A: sp.spmatrix):
    d = A.diagonal()
    if np.any(d <= 0):
        raise NotSPDError("non-positive diagonal entry in the system matrix")
    s = 1.0 / np.sqrt(d)
    D = sp.diags(s)
    return (D @ A @ D).tocsc(), s, float(d.max() / d.min())


def cholesky_factor(A: sp.spmatrix):
    """Symmetric, pivot-free sparse factorization of the Jacobi-scaled matrix.

    SuperLU in symmetric mode with diagonal pivoting only is an LDL^T
    factorization; it succeeds with positive pivots exactly when the matrix
    admits a Cholesky factorization.  Returns (lu, scaling, diagonal range).
    """
    As, s, rng = _jacobi_scaled(sp.csr_matrix(A))
    try:
        lu = splu(
            As,
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
    except RuntimeError as exc:
        raise NotSPDError(f"factorization failed: {exc}") from exc
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise NotSPDError("factorization needed off-diagonal pivoting")
    piv = lu.U.diagonal()
    if not np.all(piv > 0):
        raise NotSPDError(f"non-positive pivot {piv.min():g}: matrix is not positive definite")
    return lu, s, rng


def is_cholesky_factorizable(A: sp.spmatrix) -> bool:
    try:
        cholesky_factor(A)
    except NotSPDError:
        return False
    return True


def _pcg(A, b, tol, maxit):
    d = A.diagonal()
    if np.any(d <= 0):
        raise NotSPDError("non-positive diagonal entry in the system matrix")
    inv = 1.0 / d
    x = np.zeros_like(b)
    r = b.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return x, 0, 0.0, [0.0]
    z = inv * r
    p = z.copy()
    rz = r @ z
    history = [1.0]
    for it in range(1, maxit + 1):
        Ap = A @ p
        curv = p @ Ap
        if curv <= 0:
            raise NotSPDError(f"negative curvature {curv:g} at CG iteration {it}", history)
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r) / bnorm
        history.append(res)
        if res <= tol:
            return x, it, res, history
        z = inv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"CG did not reach {tol:g} in {maxit} iterations (residual {history[-1]:.3e})", history)


def solve(system: ReducedSystem, method: str = "auto", tol: float = 1e-10, maxit: int | None = None):
    """Solve the reduced SPD system; returns (free solution, SolveReport)."""
    A, b = system.A, system.b
    n = A.shape[0]
    if method == "auto":
        method = "direct" if n <= DIRECT_LIMIT else "cg_jacobi"
    t0 = time.perf_counter()
    bnorm = np.linalg.norm(b)
    if method == "direct":
        lu, s, rng = cholesky_factor(A)
        x = s * lu.solve(s * b)
        res = float(np.linalg.norm(b - A @ x) / bnorm) if bnorm > 0 else 0.0
        report = SolveReport("direct", 0, res, time.perf_counter() - t0, rng)
    elif method == "cg_jacobi":
        maxit = max(1000, 20 * n) if maxit is None else maxit
        x, it, res, hist = _pcg(A, b, tol, maxit)
        d = A.diagonal()
        report = SolveReport("cg_jacobi", it, res, time.perf_counter() - t0, float(d.max() / d.min()), hist)
    else:
        raise ValueError(f"unknown solver {method!r}")
    return x, report


def reconstruct(x_f: np.ndarray, x_c: np.ndarray, dofmap: DofMap) -> np.ndarray:
    x = np.array(x_c, dtype=float, copy=True)
    x[dofmap.free] = x_f
    return x


def split(x: np.ndarray, dofmap: DofMap) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`reconstruct`: (free part, vector with only the constrained values)."""
    x_c = np.zeros_like(x)
    x_c[dofmap.constrained] = x[dofmap.constrained]
    return x[dofmap.free].copy(), x_c


@dataclass
class Solution:
    x: np.ndarray
    report: SolveReport
    disc: Discretization
    system: ReducedSystem


def solve_cauchy(mesh: PolyMesh, config: WgConfig, f, g1, g2, method: str = "auto", tol: float = 1e-10, disc=None) -> Solution:
    """Assemble, impose the Cauchy data on Gamma1 and solve."""
    disc = Discretization(mesh, config) if disc is None else disc
    A, b = assemble(mesh, config, f, disc=disc)
    red = apply_cauchy_bc(A, b, disc.dofmap, g1, g2, disc=disc)
    x_f, report = solve(red, method=method, tol=tol)
    return Solution(reconstruct(x_f, red.x_c, disc.dofmap), report, disc, red)
