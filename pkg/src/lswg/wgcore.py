"""Element-local least-squares weak Galerkin operators.

Local degrees of freedom of a cell with k sides are laid out as::

    [ v0 (dim P_m) | side 0: vb (m+1), vgn (m) | side 1: ... | side k-1: ... ]

in the cell's own frame: side i runs from vertex i to vertex i+1, edge
polynomials are monomials in t in [-1, 1] along that direction, and ``vgn``
is the flux against the *outward* normal of the cell.  The global layer
(:mod:`lswg.system`) converts to the global edge orientation with signs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .approx import (
    CellBasis,
    EdgeBasis,
    QuadratureError,
    ScalarField,
    VectorField,
    _as_polygon,
    cell_quadrature,
    dim_cell,
    edge_quadrature,
    mass_matrix,
    orthonormal_basis,
    project_Q0,
    project_Qb,
    project_Qn,
)
from .mesh import Cell, polygon_centroid, polygon_diameter


@dataclass(frozen=True)
class WgConfig:
    """Discretization parameters.

    ``stab_powers`` are the exponents p in the h_T^-p weights of the value
    and flux stabilizer terms; only sensitivity tests change them.
    """

    m: int = 2
    k2: float = 10.0
    stab_powers: tuple[int, int] = (3, 1)

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("polynomial degree m must be an integer >= 1")
        if not self.k2 > 0:
            raise ValueError("k2 must be positive")

    @property
    def r(self) -> int:
        return self.m

    @property
    def cell_order(self) -> int:
        return 2 * self.m + 4

    @property
    def edge_points(self) -> int:
        return self.m + 3


def local_layout(m: int, nsides: int) -> tuple[int, int, int]:
    """(v0 block size, per-side block size, total local size)."""
    nb = dim_cell(m)
    side = 2 * m + 1
    return nb, side, nb + nsides * side


@dataclass
class WeakFunctionLocal:
    v0: np.ndarray
    vb: list[np.ndarray]
    vgn: list[np.ndarray]

    def to_vector(self) -> np.ndarray:
        parts = [self.v0]
        for b, g in zip(self.vb, self.vgn):
            parts += [b, g]
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, x: np.ndarray, m: int, nsides: int) -> "WeakFunctionLocal":
        nb, side, n = local_layout(m, nsides)
        if len(x) != n:
            raise ValueError(f"expected {n} local coefficients, got {len(x)}")
        vb, vgn = [], []
        for i in range(nsides):
            off = nb + i * side
            vb.append(x[off : off + m + 1])
            vgn.append(x[off + m + 1 : off + side])
        return cls(x[:nb], vb, vgn)


@dataclass
class _Side:
    rule: object
    normal: np.ndarray
    Eb: np.ndarray  # edge trace basis at quadrature points
    Eg: np.ndarray  # edge flux basis
    V: np.ndarray  # cell basis values
    Gn: np.ndarray  # cell basis normal derivatives


@dataclass
class LocalGeometry:
    """k2-independent pieces of one cell's operators, in the cell-centred frame."""

    m: int
    nsides: int
    basis: CellBasis
    h: float
    M: np.ndarray
    B: np.ndarray  # right-hand side of the weak Laplacian definition
    L: np.ndarray
    S_value: np.ndarray  # <v0 - vb, .> part, without k2 h^-p
    S_flux: np.ndarray
    quad_points: np.ndarray
    quad_weights: np.ndarray
    V: np.ndarray
    sides: list[_Side] = field(repr=False)

    def stabilizer(self, config: WgConfig) -> np.ndarray:
        p0, p1 = config.stab_powers
        return config.k2 * (self.h ** (-p0) * self.S_value + self.h ** (-p1) * self.S_flux)

    def residual_map(self, k2: float) -> np.ndarray:
        """Coefficients of Delta_w v + k^2 v0 in P_m(T)."""
        R = self.L.copy()
        nb = self.basis.dim
        R[:, :nb] += k2 * np.eye(nb)
        return R

    def ls_matrix(self, config: WgConfig) -> np.ndarray:
        R = self.residual_map(config.k2)
        A = R.T @ self.M @ R + self.stabilizer(config)
        return 0.5 * (A + A.T)


def local_geometry(xy: np.ndarray, m: int, center=None, scale=None) -> LocalGeometry:
    """Build M_T, the weak-Laplacian map and the stabilizer pieces of a CCW polygon.

    ``scale`` is the cell diameter h_T (used by the stabilizer); the basis is
    the orthonormal one of :func:`lswg.approx.orthonormal_basis`.
    """
    xy = np.asarray(xy, dtype=float)
    center = polygon_centroid(xy) if center is None else np.asarray(center, dtype=float)
    h = polygon_diameter(xy) if scale is None else float(scale)
    nb, side, n = local_layout(m, len(xy))

    rule = cell_quadrature(xy, 2 * m + 4)
    basis = orthonormal_basis(m, center, h, rule)
    V = basis.values(rule.points)
    M = mass_matrix(V, rule.weights)
    try:
        chol = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise QuadratureError("singular cell mass matrix") from exc

    B = np.zeros((nb, n))
    S_value = np.zeros((n, n))
    S_flux = np.zeros((n, n))
    B[:, :nb] = (basis.laplacians(rule.points) * rule.weights[:, None]).T @ V

    sides = []
    k = len(xy)
    for i in range(k):
        p0, p1 = xy[i], xy[(i + 1) % k]
        d = p1 - p0
        normal = np.array([d[1], -d[0]]) / np.hypot(*d)
        er = edge_quadrature(np.array([p0, p1]), m + 3)
        Eb = EdgeBasis(m, np.array([p0, p1])).values(er.params)
        Eg = Eb[:, :m]
        Vs = basis.values(er.points)
        Gn = basis.gradients(er.points) @ normal
        w = er.weights
        off = nb + i * side
        sb = slice(off, off + m + 1)
        sg = slice(off + m + 1, off + side)
        B[:, sb] -= (Gn * w[:, None]).T @ Eb
        B[:, sg] += (Vs * w[:, None]).T @ Eg

        J0 = np.zeros((len(w), n))
        J0[:, :nb] = Vs
        J0[:, sb] = -Eb
        S_value += (J0 * w[:, None]).T @ J0
        J1 = np.zeros((len(w), n))
        J1[:, :nb] = Gn
        J1[:, sg] = -Eg
        S_flux += (J1 * w[:, None]).T @ J1
        sides.append(_Side(er, normal, Eb, Eg, Vs, Gn))

    L = np.linalg.solve(chol.T, np.linalg.solve(chol, B))
    return LocalGeometry(
        m=m,
        nsides=k,
        basis=basis,
        h=h,
        M=M,
        B=B,
        L=L,
        S_value=S_value,
        S_flux=S_flux,
        quad_points=rule.points,
        quad_weights=rule.weights,
        V=V,
        sides=sides,
    )


@dataclass
class ElementOperator:
    L_T: np.ndarray
    S_T: np.ndarray
    A_T: np.ndarray
    b_T: np.ndarray | None
    M_T: np.ndarray


def _geometry(cell, config: WgConfig) -> LocalGeometry:
    if isinstance(cell, LocalGeometry):
        return cell
    return local_geometry(_as_polygon(cell), config.m)


def weak_laplacian_matrix(cell, config: WgConfig) -> np.ndarray:
    """Matrix sending local dofs to the P_m coefficients of the discrete weak Laplacian."""
    return _geometry(cell, config).L


def weak_laplacian_ibp_matrix(cell, config: WgConfig) -> np.ndarray:
    """The same operator assembled from the integrated-by-parts form.

    (Delta_w v, w) = (Delta v0, w) + <v0 - vb, grad w.n> + <(v_g - grad v0).n, w>,
    valid because v0 is a polynomial.  Used as an independent check.
    """
    g = _geometry(cell, config)
    m = config.m
    nb, side, n = local_layout(m, g.nsides)
    lap = g.basis.laplacians(g.quad_points)
    B = np.zeros((nb, n))
    B[:, :nb] = (g.V * g.quad_weights[:, None]).T @ lap
    for i, s in enumerate(g.sides):
        w = s.rule.weights
        off = nb + i * side
        B[:, :nb] += (s.Gn * w[:, None]).T @ s.V - (s.V * w[:, None]).T @ s.Gn
        B[:, off : off + m + 1] -= (s.Gn * w[:, None]).T @ s.Eb
        B[:, off + m + 1 : off + side] += (s.V * w[:, None]).T @ s.Eg
    return np.linalg.solve(g.M, B)


def stabilizer_matrix(cell, config: WgConfig) -> np.ndarray:
    return _geometry(cell, config).stabilizer(config)


def local_ls_matrix(cell, config: WgConfig) -> np.ndarray:
    return _geometry(cell, config).ls_matrix(config)


def load_moments(g: LocalGeometry, f: ScalarField, offset=None) -> np.ndarray:
    """(f, psi_i)_T for the cell basis; ``offset`` shifts the stored quadrature points."""
    pts = g.quad_points if offset is None else g.quad_points + offset
    fv = np.broadcast_to(np.asarray(f(pts[:, 0], pts[:, 1]), dtype=float), g.quad_weights.shape)
    return g.V.T @ (g.quad_weights * fv)


def local_rhs(cell, f: ScalarField, config: WgConfig) -> np.ndarray:
    g = _geometry(cell, config)
    return g.residual_map(config.k2).T @ load_moments(g, f)


def element_operator(cell, config: WgConfig, f: ScalarField | None = None) -> ElementOperator:
    g = _geometry(cell, config)
    return ElementOperator(
        L_T=g.L,
        S_T=g.stabilizer(config),
        A_T=g.ls_matrix(config),
        b_T=None if f is None else g.residual_map(config.k2).T @ load_moments(g, f),
        M_T=g.M,
    )


def local_interpolant(cell, u: ScalarField, grad_u: VectorField, m: int) -> np.ndarray:
    """Local vector of Q_h u = {Q0 u, Qb u, Qg(grad u)} (flux against the outward normal)."""
    xy = _as_polygon(cell)
    k = len(xy)
    cellobj = cell if isinstance(cell, Cell) else Cell(
        tuple(range(k)), xy, polygon_diameter(xy), _point(polygon_centroid(xy)), 0.0
    )
    parts = [project_Q0(u, cellobj, m)]
    for i in range(k):
        ends = np.array([xy[i], xy[(i + 1) % k]])
        d = ends[1] - ends[0]
        nrm = np.array([d[1], -d[0]]) / np.hypot(*d)

        def flux(x, y, nrm=nrm):
            gx, gy = grad_u(x, y)
            return gx * nrm[0] + gy * nrm[1]

        parts.append(project_Qb(u, ends, m, npoints=m + 3))
        parts.append(project_Qn(flux, ends, m - 1, npoints=m + 3))
    return np.concatenate(parts)


def _point(c):
    from .mesh import Point2

    return Point2(float(c[0]), float(c[1]))


def energy_norm(u: np.ndarray, mesh, config: WgConfig, disc=None) -> float:
    """sqrt(a(u, u)) for a global coefficient vector."""
    from .system import Discretization

    disc = Discretization(mesh, config) if disc is None else disc
    q = disc.quadratic_form(u)
    scale = max(1.0, disc.quadratic_form_scale(u))
    if q < -1e-12 * scale:
        raise ArithmeticError(f"negative energy {q:g}: assembled form is not positive semidefinite")
    return float(np.sqrt(max(q, 0.0)))
