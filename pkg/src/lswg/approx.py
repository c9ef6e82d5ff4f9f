"""Polynomial bases, polygon/segment quadrature and local L2 projections."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import ceil
from typing import Callable

import numpy as np
from scipy.special import roots_jacobi

from .mesh import Cell, signed_area

ScalarField = Callable[[np.ndarray, np.ndarray], np.ndarray]
VectorField = Callable[[np.ndarray, np.ndarray], tuple]


class QuadratureError(ValueError):
    pass


def dim_cell(m: int) -> int:
    return (m + 1) * (m + 2) // 2


@lru_cache(maxsize=None)
def exponents(m: int) -> np.ndarray:
    """Monomial exponents (a, b), ordered by total degree then by descending a."""
    return np.array([(d - b, b) for d in range(m + 1) for b in range(d + 1)], dtype=np.int64)


@dataclass(frozen=True)
class CellBasis:
    """Scaled monomials ((x - xc)/s)^a ((y - yc)/s)^b with a + b <= degree.

    With ``transform`` T the basis is the monomial row vector times T; the
    mesh code uses T from :func:`orthonormal_basis` so that the cell mass
    matrix is the identity and coefficient round-off is not amplified by
    its inverse.  Coefficient vectors always refer to the transformed basis.
    """

    degree: int
    center: np.ndarray
    scale: float
    transform: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return dim_cell(self.degree)

    def _powers(self, pts):
        pts = np.atleast_2d(pts)
        xi = (pts[:, 0] - self.center[0]) / self.scale
        eta = (pts[:, 1] - self.center[1]) / self.scale
        k = np.arange(self.degree + 1)
        return xi[:, None] ** k, eta[:, None] ** k

    def _apply(self, V):
        return V if self.transform is None else V @ self.transform

    def values(self, pts: np.ndarray) -> np.ndarray:
        """Shape (npts, dim)."""
        X, Y = self._powers(pts)
        ab = exponents(self.degree)
        return self._apply(X[:, ab[:, 0]] * Y[:, ab[:, 1]])

    def gradients(self, pts: np.ndarray) -> np.ndarray:
        """Shape (npts, dim, 2)."""
        X, Y = self._powers(pts)
        a, b = exponents(self.degree).T
        gx = a * X[:, np.maximum(a - 1, 0)] * Y[:, b]
        gy = b * X[:, a] * Y[:, np.maximum(b - 1, 0)]
        return np.stack([self._apply(gx), self._apply(gy)], axis=-1) / self.scale

    def laplacians(self, pts: np.ndarray) -> np.ndarray:
        X, Y = self._powers(pts)
        a, b = exponents(self.degree).T
        lxx = a * (a - 1) * X[:, np.maximum(a - 2, 0)] * Y[:, b]
        lyy = b * (b - 1) * X[:, a] * Y[:, np.maximum(b - 2, 0)]
        return self._apply(lxx + lyy) / self.scale**2

    def evaluate(self, coeffs: np.ndarray, pts: np.ndarray) -> np.ndarray:
        return self.values(pts) @ coeffs


@dataclass(frozen=True)
class EdgeBasis:
    """Monomials t^j of the parameter t in [-1, 1] running from p0 to p1."""

    degree: int
    endpoints: np.ndarray

    @property
    def dim(self) -> int:
        return self.degree + 1

    def values(self, t: np.ndarray) -> np.ndarray:
        return np.asarray(t, dtype=float)[:, None] ** np.arange(self.degree + 1)

    def points(self, t: np.ndarray) -> np.ndarray:
        p0, p1 = self.endpoints
        return 0.5 * (1 - t)[:, None] * p0 + 0.5 * (1 + t)[:, None] * p1

    def evaluate(self, coeffs: np.ndarray, t: np.ndarray) -> np.ndarray:
        return self.values(t) @ coeffs


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    order: int
    params: np.ndarray | None = None  # edge parameter t in [-1, 1]

    def integrate(self, values: np.ndarray) -> float:
        return float(self.weights @ values)


@lru_cache(maxsize=None)
def reference_triangle_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed-coordinate Gauss rule on the triangle (0,0), (1,0), (0,1).

    Gauss-Jacobi(1, 0) in the collapsed direction times Gauss-Legendre in the
    other; exact for total degree <= order.
    """
    n = max(1, ceil((order + 1) / 2))
    s, ws = roots_jacobi(n, 1.0, 0.0)
    g, wg = np.polynomial.legendre.leggauss(n)
    a = 0.5 * (1 + s)
    b = 0.5 * (1 + g)
    A, B = np.meshgrid(a, b, indexing="ij")
    W = np.outer(ws / 4.0, wg / 2.0)
    pts = np.column_stack([A.ravel(), ((1 - A) * B).ravel()])
    return pts, W.ravel()


def triangulate(xy: np.ndarray, tol: float = 1e-14) -> list[tuple[int, int, int]]:
    """Ear-clipping triangulation of a simple CCW polygon.

    A straight (180 degree) vertex is removed when it comes up as an ear tip,
    so no zero-area triangle is emitted.
    """
    xy = np.asarray(xy, dtype=float)
    scale = max(np.ptp(xy[:, 0]), np.ptp(xy[:, 1]), 1e-300) ** 2
    if signed_area(xy) <= tol * scale:
        raise QuadratureError("degenerate polygon (non-positive area)")

    def cross(i, j, k):
        return (xy[j, 0] - xy[i, 0]) * (xy[k, 1] - xy[i, 1]) - (xy[j, 1] - xy[i, 1]) * (xy[k, 0] - xy[i, 0])

    def inside(p, i, j, k):
        return cross(i, j, p) >= -tol * scale and cross(j, k, p) >= -tol * scale and cross(k, i, p) >= -tol * scale

    idx = list(range(len(xy)))
    tris = []
    while len(idx) > 3:
        n = len(idx)
        for pos in range(n):
            i, j, k = idx[pos - 1], idx[pos], idx[(pos + 1) % n]
            c = cross(i, j, k)
            if abs(c) <= tol * scale:
                d1 = xy[j] - xy[i]
                d2 = xy[k] - xy[j]
                if d1 @ d2 > 0:  # straight vertex
                    idx.pop(pos)
                    break
                continue
            if c < 0:
                continue
            if any(inside(p, i, j, k) for p in idx if p not in (i, j, k)):
                continue
            tris.append((i, j, k))
            idx.pop(pos)
            break
        else:
            raise QuadratureError("no ear found; polygon is degenerate or not simple")
    if abs(cross(*idx)) <= tol * scale:
        raise QuadratureError("degenerate polygon (zero-area ear)")
    tris.append(tuple(idx))
    return tris


def _as_polygon(cell) -> np.ndarray:
    if isinstance(cell, Cell):
        return cell.vertices
    return np.asarray(cell, dtype=float)


def cell_quadrature(cell, order: int) -> QuadratureRule:
    """Quadrature on a simple polygon, exact for polynomials of degree <= order."""
    if order < 1:
        raise QuadratureError("order must be >= 1")
    xy = _as_polygon(cell)
    ref_pts, ref_w = reference_triangle_rule(order)
    pts, wts = [], []
    for i, j, k in triangulate(xy):
        p0, p1, p2 = xy[i], xy[j], xy[k]
        J = np.column_stack([p1 - p0, p2 - p0])
        det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        if det <= 0:
            raise QuadratureError("degenerate polygon (zero-area ear)")
        pts.append(p0 + ref_pts @ J.T)
        wts.append(ref_w * det)
    return QuadratureRule(np.vstack(pts), np.concatenate(wts), order)


@lru_cache(maxsize=None)
def _gauss_legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


def edge_quadrature(edge, npoints: int) -> QuadratureRule:
    """Gauss-Legendre rule on a straight segment given by its two endpoints."""
    p0, p1 = np.asarray(edge, dtype=float)
    t, w = _gauss_legendre(npoints)
    length = float(np.hypot(*(p1 - p0)))
    pts = 0.5 * (1 - t)[:, None] * p0 + 0.5 * (1 + t)[:, None] * p1
    return QuadratureRule(pts, 0.5 * length * w, 2 * npoints - 1, params=t)


def basis_scale(diameter: float) -> float:
    return 0.5 * diameter


def orthonormal_basis(m: int, center, diameter: float, rule: QuadratureRule) -> CellBasis:
    """Monomials about ``center`` orthonormalized in L2 over the rule's cell.

    Two Cholesky passes, so the mass matrix is the identity to round-off
    even when the raw monomial Gram matrix is poorly conditioned.
    """
    basis = CellBasis(m, np.asarray(center, dtype=float), basis_scale(diameter))
    T = np.eye(basis.dim)
    for _ in range(2):
        V = basis.values(rule.points) @ T
        try:
            C = np.linalg.cholesky(mass_matrix(V, rule.weights))
        except np.linalg.LinAlgError as exc:
            raise QuadratureError("singular cell mass matrix (degenerate cell)") from exc
        T = T @ np.linalg.inv(C).T
    return CellBasis(m, basis.center, basis.scale, T)


def cell_basis(cell, m: int, rule: QuadratureRule | None = None) -> CellBasis:
    """Orthonormal P_m basis of a cell (same construction as the assembled operators)."""
    from .mesh import polygon_centroid, polygon_diameter

    xy = _as_polygon(cell)
    if isinstance(cell, Cell):
        center, diam = np.array([cell.centroid.x, cell.centroid.y]), cell.diameter
    else:
        center, diam = polygon_centroid(xy), polygon_diameter(xy)
    rule = cell_quadrature(xy, 2 * m + 4) if rule is None else rule
    return orthonormal_basis(m, center, diam, rule)


def mass_matrix(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return (values * weights[:, None]).T @ values


def _solve_spd(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        c = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise QuadratureError("singular mass matrix (degenerate cell or edge)") from exc
    return np.linalg.solve(c.T, np.linalg.solve(c, rhs))


def project_Q0(f: ScalarField, cell, m: int, order: int | None = None) -> np.ndarray:
    """Coefficients of the L2 projection of f onto P_m(T) in the basis of :func:`cell_basis`."""
    basis = cell_basis(cell, m)
    rule = cell_quadrature(cell, 2 * m + 4 if order is None else order)
    V = basis.values(rule.points)
    fv = np.broadcast_to(np.asarray(f(rule.points[:, 0], rule.points[:, 1]), dtype=float), rule.weights.shape)
    return _solve_spd(mass_matrix(V, rule.weights), V.T @ (rule.weights * fv))


def _edge_project(values_fn, edge, degree: int, npoints: int | None):
    if degree < 0:
        raise QuadratureError("edge degree must be >= 0")
    endpoints = np.asarray(edge, dtype=float)
    basis = EdgeBasis(degree, endpoints)
    rule = edge_quadrature(endpoints, degree + 3 if npoints is None else npoints)
    V = basis.values(rule.params)
    M = mass_matrix(V, rule.weights)
    fv = values_fn(rule.points)
    return _solve_spd(M, V.T @ (rule.weights[:, None] * fv))


def _scalar_on(f):
    def fn(pts):
        v = np.asarray(f(pts[:, 0], pts[:, 1]), dtype=float)
        return np.broadcast_to(v, (len(pts),))[:, None]

    return fn


def project_Qb(f: ScalarField, edge, degree: int, npoints: int | None = None) -> np.ndarray:
    """L2 projection of f onto P_degree(e) (degree m for traces)."""
    return _edge_project(_scalar_on(f), edge, degree, npoints)[:, 0]


def project_Qn(f: ScalarField, edge, degree: int, npoints: int | None = None) -> np.ndarray:
    """L2 projection of a normal-flux field onto P_degree(e) (degree m - 1)."""
    return _edge_project(_scalar_on(f), edge, degree, npoints)[:, 0]


def project_Qg(F: VectorField, edge, degree: int, npoints: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Componentwise L2 projection of a vector field onto [P_degree(e)]^2."""

    def fn(pts):
        fx, fy = F(pts[:, 0], pts[:, 1])
        n = len(pts)
        return np.column_stack([np.broadcast_to(fx, (n,)), np.broadcast_to(fy, (n,))])

    c = _edge_project(fn, edge, degree, npoints)
    return c[:, 0], c[:, 1]
