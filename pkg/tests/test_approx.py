import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lswg.approx import (
    QuadratureError,
    cell_basis,
    cell_quadrature,
    dim_cell,
    edge_quadrature,
    exponents,
    mass_matrix,
    project_Q0,
    project_Qb,
    project_Qg,
    project_Qn,
    triangulate,
)

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
UNIT_TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
PENTAGON = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.75, 0.25], [0.25, 0.75]])


def shoelace(xy):
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def green_monomial_integral(xy, a, b):
    """int_T x^a y^b dA as the boundary integral of x^(a+1) y^b / (a+1) dy.

    Each straight side is integrated with a Gauss rule of ample degree, so
    this shares nothing with the area quadrature under test.
    """
    t, w = np.polynomial.legendre.leggauss(a + b + 3)
    total = 0.0
    for p0, p1 in zip(xy, np.roll(xy, -1, axis=0)):
        s = 0.5 * (1 + t)
        x = p0[0] + s * (p1[0] - p0[0])
        y = p0[1] + s * (p1[1] - p0[1])
        total += 0.5 * float(w @ (x ** (a + 1) * y**b)) / (a + 1) * (p1[1] - p0[1])
    return total


def test_unit_triangle_weight_sum():
    assert cell_quadrature(UNIT_TRIANGLE, 1).weights.sum() == pytest.approx(0.5, abs=1e-15)


def test_pentagon_area_is_shoelace():
    # the listed non-convex pentagon has shoelace area 1/2
    rule = cell_quadrature(PENTAGON, 2)
    assert shoelace(PENTAGON) == pytest.approx(0.5, abs=1e-15)
    assert rule.weights.sum() == pytest.approx(shoelace(PENTAGON), abs=1e-14)


def test_unit_square_x2y2():
    rule = cell_quadrature(UNIT_SQUARE, 4)
    x, y = rule.points.T
    assert rule.integrate(x**2 * y**2) == pytest.approx(1 / 9, abs=1e-15)


@pytest.mark.parametrize(
    "edge, f, npts, expected",
    [
        ([[0, 0], [1, 0]], lambda x, y: 1 + 0 * x, 3, 1.0),
        ([[0, 0], [1, 0]], lambda x, y: x**3, 2, 0.25),
        ([[0, 0], [1, 1]], lambda x, y: 1 + 0 * x, 3, math.sqrt(2)),
    ],
)
def test_edge_quadrature_examples(edge, f, npts, expected):
    rule = edge_quadrature(np.array(edge, dtype=float), npts)
    assert rule.integrate(f(*rule.points.T)) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("xy", [UNIT_SQUARE, UNIT_TRIANGLE, PENTAGON], ids=["square", "triangle", "pentagon"])
@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_products_integrated_exactly(xy, m, rng):
    rule = cell_quadrature(xy, 2 * m + 2)
    ab = exponents(m + 1)
    for _ in range(5):
        p, q = rng.uniform(-1, 1, (2, len(ab)))
        exact = sum(
            p[i] * q[j] * green_monomial_integral(xy, ab[i, 0] + ab[j, 0], ab[i, 1] + ab[j, 1])
            for i in range(len(ab))
            for j in range(len(ab))
        )
        x, y = rule.points.T
        pv = sum(c * x**a * y**b for c, (a, b) in zip(p, ab))
        qv = sum(c * x**a * y**b for c, (a, b) in zip(q, ab))
        assert rule.integrate(pv * qv) == pytest.approx(exact, rel=1e-12, abs=1e-14)


def test_degenerate_polygons_rejected():
    with pytest.raises(QuadratureError):
        cell_quadrature(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]), 2)
    with pytest.raises(QuadratureError):
        cell_quadrature(UNIT_SQUARE[::-1], 2)


def test_straight_vertices_give_no_degenerate_triangles():
    xy = np.array([[0.0, 0.0], [0.5, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 0.5]])
    tris = triangulate(xy)
    assert all(shoelace(xy[list(t)]) > 1e-3 for t in tris)
    assert sum(shoelace(xy[list(t)]) for t in tris) == pytest.approx(1.0, abs=1e-15)
    assert cell_quadrature(xy, 2).weights.sum() == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_project_Q0_constant_and_linear(m):
    pts = np.array([[0.1, 0.2], [0.7, 0.3], [0.4, 0.9]])
    basis = cell_basis(PENTAGON, m)
    c = project_Q0(lambda x, y: 5 + 0 * x, PENTAGON, m)
    assert np.abs(basis.evaluate(c, pts) - 5).max() <= 1e-12
    c = project_Q0(lambda x, y: x + 2 * y, PENTAGON, m)
    assert np.abs(basis.evaluate(c, pts) - (pts[:, 0] + 2 * pts[:, 1])).max() <= 1e-12


def test_project_Q0_mean_of_sin():
    c = project_Q0(lambda x, y: np.sin(x), UNIT_SQUARE, 0)
    value = cell_basis(UNIT_SQUARE, 0).evaluate(c, np.array([[0.5, 0.5]]))[0]
    assert value == pytest.approx(1 - math.cos(1), abs=1e-6)


def test_edge_projection_examples():
    edge = np.array([[0.0, 0.0], [1.0, 0.0]])
    for degree in range(4):
        c = project_Qb(lambda x, y: 3 + 0 * x, edge, degree)
        assert np.allclose(c, [3] + [0] * degree, atol=1e-13)
    # x = (1 + t)/2 in the edge parameter
    assert np.allclose(project_Qb(lambda x, y: x, edge, 1), [0.5, 0.5], atol=1e-14)
    assert np.allclose(project_Qn(lambda x, y: x**2, edge, 0), [1 / 3], atol=1e-14)
    cx, cy = project_Qg(lambda x, y: (x, 2 + 0 * y), edge, 1)
    assert np.allclose(cx, [0.5, 0.5]) and np.allclose(cy, [2, 0])


@given(degree=st.integers(0, 4), seed=st.integers(0, 2**16))
def test_edge_projection_idempotent(degree, seed):
    rng = np.random.default_rng(seed)
    ends = rng.uniform(-1, 1, (2, 2))
    coeffs = rng.uniform(-1, 1, degree + 1)
    p0, p1 = ends
    d = p1 - p0
    if np.hypot(*d) < 1e-2:
        return

    def f(x, y):
        # invert the edge parametrization to recover t
        t = 2 * ((x - p0[0]) * d[0] + (y - p0[1]) * d[1]) / (d @ d) - 1
        return np.polynomial.polynomial.polyval(t, coeffs)

    assert np.abs(project_Qb(f, ends, degree) - coeffs).max() <= 1e-10
    assert np.abs(project_Qn(f, ends, degree) - coeffs).max() <= 1e-10


@given(m=st.integers(1, 4), seed=st.integers(0, 2**16))
def test_cell_projection_idempotent(m, seed):
    rng = np.random.default_rng(seed)
    basis = cell_basis(PENTAGON, m)
    coeffs = rng.uniform(-1, 1, dim_cell(m))
    back = project_Q0(lambda x, y: basis.evaluate(coeffs, np.column_stack([np.ravel(x), np.ravel(y)])), PENTAGON, m)
    assert np.abs(back - coeffs).max() <= 1e-10


@given(m=st.integers(1, 4), a=st.floats(0.5, 3), b=st.floats(-2, 2))
def test_projection_residual_orthogonal(m, a, b):
    def f(x, y):
        return np.exp(a * x) * np.cos(b * y)

    c = project_Q0(f, UNIT_SQUARE, m)
    basis = cell_basis(UNIT_SQUARE, m)
    rule = cell_quadrature(UNIT_SQUARE, 2 * m + 4)
    V = basis.values(rule.points)
    resid = f(*rule.points.T) - V @ c
    assert np.abs(V.T @ (rule.weights * resid)).max() <= 1e-10


@pytest.mark.parametrize("kind", ["tri_uniform", "tri_figure", "pentagon"])
def test_mass_matrices_spd(kind, meshes):
    mesh = meshes[(kind, 4)]
    for c in range(mesh.n_cells):
        for m in (1, 4):
            rule = cell_quadrature(mesh.cell(c), 2 * m + 4)
            M = mass_matrix(cell_basis(mesh.cell(c), m).values(rule.points), rule.weights)
            np.linalg.cholesky(M)
            assert np.allclose(M, np.eye(len(M)), atol=1e-10)
