"""Manufactured solutions, error norms, convergence studies and oracle checks."""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .approx import exponents, triangulate
from .mesh import PolyMesh, generate
from .system import (
    Discretization,
    NotSPDError,
    Solution,
    SolverError,
    assemble,
    apply_cauchy_bc,
    cholesky_factor,
    solve_cauchy,
    symmetry_defect,
)
from .wgcore import WgConfig

WLAP_DEFINITION = (
    "wlap_err = sqrt(sum_T ||Q0(lap u) - Delta_w u_h||_T^2); equals ||Delta_w(Q_h u - u_h)||_0 "
    "up to the edge flux-projection term, which vanishes for u in P_m"
)


@dataclass(frozen=True)
class ManufacturedSolution:
    name: str
    u: Callable
    grad: Callable
    lap: Callable

    def f(self, k2: float) -> Callable:
        return lambda x, y: self.lap(x, y) + k2 * self.u(x, y)

    def g1(self, x, y):
        return self.u(x, y)

    def g2(self, x, y, nx, ny):
        gx, gy = self.grad(x, y)
        return gx * nx + gy * ny


def solution_s2() -> ManufacturedSolution:
    def w(x, y):
        return 2 * x**3 + y + 1

    return ManufacturedSolution(
        "s2",
        lambda x, y: -w(x, y) ** 2,
        lambda x, y: (-12 * x**2 * w(x, y), -2 * w(x, y)),
        lambda x, y: -24 * x * w(x, y) - 72 * x**4 - 2,
    )


def solution_s3() -> ManufacturedSolution:
    k = 4 * math.pi

    def u(x, y):
        return np.sin(k * x) * np.sin(k * y)

    return ManufacturedSolution(
        "s3",
        u,
        lambda x, y: (k * np.cos(k * x) * np.sin(k * y), k * np.sin(k * x) * np.cos(k * y)),
        lambda x, y: -2 * k * k * u(x, y),
    )


def solution_s5() -> ManufacturedSolution:
    # u = p(y) q(x), p = y^2 - 2y, q = 1 + tanh(20x - 10)
    def p(y):
        return y**2 - 2 * y

    def q(x):
        return 1 + np.tanh(20 * x - 10)

    def dq(x):
        return 20 / np.cosh(20 * x - 10) ** 2

    def ddq(x):
        return -800 * np.tanh(20 * x - 10) / np.cosh(20 * x - 10) ** 2

    return ManufacturedSolution(
        "s5",
        lambda x, y: p(y) * q(x),
        lambda x, y: (p(y) * dq(x), (2 * y - 2) * q(x)),
        lambda x, y: p(y) * ddq(x) + 2 * q(x),
    )


def solution_p1() -> ManufacturedSolution:
    return ManufacturedSolution(
        "p1",
        lambda x, y: 1 + 2 * x - y,
        lambda x, y: (2 + 0 * x, -1 + 0 * y),
        lambda x, y: 0 * x,
    )


def solution_p2() -> ManufacturedSolution:
    return ManufacturedSolution(
        "p2",
        lambda x, y: x**2 + y**2,
        lambda x, y: (2 * x, 2 * y),
        lambda x, y: 4 + 0 * x,
    )


SOLUTIONS = {
    "s2": solution_s2,
    "s3": solution_s3,
    "s5": solution_s5,
    "p1": solution_p1,
    "p2": solution_p2,
}


def get_solution(name: str) -> ManufacturedSolution:
    try:
        return SOLUTIONS[name]()
    except KeyError:
        raise ValueError(f"unknown solution {name!r}; choose from {sorted(SOLUTIONS)}") from None


# -- error norms -------------------------------------------------------------


def _disc(mesh, config, disc):
    return Discretization(mesh, config) if disc is None else disc


def l2_error(u_h: np.ndarray, exact, mesh: PolyMesh, config: WgConfig, disc=None) -> float:
    """||u - u0||_0 with the cell rule of order 2m + 4.  ``exact`` is a field or a solution."""
    disc = _disc(mesh, config, disc)
    u = exact.u if isinstance(exact, ManufacturedSolution) else exact
    nb = disc.dofmap.cell_block
    total = 0.0
    for g in disc.groups:
        pts = disc.cell_points(g)
        uv = np.broadcast_to(np.asarray(u(pts[..., 0], pts[..., 1]), dtype=float), pts.shape[:2])
        uh = u_h[g.dofs[:, :nb]] @ g.geometry.V.T
        total += float(((uv - uh) ** 2 * g.geometry.quad_weights).sum())
    return math.sqrt(total)


def _cell_l2(coeffs: np.ndarray, disc: Discretization) -> float:
    total = 0.0
    for g in disc.groups:
        d = coeffs[g.cells]
        total += float(np.einsum("ci,ij,cj->", d, g.geometry.M, d))
    return math.sqrt(max(total, 0.0))


def weak_laplacian_error(u_h: np.ndarray, exact: ManufacturedSolution, mesh, config, disc=None) -> float:
    disc = _disc(mesh, config, disc)
    return _cell_l2(disc.project_cells(exact.lap) - disc.weak_laplacian(u_h), disc)


def energy_error(u_h: np.ndarray, exact: ManufacturedSolution, mesh, config, disc=None) -> float:
    """|||u_h - Q_h u|||."""
    disc = _disc(mesh, config, disc)
    e = u_h - disc.interpolate(exact.u, exact.grad)
    return math.sqrt(max(disc.quadratic_form(e), 0.0))


def projection_error(exact: ManufacturedSolution, mesh, config, disc=None) -> float:
    """||u - Q0 u||_0 (projection only, no solve)."""
    disc = _disc(mesh, config, disc)
    coeffs = disc.project_cells(exact.u)
    x = np.zeros(disc.dofmap.n_dofs)
    for c in range(mesh.n_cells):
        x[disc.dofmap.v0_dofs(c)] = coeffs[c]
    return l2_error(x, exact, mesh, config, disc)


# -- convergence studies -----------------------------------------------------


def level_to_n(level: int) -> int:
    """Grid G_level has 2^(level-1) macro squares per side (G_1 is one square)."""
    if level < 1:
        raise ValueError("levels start at 1")
    return 2 ** (level - 1)


def rate(coarse: float, fine: float) -> float:
    if coarse <= 0 or fine <= 0:
        return float("nan")
    return math.log2(coarse / fine)


def rates(errors: list[float]) -> list[float | None]:
    return [None] + [rate(a, b) for a, b in zip(errors, errors[1:])]


@dataclass
class ErrorReport:
    grid_level: int
    n_cells: int
    h: float
    l2_err: float
    wlap_err: float
    energy_err: float
    l2_rate: float | None = None
    wlap_rate: float | None = None
    energy_rate: float | None = None
    iterations: int = 0
    residual: float = 0.0
    time_ms: float = 0.0
    method: str = ""
    diag_range: float = float("nan")


def solve_manufactured(mesh, config, solution: ManufacturedSolution, method="auto", tol=1e-10) -> Solution:
    return solve_cauchy(mesh, config, solution.f(config.k2), solution.g1, solution.g2, method=method, tol=tol)


def _level_report(level, mesh, config, solution, method, tol) -> ErrorReport:
    t0 = time.perf_counter()
    sol = solve_manufactured(mesh, config, solution, method=method, tol=tol)
    disc = sol.disc
    rep = ErrorReport(
        grid_level=level,
        n_cells=mesh.n_cells,
        h=mesh.h,
        l2_err=l2_error(sol.x, solution, mesh, config, disc),
        wlap_err=weak_laplacian_error(sol.x, solution, mesh, config, disc),
        energy_err=energy_error(sol.x, solution, mesh, config, disc),
        iterations=sol.report.iterations,
        residual=sol.report.residual,
        method=sol.report.method,
        diag_range=sol.report.diag_range,
    )
    rep.time_ms = 1000 * (time.perf_counter() - t0)
    return rep


class StudyFailure(RuntimeError):
    """A level failed to solve; ``reports`` holds the levels completed before it."""

    def __init__(self, level: int, cause: Exception, reports: list[ErrorReport]):
        super().__init__(f"level {level}: {cause}")
        self.level = level
        self.cause = cause
        self.reports = reports


def _attach_rates(reports: list[ErrorReport]) -> list[ErrorReport]:
    for prev, cur in zip(reports, reports[1:]):
        cur.l2_rate = rate(prev.l2_err, cur.l2_err)
        cur.wlap_rate = rate(prev.wlap_err, cur.wlap_err)
        cur.energy_rate = rate(prev.energy_err, cur.energy_err)
    return reports


def convergence_study(
    solution: ManufacturedSolution,
    mesh_family: str | Callable[[int], PolyMesh],
    levels: list[int],
    config: WgConfig,
    method: str = "auto",
    tol: float = 1e-10,
    threads: int | None = None,
) -> list[ErrorReport]:
    """Solve on each grid level and attach log2 rates between consecutive levels.

    ``mesh_family`` is a mesh kind or a callable n -> mesh.  Levels may run on
    a thread pool (``threads`` or the LSWG_THREADS variable); reports come
    back in level order either way.  A solver failure raises
    :class:`StudyFailure` carrying the reports of the levels before it.
    """
    if isinstance(mesh_family, str):
        kind = mesh_family

        def mesh_family(n):
            return generate(kind, n)

    threads = int(os.environ.get("LSWG_THREADS", "1")) if threads is None else threads

    def work(level):
        try:
            return _level_report(level, mesh_family(level_to_n(level)), config, solution, method, tol)
        except (SolverError, NotSPDError, ArithmeticError) as exc:
            return exc

    if threads > 1 and len(levels) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, levels))
    else:
        results = []
        for level in levels:
            results.append(work(level))
            if isinstance(results[-1], Exception):
                break
    reports: list[ErrorReport] = []
    for level, res in zip(levels, results):
        if isinstance(res, Exception):
            raise StudyFailure(level, res, _attach_rates(reports))
        reports.append(res)
    return _attach_rates(reports)


# -- oracle battery ----------------------------------------------------------


@dataclass
class OracleResult:
    name: str
    value: float
    threshold: float
    detail: str = ""
    gating: bool = True

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.threshold)


@dataclass
class OracleReport:
    results: list[OracleResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results if r.gating)

    def __getitem__(self, name: str) -> OracleResult:
        return next(r for r in self.results if r.name == name)

    def lines(self) -> list[str]:
        return [
            f"{('PASS' if r.passed else 'FAIL') if r.gating else 'INFO'} {r.name}: max violation {r.value:.3e} (threshold {r.threshold:.0e}) {r.detail}".rstrip()
            for r in self.results
        ]


@dataclass(frozen=True)
class Polynomial:
    """sum c_ab x^a y^b with gradient and Laplacian."""

    coeffs: np.ndarray
    degree: int

    @classmethod
    def random(cls, degree: int, rng: np.random.Generator) -> "Polynomial":
        return cls(rng.uniform(-1, 1, len(exponents(degree))), degree)

    def _terms(self):
        return zip(self.coeffs, exponents(self.degree))

    def u(self, x, y):
        return sum(c * x**a * y**b for c, (a, b) in self._terms()) + 0 * x

    def grad(self, x, y):
        gx = sum(c * a * x ** max(a - 1, 0) * y**b for c, (a, b) in self._terms() if a > 0)
        gy = sum(c * b * x**a * y ** max(b - 1, 0) for c, (a, b) in self._terms() if b > 0)
        return gx + 0 * x, gy + 0 * y

    def lap(self, x, y):
        out = 0 * x
        for c, (a, b) in self._terms():
            if a > 1:
                out = out + c * a * (a - 1) * x ** (a - 2) * y**b
            if b > 1:
                out = out + c * b * (b - 1) * x**a * y ** (b - 2)
        return out


def commutativity_defect(disc: Discretization, poly: Polynomial) -> float:
    """max coefficient difference between Delta_w(Q_h w) and Q0(Delta w)."""
    qh = disc.interpolate(poly.u, poly.grad)
    return float(np.abs(disc.weak_laplacian(qh) - disc.project_cells(poly.lap)).max())


def flux_defect(disc: Discretization, grad) -> np.ndarray:
    """Per-cell P_m coefficients of M^-1 <Q_n g - g, psi>_dT with g = grad u . n.

    Fluxes live in P_{m-1}(e) while the weak Laplacian is tested with P_m(T),
    so Delta_w(Q_h u) = Q0(Delta u) + flux_defect; the term vanishes when
    grad u . n has degree <= m - 1 on every edge.
    """
    out = np.empty((disc.mesh.n_cells, disc.dofmap.cell_block))
    for g in disc.groups:
        geo = g.geometry
        rhs = np.zeros((len(g.cells), geo.basis.dim))
        for side in geo.sides:
            pts = disc.mesh.centroids[g.cells][:, None, :] + side.rule.points[None]
            gx, gy = grad(pts[..., 0], pts[..., 1])
            flux = gx * side.normal[0] + gy * side.normal[1]
            w = side.rule.weights
            E = side.Eg
            G = (E * w[:, None]).T @ E
            proj = np.linalg.solve(G, ((flux * w) @ E).T).T @ E.T
            rhs += ((proj - flux) * w) @ side.V
        out[g.cells] = np.linalg.solve(geo.M, rhs.T).T
    return out


def consistency_vector(disc: Discretization, grad) -> np.ndarray:
    """Global vector of v -> sum_T <grad u.n - Q_n(grad u.n), Delta_w v + k^2 v0>_dT."""
    corr = flux_defect(disc, grad)
    out = np.zeros(disc.dofmap.n_dofs)
    k2 = disc.config.k2
    for g in disc.groups:
        geo = g.geometry
        R = geo.residual_map(k2)
        local = -(corr[g.cells] @ geo.M) @ R
        np.add.at(out, g.dofs, local * g.signs)
    return out


def error_equation_residual(
    disc: Discretization,
    solution: ManufacturedSolution,
    sol: Solution | None = None,
    with_consistency: bool = False,
) -> float:
    """Relative size of a(e_h, v) + s(Q_h u, v) over free basis vectors v.

    With ``with_consistency`` the flux-projection term from :func:`consistency_vector`
    is subtracted, which makes the identity exact for any smooth u.
    """
    mesh, config = disc.mesh, disc.config
    if sol is None:
        sol = solve_cauchy(mesh, config, solution.f(config.k2), solution.g1, solution.g2, method="direct", disc=disc)
    A = disc.matrix()
    S = disc.stabilizer_matrix()
    qh = disc.interpolate(solution.u, solution.grad)
    e = sol.x - qh
    free = disc.dofmap.free
    r = A @ e + S @ qh
    if with_consistency:
        r = r - consistency_vector(disc, solution.grad)
    r = r[free]
    scale = abs(A).sum(1).max() * np.abs(e).max() + np.abs(S @ qh).max()
    return float(np.abs(r).max() / scale) if scale > 0 else float(np.abs(r).max())


def exactness_defects(disc: Discretization, solution: ManufacturedSolution) -> dict[str, float]:
    """Errors of the discrete solution for an exact solution inside the discrete space."""
    mesh, config = disc.mesh, disc.config
    sol = solve_cauchy(mesh, config, solution.f(config.k2), solution.g1, solution.g2, method="direct", disc=disc)
    qh = disc.interpolate(solution.u, solution.grad)
    e = sol.x - qh
    norm_qh = math.sqrt(max(disc.quadratic_form(qh), 0.0))
    return {
        "energy": math.sqrt(max(disc.quadratic_form(e), 0.0)) / (1 + norm_qh),
        "l2": l2_error(sol.x, solution, mesh, config, disc),
        "wlap": weak_laplacian_error(sol.x, solution, mesh, config, disc),
    }


def spd_defect(disc: Discretization) -> tuple[float, bool]:
    """(relative asymmetry of the reduced matrix, Cholesky success)."""
    A, b = assemble(disc.mesh, disc.config, None, disc=disc)
    red = apply_cauchy_bc(A, b, disc.dofmap, lambda x, y: 0 * x, lambda x, y, nx, ny: 0 * x, disc=disc)
    try:
        cholesky_factor(red.A)
        ok = True
    except NotSPDError:
        ok = False
    return symmetry_defect(red.A), ok


def commutativity_correction_defect(disc: Discretization, poly: Polynomial) -> float:
    """max |Delta_w(Q_h w) - Q0(Delta w) - flux_defect| for any polynomial w."""
    qh = disc.interpolate(poly.u, poly.grad)
    diff = disc.weak_laplacian(qh) - disc.project_cells(poly.lap) - flux_defect(disc, poly.grad)
    return float(np.abs(diff).max())


def oracle_suite(mesh: PolyMesh, config: WgConfig, n_polys: int = 20, seed: int = 0) -> OracleReport:
    """Commutativity, error equation, polynomial exactness and SPD checks.

    Commutativity is exact for w in P_m; for degrees m + 1 and m + 2 the gap
    must equal the flux-projection term.  The error equation is checked with
    that consistency term included; the uncorrected residual is reported as
    an informational line only.
    """
    rng = np.random.default_rng(seed)
    disc = Discretization(mesh, config)
    report = OracleReport()
    m = config.m
    worst = max(commutativity_defect(disc, Polynomial.random(m, rng)) for _ in range(n_polys))
    report.results.append(OracleResult("commutativity", worst, 1e-9, f"({n_polys} polynomials of degree {m})"))
    worst = max(
        commutativity_correction_defect(disc, Polynomial.random(m + 1 + i % 2, rng)) for i in range(n_polys)
    )
    report.results.append(
        OracleResult("commutativity_flux_term", worst, 1e-9, f"(degrees {m + 1} and {m + 2})")
    )
    s2 = solution_s2()
    sol = solve_cauchy(mesh, config, s2.f(config.k2), s2.g1, s2.g2, method="direct", disc=disc)
    report.results.append(
        OracleResult("error_equation", error_equation_residual(disc, s2, sol, with_consistency=True), 1e-8, "(s2)")
    )
    report.results.append(
        OracleResult(
            "error_equation_uncorrected",
            error_equation_residual(disc, s2, sol),
            1e-8,
            "(s2, without the flux-projection term)",
            gating=False,
        )
    )
    exact = solution_p2() if m >= 2 else solution_p1()
    d = exactness_defects(disc, exact)
    report.results.append(OracleResult("exactness", max(d.values()), 1e-8, f"({exact.name})"))
    asym, ok = spd_defect(disc)
    report.results.append(OracleResult("spd", asym if ok else float("inf"), 1e-12, "" if ok else "(Cholesky failed)"))
    return report


# -- point sampling ----------------------------------------------------------


def reference_samples(p: int) -> np.ndarray:
    """Barycentric sample points strictly inside a triangle split p times per side."""
    if p < 1:
        raise ValueError("at least one sample per cell side is required")
    pts = [((i + 1 / 3) / p, (j + 1 / 3) / p) for i in range(p) for j in range(p - i)]
    return np.array(pts)


def sample_solution(sol: Solution, exact: ManufacturedSolution, points_per_side: int = 3) -> np.ndarray:
    """Rows (x, y, u_h, u_exact, u_h - u_exact) at sample points of every cell."""
    ref = reference_samples(points_per_side)
    disc = sol.disc
    mesh = disc.mesh
    rows = []
    for c in range(mesh.n_cells):
        xy = mesh.cell_vertices(c)
        pts = []
        for i, j, k in triangulate(xy):
            p0, p1, p2 = xy[i], xy[j], xy[k]
            pts.append(p0 + ref[:, :1] * (p1 - p0) + ref[:, 1:] * (p2 - p0))
        pts = np.vstack(pts)
        uh = disc.cell_values(sol.x, c, pts)
        ue = exact.u(pts[:, 0], pts[:, 1])
        rows.append(np.column_stack([pts, uh, ue, uh - ue]))
    return np.vstack(rows)
