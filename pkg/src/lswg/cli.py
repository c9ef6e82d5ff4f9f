"""Command-line driver: convergence tables, oracle checks, point exports and mesh files.

Exit codes: 0 success, 1 solver failure, 2 input error.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import shlex
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .mesh import GAMMA1, MESH_KINDS, MeshError, PolyMesh, generate, read_mesh, tag_boundary, write_mesh
from .system import SolverError
from .verify import (
    SOLUTIONS,
    WLAP_DEFINITION,
    ErrorReport,
    StudyFailure,
    convergence_study,
    get_solution,
    level_to_n,
    oracle_suite,
    sample_solution,
    solve_manufactured,
)
from .wgcore import WgConfig

EXIT_OK, EXIT_SOLVER, EXIT_INPUT = 0, 1, 2

COLUMNS = [
    "grid_level",
    "n_cells",
    "h",
    "l2_err",
    "l2_rate",
    "wlap_err",
    "wlap_rate",
    "energy_err",
    "cg_iters",
    "residual",
    "time_ms",
]
SOLVERS = ("auto", "cg_jacobi", "direct")


class InputError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    solution: str = "s2"
    k2: float = 10.0
    degree: int = 2
    mesh: str = "tri_uniform"
    levels: list[int] = field(default_factory=lambda: [3, 4, 5])
    solver: str = "auto"
    tol: float = 1e-10
    out: str | None = None
    gamma2: str | None = None

    def validate(self) -> "ExperimentConfig":
        if self.solution not in SOLUTIONS:
            raise InputError(f"unknown solution {self.solution!r}; choose from {', '.join(sorted(SOLUTIONS))}")
        if not (np.isfinite(self.k2) and self.k2 > 0):
            raise InputError("--k2 must be a positive number")
        if self.degree not in (1, 2, 3, 4):
            raise InputError("--degree must be in 1..4")
        if not self.mesh.startswith("file:") and self.mesh not in MESH_KINDS:
            raise InputError(f"unknown mesh {self.mesh!r}; use one of {', '.join(MESH_KINDS)} or file:<path>")
        if not self.levels:
            raise InputError("--levels must list at least one level")
        if any(lv < 1 for lv in self.levels):
            raise InputError("grid levels start at 1")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise InputError("--levels must be strictly increasing")
        if self.mesh.startswith("file:") and len(self.levels) != 1:
            raise InputError("a mesh file is a single grid; pass exactly one level")
        if self.solver not in SOLVERS:
            raise InputError(f"--solver must be one of {', '.join(SOLVERS)}")
        if not (self.tol > 0):
            raise InputError("--tol must be positive")
        if self.gamma2 not in (None, "left", "none"):
            raise InputError("--gamma2 must be 'left' or 'none'")
        return self

    @property
    def wg(self) -> WgConfig:
        return WgConfig(m=self.degree, k2=self.k2)

    def command(self, sub: str = "run", extra: tuple[str, ...] = ()) -> str:
        parts = [
            "lswg",
            sub,
            "--solution", self.solution,
            "--k2", repr(self.k2),
            "--degree", str(self.degree),
            "--mesh", self.mesh,
            "--levels", ",".join(map(str, self.levels)),
            "--solver", self.solver,
            "--tol", repr(self.tol),
        ]
        if self.gamma2 is not None:
            parts += ["--gamma2", self.gamma2]
        return shlex.join(parts + list(extra))


def _retag(mesh: PolyMesh, gamma2: str | None) -> PolyMesh:
    if gamma2 is None:
        return mesh
    if gamma2 == "none":
        tags = mesh.edge_tags.copy()
        tags[mesh.boundary_edges] = GAMMA1
        return mesh.with_tags(tags)
    return tag_boundary(mesh)


def load_mesh(source: str, n: int, gamma2: str | None = None) -> PolyMesh:
    """Generated mesh of a named family, or a mesh file given as ``file:<path>``."""
    if source.startswith("file:"):
        path = source[len("file:"):]
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise InputError(f"cannot read mesh file {path!r}: {exc.strerror}") from None
        return _retag(read_mesh(text), gamma2)
    return _retag(generate(source, n), gamma2)


def _mesh_family(cfg: ExperimentConfig):
    if cfg.mesh.startswith("file:"):
        mesh = load_mesh(cfg.mesh, 0, cfg.gamma2)
        return lambda n: mesh
    return lambda n: load_mesh(cfg.mesh, n, cfg.gamma2)


def _fmt_rate(r: float | None) -> str:
    return "" if r is None or not np.isfinite(r) else f"{r:.1f}"


def report_row(rep: ErrorReport) -> list[str]:
    return [
        str(rep.grid_level),
        str(rep.n_cells),
        f"{rep.h:.6e}",
        f"{rep.l2_err:.6e}",
        _fmt_rate(rep.l2_rate),
        f"{rep.wlap_err:.6e}",
        _fmt_rate(rep.wlap_rate),
        f"{rep.energy_err:.6e}",
        str(rep.iterations),
        f"{rep.residual:.3e}",
        f"{rep.time_ms:.1f}",
    ]


def metadata_lines(cfg: ExperimentConfig, sub: str = "run", extra: tuple[str, ...] = ()) -> list[str]:
    wg = cfg.wg
    return [
        f"# lswg {__version__}",
        f"# command: {cfg.command(sub, extra)}",
        f"# config: solution={cfg.solution} k2={cfg.k2!r} m={cfg.degree} r={wg.r} mesh={cfg.mesh} "
        f"levels={','.join(map(str, cfg.levels))} gamma2={cfg.gamma2 or 'default'}",
        f"# solver: {cfg.solver} tol={cfg.tol!r}",
        f"# quadrature: cell order {wg.cell_order}, edge Gauss points {wg.edge_points}",
        "# grid level L has 2^(L-1) squares per side",
        f"# {WLAP_DEFINITION}",
    ]


def format_table(cfg: ExperimentConfig, reports: list[ErrorReport]) -> str:
    buf = io.StringIO()
    for line in metadata_lines(cfg):
        buf.write(line + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for rep in reports:
        writer.writerow(report_row(rep))
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def run(cfg: ExperimentConfig) -> int:
    cfg.validate()
    family = _mesh_family(cfg)
    solution = get_solution(cfg.solution)
    try:
        reports = convergence_study(solution, family, cfg.levels, cfg.wg, method=cfg.solver, tol=cfg.tol)
    except StudyFailure as exc:
        _emit(format_table(cfg, exc.reports), cfg.out)
        print(f"error: solver failed on {exc}", file=sys.stderr)
        return EXIT_SOLVER
    _emit(format_table(cfg, reports), cfg.out)
    return EXIT_OK


def oracle(cfg: ExperimentConfig, n: int = 2) -> int:
    cfg.validate()
    mesh = load_mesh(cfg.mesh, n, cfg.gamma2)
    try:
        report = oracle_suite(mesh, cfg.wg)
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"# oracle suite: mesh={cfg.mesh} n={n} m={cfg.degree} k2={cfg.k2!r}")
    for line in report.lines():
        print(line)
    return EXIT_OK if report.passed else EXIT_SOLVER


def export(cfg: ExperimentConfig, points_per_side: int = 3) -> int:
    cfg.validate()
    if points_per_side < 1:
        raise InputError("--points-per-side must be at least 1 (empty sample grid)")
    if len(cfg.levels) != 1:
        raise InputError("export needs exactly one level")
    mesh = _mesh_family(cfg)(level_to_n(cfg.levels[0]))
    solution = get_solution(cfg.solution)
    try:
        sol = solve_manufactured(mesh, cfg.wg, solution, method=cfg.solver, tol=cfg.tol)
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    rows = sample_solution(sol, solution, points_per_side)
    buf = io.StringIO()
    for line in metadata_lines(cfg, "export", ("--points-per-side", str(points_per_side))):
        buf.write(line + "\n")
    buf.write("x,y,u_h,u_exact,u_h-u_exact\n")
    for r in rows:
        buf.write(",".join(f"{v:.12e}" for v in r) + "\n")
    _emit(buf.getvalue(), cfg.out)
    return EXIT_OK


def replay(path: str, out: str | None) -> int:
    """Re-run the command recorded in a CSV's ``# command:`` header."""
    try:
        with open(path) as fh:
            header = [line for line in fh if line.startswith("# command:")]
    except OSError as exc:
        raise InputError(f"cannot read {path!r}: {exc.strerror}") from None
    if not header:
        raise InputError(f"{path!r} has no '# command:' metadata line")
    argv = shlex.split(header[0][len("# command:"):])[1:]
    if out is not None:
        argv += ["--out", out]
    return main(argv)


def _levels(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must be comma-separated integers, got {text!r}") from None


def _add_experiment_args(p: argparse.ArgumentParser, levels_default: str) -> None:
    p.add_argument("--solution", default="s2", help="manufactured solution: " + ", ".join(sorted(SOLUTIONS)))
    p.add_argument("--k2", type=float, default=10.0, help="squared wavenumber (default 10)")
    p.add_argument("--degree", type=int, default=2, help="polynomial degree m in 1..4 (default 2)")
    p.add_argument("--mesh", default="tri_uniform", help=f"{' | '.join(MESH_KINDS)} | file:<path>")
    p.add_argument("--levels", type=_levels, default=_levels(levels_default), help="comma-separated grid levels")
    p.add_argument("--solver", default="auto", help="auto (direct up to 20000 unknowns) | cg_jacobi | direct")
    p.add_argument("--tol", type=float, default=1e-10, help="relative residual tolerance for CG")
    p.add_argument("--out", default=None, help="output file (default stdout)")
    p.add_argument("--gamma2", default=None, help="left (x = 0 carries only the flux) | none (all Cauchy)")


def _config(ns: argparse.Namespace) -> ExperimentConfig:
    return ExperimentConfig(
        solution=ns.solution,
        k2=ns.k2,
        degree=ns.degree,
        mesh=ns.mesh,
        levels=ns.levels,
        solver=ns.solver,
        tol=ns.tol,
        out=ns.out,
        gamma2=ns.gamma2,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lswg", description="Least-squares weak Galerkin Helmholtz Cauchy solver")
    parser.add_argument("--version", action="version", version=f"lswg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="convergence table as CSV")
    _add_experiment_args(p, "3,4,5")

    p = sub.add_parser("oracle", help="commutativity, error-equation, exactness and SPD checks")
    _add_experiment_args(p, "1")
    p.add_argument("--n", type=int, default=2, help="squares per side of the generated mesh (default 2)")

    p = sub.add_parser("export", help="point cloud of u_h and u on one grid")
    _add_experiment_args(p, "4")
    p.add_argument("--points-per-side", type=int, default=3, help="samples per triangle side in each cell")

    p = sub.add_parser("mesh", help="write a generated mesh (or re-tag a mesh file) in the text format")
    p.add_argument("--mesh", default="tri_uniform")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--gamma2", default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("replay", help="re-run the command recorded in a CSV header")
    p.add_argument("csv")
    p.add_argument("--out", default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    if "LSWG_THREADS" in os.environ:
        try:
            if int(os.environ["LSWG_THREADS"]) < 1:
                raise ValueError
        except ValueError:
            print("error: LSWG_THREADS must be a positive integer", file=sys.stderr)
            return EXIT_INPUT
    try:
        if ns.command == "run":
            return run(_config(ns))
        if ns.command == "oracle":
            return oracle(_config(ns), ns.n)
        if ns.command == "export":
            return export(_config(ns), ns.points_per_side)
        if ns.command == "replay":
            return replay(ns.csv, ns.out)
        if ns.command == "mesh":
            if ns.n < 1:
                raise InputError("--n must be positive")
            _emit(write_mesh(load_mesh(ns.mesh, ns.n, ns.gamma2)), ns.out)
            return EXIT_OK
    except (InputError, MeshError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    parser.error(f"unknown command {ns.command!r}")
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
