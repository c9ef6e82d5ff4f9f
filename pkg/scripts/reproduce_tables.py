"""Regenerate the convergence tables for s2, s3 and s5 with m = 2, 3, 4.

Each table has four blocks (triangular and pentagon meshes, k2 = 10 and
1e6); every block is written as a self-describing CSV through the CLI, so
any file can be re-run later with ``lswg replay``.

    python3 scripts/reproduce_tables.py --out tables/
"""

import argparse
import sys
from pathlib import Path

from lswg.cli import main as lswg_main

LEVELS = {2: "4,5,6", 3: "3,4,5", 4: "3,4,5"}
BLOCKS = [("tri_uniform", "10"), ("tri_uniform", "1e6"), ("pentagon", "10"), ("pentagon", "1e6")]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="tables", help="output directory")
    ap.add_argument("--solutions", default="s2,s3,s5")
    ap.add_argument("--degrees", default="2,3,4")
    ap.add_argument("--solver", default="direct", help="auto | cg_jacobi | direct")
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    status = 0
    for sol in args.solutions.split(","):
        for m in map(int, args.degrees.split(",")):
            for mesh, k2 in BLOCKS:
                path = out / f"{sol}_m{m}_{mesh}_k2_{k2}.csv"
                code = lswg_main(
                    ["run", "--solution", sol, "--degree", str(m), "--mesh", mesh, "--k2", k2,
                     "--levels", LEVELS[m], "--solver", args.solver, "--out", str(path)]
                )
                print(f"{path}: exit {code}")
                status = max(status, code)
    return status


if __name__ == "__main__":
    sys.exit(main())
