"""Least-squares weak Galerkin solver for the Helmholtz Cauchy problem on polygonal meshes.

Modules:

* :mod:`lswg.mesh` - polygonal meshes, boundary tags, generators and a text format
* :mod:`lswg.approx` - bases, polygon quadrature and L2 projections
* :mod:`lswg.wgcore` - local weak Laplacian, stabilizer and least-squares matrices
* :mod:`lswg.system` - global assembly, Cauchy data elimination and solvers
* :mod:`lswg.verify` - manufactured solutions, error norms, rates and oracles
* :mod:`lswg.cli` - command-line driver
"""

__version__ = "0.1.0"

from .mesh import PolyMesh, build_mesh, generate, read_mesh, write_mesh  # noqa: E402
from .system import Discretization, solve_cauchy  # noqa: E402
from .wgcore import WgConfig  # noqa: E402

__all__ = [
    "Discretization",
    "PolyMesh",
    "WgConfig",
    "build_mesh",
    "generate",
    "read_mesh",
    "solve_cauchy",
    "write_mesh",
    "__version__",
]
