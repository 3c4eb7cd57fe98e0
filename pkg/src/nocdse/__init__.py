"""Design space exploration for 3D NoC heterogeneous manycore platforms."""

__version__ = "0.1.0"

from .moela import RunConfig, run_ls_only, run_moead, run_moela
from .problem import Design, PlatformSpec, ProblemInstance

__all__ = [
    "Design",
    "PlatformSpec",
    "ProblemInstance",
    "RunConfig",
    "run_moela",
    "run_moead",
    "run_ls_only",
]
