"""vesiflow: 2D phase-field simulation of vesicles in incompressible flow.

Multiple vesicles are tracked by phase fields and coupled to a viscous,
incompressible flow with wall slip and wall relaxation boundary conditions.
Cell-cell and cell-wall contact forces derive from a repulsive/attractive
interaction potential; membrane bending, global surface-area penalties and an
optional local inextensibility multiplier complete the energetics.  Time
stepping uses a midpoint scheme whose discrete energy balance is evaluated and
reported every step.
"""

import os as _os

# honor the assembly-parallelism cap before numpy is first imported
_threads = _os.environ.get("VESIFLOW_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .params import (
    EnergyLedger,
    ParameterError,
    ParameterSet,
    SystemState,
    parameter_violations,
    validate_parameters,
)
from .meshing import Mesh, build_rect_mesh, build_y_channel_mesh, read_mesh, write_mesh
from .fem import FunctionSpace, QuadratureRule, VectorSpace, assemble_bilinear, assemble_boundary, interpolate

__version__ = "0.1.0"

__all__ = [
    "EnergyLedger",
    "FunctionSpace",
    "Mesh",
    "ParameterError",
    "ParameterSet",
    "QuadratureRule",
    "SystemState",
    "VectorSpace",
    "assemble_bilinear",
    "assemble_boundary",
    "build_rect_mesh",
    "build_y_channel_mesh",
    "interpolate",
    "parameter_violations",
    "read_mesh",
    "validate_parameters",
    "write_mesh",
]
