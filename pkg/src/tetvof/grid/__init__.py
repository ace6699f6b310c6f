from .advection import advect_levelset, advect_velocity, apply_markers, reinitialize, seed_markers
from .mac import MacGrid, heaviside, read_grid, write_grid
from .projection import (
    ProjectionError,
    SolidFaces,
    divergence,
    enforce_solid_velocity,
    extrapolate_velocity,
    pressure_matrix,
    project,
    solid_faces,
    update_solid,
)
from .sources import Inlet, apply_gravity, apply_inlet

__all__ = [
    "Inlet", "MacGrid", "ProjectionError", "SolidFaces", "advect_levelset", "advect_velocity",
    "apply_gravity", "apply_inlet", "apply_markers", "divergence", "enforce_solid_velocity",
    "extrapolate_velocity", "heaviside", "pressure_matrix", "project", "read_grid",
    "reinitialize", "seed_markers", "solid_faces", "update_solid", "write_grid",
]
