from .advection import advect, clamp_trace
from .conservation import MAX_SWEEPS, boundary_face_frames, pushout, smear, velocity_correction
from .forces import (
    PARALLEL_DRAG,
    adhesion_impulse,
    apply_adhesion,
    apply_external_forces,
    apply_porosity_drag,
    porosity_drag_velocity,
)
from .state import DRY_EPS, TransferLedger, WaterState, read_state, remove_dust, write_state

__all__ = [
    "DRY_EPS", "MAX_SWEEPS", "PARALLEL_DRAG", "TransferLedger", "WaterState", "adhesion_impulse",
    "advect", "apply_adhesion", "apply_external_forces", "apply_porosity_drag",
    "boundary_face_frames", "clamp_trace", "porosity_drag_velocity", "pushout", "read_state",
    "remove_dust", "smear", "velocity_correction", "write_state",
]
