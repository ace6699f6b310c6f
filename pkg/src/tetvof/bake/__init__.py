from .bakefile import read_bake, write_bake
from .frame import Bake, FrameBake, verify_frame
from .pipeline import BakeInputs, bake_frame, bake_frames, refine
from .precompute import (
    ESCALATION_FANOUT,
    Paint,
    PaintRegion,
    Strand,
    bake_hair,
    build_escalation,
    compute_occupancy,
    compute_ranks,
    deform_directions,
    detect_degenerate,
    extrapolate_surface_data,
    propagate_by_rank,
    rank_order,
    rasterize_adhesion,
)
from .skinning import SkinningConfig, SkinningError, node_velocities, skin_follow


def verify_bake(bake: Bake) -> list[str]:
    """Invariant violations across all frames, prefixed with the frame number."""
    errs = []
    seen = set()
    for i, fb in enumerate(bake.frames):
        if id(fb) in seen:
            continue
        seen.add(id(fb))
        errs += [f"frame {bake.first_frame + i}: {e}" for e in verify_frame(bake.mesh, fb)]
    return errs
