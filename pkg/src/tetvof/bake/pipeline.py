"""Frame baking: skin the coarse mesh, refine, precompute per-frame data."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..mesh import SolidField, TetMesh, subdivide, subdivide_positions, tet_volumes
from .frame import Bake, FrameBake
from .precompute import (
    bake_hair,
    build_escalation,
    compute_occupancy,
    compute_ranks,
    deform_directions,
    detect_degenerate,
    extrapolate_surface_data,
    rasterize_adhesion,
)
from .skinning import SkinningConfig, node_velocities, skin_follow

log = logging.getLogger(__name__)


@dataclass
class BakeInputs:
    coarse_mesh: TetMesh
    coarse_rest: np.ndarray
    subdivisions: int
    solid: SolidField
    frame_dt: float
    occupancy_samples: int = 20
    skinning: dict = field(default_factory=dict)
    paint: list = field(default_factory=list)
    strands: list = field(default_factory=list)


def refine(inputs: BakeInputs):
    """Refined topology, rest positions, and the coarse mesh chain used to refine frames."""
    chain = []
    mesh, pos = inputs.coarse_mesh, inputs.coarse_rest
    for _ in range(inputs.subdivisions):
        chain.append(mesh)
        mesh, pos = subdivide(mesh, pos)
    return mesh, pos, chain


def _refine_frame(chain, edges, pos):
    for m, e in zip(chain, edges):
        pos = subdivide_positions(m, pos, e)
    return pos


def bake_frame(mesh: TetMesh, pos, vel, t: float, inputs: BakeInputs, hair_frac, hair_dir_rest,
               rest_pos, disabled) -> FrameBake:
    solid = inputs.solid
    vol = tet_volumes(mesh.tets, pos)
    sf = compute_occupancy(mesh, pos, solid, inputs.occupancy_samples, t)
    rank = compute_ranks(mesh, sf)
    offsets, items, pocket = build_escalation(mesh, rank, disabled)
    normal, svel, phi = extrapolate_surface_data(mesh, rank, solid, pos, t)
    alpha, adir = rasterize_adhesion(mesh, rank, pos, solid, inputs.paint, t)
    hf = np.minimum(hair_frac, 1.0 - sf)
    hdir = deform_directions(mesh, rest_pos, pos, hair_dir_rest)
    hdir[hf == 0] = 0.0
    cap = np.maximum(vol * (1.0 - sf - hf), 0.0)
    cap[disabled] = 0.0
    return FrameBake(
        node_positions=pos, node_velocities=vel, volume=vol, rank=rank, solid_frac=sf,
        capacity=cap, surf_normal=normal, surf_velocity=svel, surf_phi=phi,
        esc_offsets=offsets, esc_items=items, pocket=pocket, adhesion_alpha=alpha,
        adhesion_dir=adir, hair_frac=hf, hair_dir=hdir, disabled=disabled,
    )


def bake_frames(inputs: BakeInputs, first: int, last: int) -> Bake:
    """Bake frames ``first .. last`` inclusive (frame ``f`` is time ``f * frame_dt``)."""
    if last < first:
        raise ValueError("empty frame range")
    mesh, rest, chain = refine(inputs)
    edges = [m.edges() for m in chain]
    cfg = SkinningConfig(driver=inputs.solid, frame_dt=inputs.frame_dt, **inputs.skinning)
    n = last + 2
    coarse = skin_follow(inputs.coarse_mesh, inputs.coarse_rest, cfg, n)
    static = not inputs.solid or inputs.solid.is_static
    if static:
        fine = [rest] * n
    else:
        fine = [_refine_frame(chain, edges, p) for p in coarse]
    vel = node_velocities(fine, inputs.frame_dt)
    disabled = detect_degenerate(mesh, fine[first:last + 1])
    hair_frac, hair_dir = bake_hair(mesh, rest, inputs.strands)

    frames = []
    prev = None
    for i, f in enumerate(range(first, last + 1)):
        if (static and prev is not None and np.array_equal(vel[f], prev.node_velocities)):
            frames.append(prev)
            continue
        fb = bake_frame(mesh, fine[f], vel[f], f * inputs.frame_dt, inputs, hair_frac, hair_dir,
                        rest, disabled[i])
        frames.append(fb)
        prev = fb
    log.info("baked frames %d..%d: %d tets, %d unique frames", first, last, mesh.n_tets,
             len({id(x) for x in frames}))
    return Bake(mesh=mesh, frames=frames, frame_dt=inputs.frame_dt, first_frame=first)
