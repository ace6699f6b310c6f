"""Momentum and volume exchange between the tet mesh and the background grid."""

from __future__ import annotations

import numpy as np

from .bake.frame import FrameBake
from .grid.mac import MacGrid
from .mesh import TetMesh
from .vof.state import DRY_EPS, WaterState


def transfer_vof_to_grid(state: WaterState, mesh: TetMesh, bake: FrameBake, grid: MacGrid,
                         beta: float) -> MacGrid:
    """Blend wet-tet velocities into the grid faces whose centers they contain."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    g = grid.copy()
    if beta == 0.0 or not np.any(state.water > DRY_EPS):
        return g
    vel = state.velocity()
    wet = state.water > DRY_EPS
    lo = bake.node_positions.min(axis=0)
    hi = bake.node_positions.max(axis=0)
    loc = bake.locator(mesh)
    for ax, a in enumerate((g.u, g.v, g.w)):
        fc = g.face_centers(ax)
        cand = np.flatnonzero(np.all((fc >= lo) & (fc <= hi), axis=1))
        if len(cand) == 0:
            continue
        tet, _ = loc.locate_many(fc[cand])
        ok = tet >= 0
        ok[ok] = wet[tet[ok]]
        flat = a.reshape(-1)
        sel = cand[ok]
        flat[sel] = (1.0 - beta) * flat[sel] + beta * vel[tet[ok], ax]
    return g


def submerged_tets(mesh: TetMesh, bake: FrameBake, grid: MacGrid) -> np.ndarray:
    """Tets eligible for overwrite: rank >= 1, enabled, all four nodes in grid water."""
    node_wet = grid.sample_phi_water(bake.node_positions) < 0
    return np.all(node_wet[mesh.tets], axis=1) & (bake.rank >= 1) & ~bake.disabled


def transfer_grid_to_vof(state: WaterState, mesh: TetMesh, bake: FrameBake,
                         grid: MacGrid) -> tuple[WaterState, float]:
    """Saturate submerged tets with grid velocity.  Returns ``(state, volume delta)``."""
    sel = np.flatnonzero(submerged_tets(mesh, bake, grid))
    if len(sel) == 0:
        return state, 0.0
    assert np.all(bake.rank[sel] >= 1) and not np.any(bake.disabled[sel])
    W = state.water.copy()
    M = state.momentum.copy()
    cap = bake.capacity[sel]
    delta = float(cap.sum() - W[sel].sum())
    u = grid.sample_velocity(bake.node_positions[mesh.tets[sel]].mean(axis=1))
    W[sel] = cap
    M[sel] = cap[:, None] * u
    return WaterState(W, M), delta
