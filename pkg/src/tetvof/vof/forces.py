"""Momentum sources acting on VOF water: adhesion, hair drag, gravity."""

from __future__ import annotations

import numpy as np

from ..bake.frame import FrameBake
from .state import DRY_EPS, WaterState

PARALLEL_DRAG = 0.2  # drag along the hair relative to across it


def adhesion_impulse(water, alpha, phi, direction, dt: float, falloff: float) -> np.ndarray:
    """Per-tet momentum change ``water * alpha * (phi_a - phi)/phi_a * d * dt``."""
    if falloff <= 0:
        raise ValueError("adhesion falloff distance must be positive")
    water = np.asarray(water, dtype=float)
    phi = np.asarray(phi, dtype=float)
    active = (water > DRY_EPS) & (phi >= 0) & (phi < falloff)
    w = np.where(active, (falloff - np.where(active, phi, falloff)) / falloff, 0.0)
    return (water * np.asarray(alpha, dtype=float) * w * dt)[:, None] * np.asarray(direction)


def apply_adhesion(state: WaterState, bake: FrameBake, dt: float, falloff: float) -> WaterState:
    dm = adhesion_impulse(state.water, bake.adhesion_alpha, bake.surf_phi, bake.adhesion_dir,
                          dt, falloff)
    return WaterState(state.water, state.momentum + dm)


def porosity_drag_velocity(u_rel: np.ndarray, hair_dir: np.ndarray, hair_frac: np.ndarray,
                           dt: float, k_drag: float, gamma: float = PARALLEL_DRAG) -> np.ndarray:
    """Velocity change from anisotropic hair drag; never reverses ``u_rel``."""
    u_rel = np.asarray(u_rel, dtype=float)
    par = np.einsum("ij,ij->i", u_rel, hair_dir)[:, None] * hair_dir
    orth = u_rel - par
    c = np.minimum(1.0, dt * k_drag * np.asarray(hair_frac, dtype=float))[:, None]
    return -c * (orth + gamma * par)


def apply_porosity_drag(state: WaterState, bake: FrameBake, dt: float, k_drag: float) -> WaterState:
    if k_drag < 0:
        raise ValueError("k_drag must be non-negative")
    sel = np.flatnonzero((bake.hair_frac > 0) & (state.water > DRY_EPS))
    M = state.momentum.copy()
    if len(sel) and k_drag > 0:
        W = state.water[sel]
        u = M[sel] / W[:, None]
        du = porosity_drag_velocity(u - bake.surf_velocity[sel], bake.hair_dir[sel],
                                    bake.hair_frac[sel], dt, k_drag)
        M[sel] = (u + du) * W[:, None]
    return WaterState(state.water, M)


def apply_external_forces(state: WaterState, gravity, dt: float) -> WaterState:
    g = np.asarray(gravity, dtype=float)
    wet = state.water > DRY_EPS
    M = state.momentum.copy()
    M[wet] += state.water[wet, None] * g * dt
    return WaterState(state.water, M)
