"""Make the mesh follow an animated driver.

Nodes inside the driver at rest ride along kinematically with the primitive
that owns them.  Every exterior node starts from the rigid motion of its
closest primitive and is then relaxed by damped pseudo-dynamics on a
mass-spring network (mesh edges at rest length, plus zero-length
attachments pulling skin-adjacent nodes toward their driver targets).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mesh import SolidField, TetMesh


class SkinningError(RuntimeError):
    pass


@dataclass
class SkinningConfig:
    driver: SolidField
    frame_dt: float
    stiffness: float = 1.0e3
    damping: float = 20.0
    attachment_stiffness: float = 5.0e3
    iterations: int = 40
    dt_sub: float = 5.0e-3

    def __post_init__(self):
        if not (self.stiffness > 0 and self.attachment_stiffness > 0):
            raise ValueError("spring stiffnesses must be positive")
        if self.damping < 0:
            raise ValueError("damping must be non-negative")


def _rigid_targets(driver: SolidField, rest: np.ndarray, owner: np.ndarray, t: float) -> np.ndarray:
    out = rest.copy()
    for i, prim in enumerate(driver.primitives):
        sel = owner == i
        if np.any(sel):
            out[sel] = prim.from_rest(prim.to_rest(rest[sel], 0.0), t)
    return out


def skin_follow(mesh: TetMesh, rest: np.ndarray, cfg: SkinningConfig, frames: int) -> list[np.ndarray]:
    """Node positions for frames ``0 .. frames-1`` at ``t = f * cfg.frame_dt``."""
    rest = np.asarray(rest, dtype=float)
    driver = cfg.driver
    if not driver or driver.is_static:
        return [rest.copy() for _ in range(frames)]

    owner = driver.owner(rest, 0.0)
    interior = driver.phi(rest, 0.0) < 0
    edges = mesh.edges()
    e0, e1 = edges[:, 0], edges[:, 1]
    rest_len = np.linalg.norm(rest[e1] - rest[e0], axis=1)
    cross = interior[e0] != interior[e1]
    skin = np.zeros(mesh.n_nodes, dtype=bool)
    skin[e0[cross & ~interior[e0]]] = True
    skin[e1[cross & ~interior[e1]]] = True
    free = ~interior

    out = []
    for f in range(frames):
        t = f * cfg.frame_dt
        target = _rigid_targets(driver, rest, owner, t)
        x = target.copy()
        v = np.zeros_like(x)
        for _ in range(cfg.iterations):
            d = x[e1] - x[e0]
            length = np.linalg.norm(d, axis=1)
            dirn = d / np.maximum(length, 1e-300)[:, None]
            fs = (cfg.stiffness * (length - rest_len))[:, None] * dirn
            force = np.zeros_like(x)
            np.add.at(force, e0, fs)
            np.add.at(force, e1, -fs)
            force[skin] += cfg.attachment_stiffness * (target[skin] - x[skin])
            force -= cfg.damping * v
            v[free] += cfg.dt_sub * force[free]
            x[free] += cfg.dt_sub * v[free]
        if not np.all(np.isfinite(x)):
            raise SkinningError(f"non-finite node positions after relaxation in frame {f}")
        out.append(x)
    return out


def node_velocities(frames: list, frame_dt: float) -> list[np.ndarray]:
    """Backward differences; the first frame uses a forward difference."""
    if len(frames) < 2:
        raise ValueError("node velocities need at least two frames")
    vel = [(frames[1] - frames[0]) / frame_dt]
    for f in range(1, len(frames)):
        vel.append((frames[f] - frames[f - 1]) / frame_dt)
    return vel
