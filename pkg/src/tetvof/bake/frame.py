"""Per-frame baked data and its invariant checker."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..mesh import TetMesh

FRAME_ARRAYS = (
    "node_positions", "node_velocities", "volume", "rank", "solid_frac", "capacity",
    "surf_normal", "surf_velocity", "surf_phi", "esc_offsets", "esc_items", "pocket",
    "adhesion_alpha", "adhesion_dir", "hair_frac", "hair_dir", "disabled",
)


@dataclass(eq=False)
class FrameBake:
    node_positions: np.ndarray
    node_velocities: np.ndarray
    volume: np.ndarray
    rank: np.ndarray
    solid_frac: np.ndarray
    capacity: np.ndarray
    surf_normal: np.ndarray
    surf_velocity: np.ndarray
    surf_phi: np.ndarray
    esc_offsets: np.ndarray
    esc_items: np.ndarray
    pocket: np.ndarray
    adhesion_alpha: np.ndarray
    adhesion_dir: np.ndarray
    hair_frac: np.ndarray
    hair_dir: np.ndarray
    disabled: np.ndarray
    _locator: object = field(default=None, repr=False)

    def escalation(self, t: int) -> np.ndarray:
        return self.esc_items[self.esc_offsets[t]:self.esc_offsets[t + 1]]

    def arrays(self) -> dict:
        return {k: getattr(self, k) for k in FRAME_ARRAYS}

    def locator(self, mesh: TetMesh):
        from ..mesh import PointLocator

        if self._locator is None or self._locator.mesh is not mesh:
            self._locator = PointLocator(mesh, self.node_positions)
        return self._locator

    def centroids(self, mesh: TetMesh) -> np.ndarray:
        return self.node_positions[mesh.tets].mean(axis=1)


@dataclass(eq=False)
class Bake:
    """A mesh plus one :class:`FrameBake` per simulation step boundary.

    Consecutive identical frames may share one object.
    """

    mesh: TetMesh
    frames: list
    frame_dt: float
    first_frame: int = 0

    def frame(self, f: int) -> FrameBake:
        i = f - self.first_frame
        if not 0 <= i < len(self.frames):
            raise ValueError(f"frame {f} is not baked (have {self.first_frame}.."
                           f"{self.first_frame + len(self.frames) - 1})")
        return self.frames[i]

    def time(self, f: int) -> float:
        return f * self.frame_dt

    @property
    def n_frames(self) -> int:
        return len(self.frames)


def verify_frame(mesh: TetMesh, fb: FrameBake, tol: float = 1e-9) -> list[str]:
    """Return human-readable violations of the FrameBake invariants."""
    errs = []
    n = mesh.n_tets
    if fb.node_positions.shape != (mesh.n_nodes, 3):
        errs.append("node_positions has wrong shape")
    if not np.all(np.isfinite(fb.node_positions)):
        errs.append("non-finite node positions")
    for name in ("rank", "solid_frac", "capacity", "hair_frac", "disabled", "adhesion_alpha"):
        if len(getattr(fb, name)) != n:
            errs.append(f"{name} has wrong length")
    if errs:
        return errs
    r, sf, hf = fb.rank, fb.solid_frac, fb.hair_frac
    if np.any(r < -1):
        errs.append("rank below -1")
    if np.any((r == -1) != (sf == 1.0)):
        errs.append("rank -1 does not match solid_frac == 1")
    if np.any((r == 0) != ((sf > 0) & (sf < 1))):
        errs.append("rank 0 does not match 0 < solid_frac < 1")
    if np.any((r >= 1) & (sf != 0)):
        errs.append("rank >= 1 with nonzero solid_frac")
    if np.any((sf < 0) | (sf > 1)) or np.any((hf < 0) | (hf > 1)):
        errs.append("fraction outside [0, 1]")
    if np.any(sf + hf > 1 + tol):
        errs.append("solid_frac + hair_frac exceeds 1")
    expect = np.maximum(fb.volume * (1 - sf - hf), 0.0)
    expect[fb.disabled] = 0.0
    if np.any(np.abs(fb.capacity - expect) > tol * np.maximum(np.abs(fb.volume), 1e-300)):
        errs.append("capacity != volume * (1 - solid_frac - hair_frac)")
    if np.any(fb.capacity[fb.disabled] != 0):
        errs.append("disabled tet with nonzero capacity")
    if np.any(fb.adhesion_alpha < 0):
        errs.append("negative adhesion coefficient")
    nrm = np.linalg.norm(fb.surf_normal, axis=1)
    if np.any(np.abs(nrm - 1) > 1e-9):
        errs.append("surface normals not unit length")
    hd = np.linalg.norm(fb.hair_dir, axis=1)
    if np.any((hf > 0) & (np.abs(hd - 1) > 1e-9)):
        errs.append("hair direction not unit where hair is present")
    # starved tets need escalation targets, a mesh-boundary exit, or a pocket flag
    fnb = mesh.face_neighbors
    nbr_rank = np.where(fnb >= 0, r[np.maximum(fnb, 0)], -2)
    nbr_ok = (fnb >= 0) & ~fb.disabled[np.maximum(fnb, 0)]
    has_higher = np.any(nbr_ok & (nbr_rank > r[:, None]), axis=1)
    esc_len = np.diff(fb.esc_offsets)
    starved = (r >= 0) & ~has_higher & ~fb.disabled
    bad = starved & (esc_len == 0) & ~mesh.boundary_tets & ~fb.pocket
    if np.any(bad):
        errs.append(f"{int(bad.sum())} starved tets without escalation targets")
    return errs
