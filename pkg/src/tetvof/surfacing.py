"""Turn a frame's water (VOF tets, spray, grid level set) into a triangle mesh."""

from __future__ import annotations

from pathlib import Path

import numba as nb
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from skimage.measure import marching_cubes

from .grid.mac import MacGrid
from .mesh import TetMesh, barycentric_table
from .spray import Particles, radius_from_volume
from .vof.state import WaterState

ATTRACT_BAND = 1.5    # grid cells
ATTRACT_STEP = 0.5    # grid cells
KERNEL_SCALE = 1.4
WET_FILL = 0.5


def vof_samples(state: WaterState, mesh: TetMesh, node_pos: np.ndarray, capacity: np.ndarray,
                n_samples: int = 10):
    """Quadrature points of tets at least half full, each carrying ``water / n``.

    Returns ``(points, volume, spacing)``, one entry per sample.
    """
    fill = np.zeros(len(state.water))
    np.divide(state.water, capacity, out=fill, where=capacity > 0)
    wet = np.flatnonzero(fill >= WET_FILL)
    lam = barycentric_table(n_samples)
    pts = np.einsum("sk,tkd->tsd", lam, node_pos[mesh.tets[wet]]).reshape(-1, 3)
    vol = np.repeat(state.water[wet] / n_samples, n_samples)
    p = node_pos[mesh.tets[wet]]
    tv = np.abs(np.einsum("ij,ij->i", p[:, 1] - p[:, 0],
                          np.cross(p[:, 2] - p[:, 0], p[:, 3] - p[:, 0]))) / 6.0
    spacing = np.repeat(np.cbrt(tv / n_samples), n_samples)
    return pts, vol, spacing


def attract(points: np.ndarray, grid: MacGrid) -> np.ndarray:
    """Move samples near the grid surface toward it by ``min(|phi|, dx/2)``."""
    if len(points) == 0:
        return points
    dx = grid.dx
    phi = grid.sample_phi_water(points)
    near = np.abs(phi) < ATTRACT_BAND * dx
    if not np.any(near):
        return points
    p = points[near]
    h = 0.5 * dx
    grad = np.stack([
        grid.sample_phi_water(p + h * e) - grid.sample_phi_water(p - h * e)
        for e in np.eye(3)], axis=1) / (2 * h)
    norm = np.linalg.norm(grad, axis=1)
    ok = norm > 1e-12
    step = np.minimum(np.abs(phi[near]), ATTRACT_STEP * dx) * np.sign(phi[near])
    move = np.zeros_like(p)
    move[ok] = -(step[ok] / norm[ok])[:, None] * grad[ok]
    out = points.copy()
    out[near] = p + move
    return out


@nb.njit(cache=True)
def _splat(field, centers, radii, origin, h):
    nx, ny, nz = field.shape
    inv = 1.0 / h
    for s in range(centers.shape[0]):
        cx = (centers[s, 0] - origin[0]) * inv
        cy = (centers[s, 1] - origin[1]) * inv
        cz = (centers[s, 2] - origin[2]) * inv
        reach = radii[s] * inv + 2.0
        for i in range(max(int(cx - reach), 0), min(int(cx + reach) + 1, nx)):
            for j in range(max(int(cy - reach), 0), min(int(cy + reach) + 1, ny)):
                for k in range(max(int(cz - reach), 0), min(int(cz + reach) + 1, nz)):
                    d = np.sqrt((i - cx) ** 2 + (j - cy) ** 2 + (k - cz) ** 2) * h - radii[s]
                    if d < field[i, j, k]:
                        field[i, j, k] = d


def surface_field(grid: MacGrid, centers: np.ndarray, radii: np.ndarray, upsample: int = 2):
    """Signed field on a node lattice ``upsample`` times finer than the grid.

    Returns ``(field, spacing)``; node ``(0,0,0)`` sits at the grid origin.
    """
    if upsample < 1:
        raise ValueError("upsample must be >= 1")
    h = grid.dx / upsample
    shape = tuple(int(d) * upsample + 1 for d in grid.dims)
    axes = [grid.origin[a] + h * np.arange(shape[a]) for a in range(3)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    field = grid.sample_phi_water(pts).reshape(shape)
    if len(centers):
        _splat(field, np.ascontiguousarray(centers, dtype=float), np.asarray(radii, dtype=float),
               np.asarray(grid.origin, dtype=float), h)
    # close the surface at the domain walls
    pad = h
    for a in range(3):
        for idx in (0, -1):
            sl = [slice(None)] * 3
            sl[a] = idx
            field[tuple(sl)] = np.maximum(field[tuple(sl)], pad)
    return field, h


def extract(field: np.ndarray, spacing: float, origin) -> tuple[np.ndarray, np.ndarray]:
    """Marching cubes at the zero level.  Empty arrays when nothing is wet."""
    if not (field.min() < 0.0 < field.max()):
        return np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64)
    verts, faces, _, _ = marching_cubes(field, level=0.0, spacing=(spacing,) * 3)
    # skimage winds faces so normals point toward increasing field, i.e. out of the water
    return verts + np.asarray(origin, dtype=float), faces.astype(np.int64)


def write_obj(path, verts: np.ndarray, faces: np.ndarray) -> None:
    with open(path, "w") as fh:
        for v in verts:
            fh.write(f"v {v[0]:.7g} {v[1]:.7g} {v[2]:.7g}\n")
        for f in faces + 1:
            fh.write(f"f {f[0]} {f[1]} {f[2]}\n")


def read_obj(path) -> tuple[np.ndarray, np.ndarray]:
    verts, faces = [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(x.split("/")[0]) - 1 for x in parts[1:4]])
    return np.array(verts, dtype=float).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3)


def surface_frame(grid: MacGrid, particles: Particles, state: WaterState | None = None,
                  mesh: TetMesh | None = None, node_pos=None, capacity=None,
                  n_samples: int = 10, upsample: int = 2):
    """Vertices and faces of the merged water surface of one frame."""
    centers = [particles.position]
    radii = [particles.radius]
    if state is not None:
        pts, vol, spacing = vof_samples(state, mesh, node_pos, capacity, n_samples)
        centers.append(attract(pts, grid))
        radii.append(np.maximum(radius_from_volume(vol), KERNEL_SCALE * spacing))
    field, h = surface_field(grid, np.concatenate(centers), np.concatenate(radii), upsample)
    return extract(field, h, grid.origin)


def euler_characteristics(verts: np.ndarray, faces: np.ndarray) -> list[int]:
    """V - E + F of each connected component of a triangle mesh."""
    if len(faces) == 0:
        return []
    n = len(verts)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    adj = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    _, label = connected_components(adj, directed=False)
    edges = np.unique(np.sort(e, axis=1), axis=0)
    used = np.unique(faces)
    chi = []
    for c in np.unique(label[used]):
        V = int(np.sum(label[used] == c))
        E = int(np.sum(label[edges[:, 0]] == c))
        F = int(np.sum(label[faces[:, 0]] == c))
        chi.append(V - E + F)
    return chi


def frame_paths(run_dir, frame: int) -> dict[str, Path]:
    d = Path(run_dir) / "frames"
    tag = f"{frame:05d}"
    return {"grid": d / f"grid_{tag}.bin", "spray": d / f"spray_{tag}.bin",
            "vof": d / f"vof_{tag}.bin"}
