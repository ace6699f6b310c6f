"""Staggered MAC grid storage, trilinear sampling and dumps."""

from __future__ import annotations

from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .._io import FormatError, read_container, write_container

# index-space offset of each stored field relative to the grid origin
U_OFF = (0.0, 0.5, 0.5)
V_OFF = (0.5, 0.0, 0.5)
W_OFF = (0.5, 0.5, 0.0)
C_OFF = (0.5, 0.5, 0.5)


@nb.njit(cache=True, inline="always")
def _lerp_index(g, n):
    if g < 0.0:
        g = 0.0
    hi = n - 1
    if g > hi:
        g = float(hi)
    i = int(np.floor(g))
    if i >= hi:
        i = hi - 1 if hi > 0 else 0
    f = g - i
    if hi == 0:
        f = 0.0
    return i, f


@nb.njit(cache=True)
def trilinear(a, gx, gy, gz):
    """Sample ``a`` at fractional index ``(gx, gy, gz)``, clamped to the array."""
    nx, ny, nz = a.shape
    i, fx = _lerp_index(gx, nx)
    j, fy = _lerp_index(gy, ny)
    k, fz = _lerp_index(gz, nz)
    i1 = min(i + 1, nx - 1)
    j1 = min(j + 1, ny - 1)
    k1 = min(k + 1, nz - 1)
    c00 = a[i, j, k] * (1 - fx) + a[i1, j, k] * fx
    c10 = a[i, j1, k] * (1 - fx) + a[i1, j1, k] * fx
    c01 = a[i, j, k1] * (1 - fx) + a[i1, j, k1] * fx
    c11 = a[i, j1, k1] * (1 - fx) + a[i1, j1, k1] * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    return c0 * (1 - fz) + c1 * fz


@nb.njit(cache=True, inline="always")
def sample_vel(u, v, w, x, y, z, inv_dx):
    """Velocity at a point given in grid-local coordinates (origin subtracted)."""
    gx = x * inv_dx
    gy = y * inv_dx
    gz = z * inv_dx
    return (trilinear(u, gx, gy - 0.5, gz - 0.5),
            trilinear(v, gx - 0.5, gy, gz - 0.5),
            trilinear(w, gx - 0.5, gy - 0.5, gz))


@nb.njit(cache=True, parallel=True)
def _sample_field(a, pts, origin, inv_dx, off):
    n = pts.shape[0]
    out = np.empty(n)
    for p in nb.prange(n):
        out[p] = trilinear(a, (pts[p, 0] - origin[0]) * inv_dx - off[0],
                           (pts[p, 1] - origin[1]) * inv_dx - off[1],
                           (pts[p, 2] - origin[2]) * inv_dx - off[2])
    return out


@dataclass(eq=False)
class MacGrid:
    """Background Eulerian state.

    ``u, v, w`` live on x/y/z faces with shapes ``(nx+1, ny, nz)`` etc.;
    ``phi`` (water, negative inside), ``solid_phi`` and ``pressure`` are
    cell-centered.  ``markers`` optionally holds water-side marker particles
    as ``(positions, radii)``.
    """

    dims: tuple
    dx: float
    origin: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    phi: np.ndarray
    solid_phi: np.ndarray
    pressure: np.ndarray
    markers: tuple | None = field(default=None)

    @classmethod
    def create(cls, dims, dx: float, origin=(0.0, 0.0, 0.0)) -> "MacGrid":
        nx, ny, nz = (int(d) for d in dims)
        if min(nx, ny, nz) < 2 or dx <= 0:
            raise ValueError("grid needs at least 2 cells per axis and dx > 0")
        return cls(
            dims=(nx, ny, nz), dx=float(dx), origin=np.asarray(origin, dtype=float),
            u=np.zeros((nx + 1, ny, nz)), v=np.zeros((nx, ny + 1, nz)), w=np.zeros((nx, ny, nz + 1)),
            phi=np.full((nx, ny, nz), 3.0 * dx * max(nx, ny, nz)),
            solid_phi=np.full((nx, ny, nz), np.inf), pressure=np.zeros((nx, ny, nz)),
        )

    def copy(self) -> "MacGrid":
        m = None
        if self.markers is not None:
            m = (self.markers[0].copy(), self.markers[1].copy())
        return MacGrid(self.dims, self.dx, self.origin.copy(), self.u.copy(), self.v.copy(),
                       self.w.copy(), self.phi.copy(), self.solid_phi.copy(),
                       self.pressure.copy(), m)

    @property
    def upper(self) -> np.ndarray:
        return self.origin + np.asarray(self.dims) * self.dx

    def cell_centers(self) -> np.ndarray:
        idx = np.indices(self.dims).reshape(3, -1).T
        return self.origin + (idx + 0.5) * self.dx

    def face_centers(self, axis: int) -> np.ndarray:
        shape = [*self.dims]
        shape[axis] += 1
        off = np.full(3, 0.5)
        off[axis] = 0.0
        idx = np.indices(shape).reshape(3, -1).T
        return self.origin + (idx + off) * self.dx

    def faces(self, axis: int) -> np.ndarray:
        return (self.u, self.v, self.w)[axis]

    def _sample(self, a, off, points):
        pts = np.ascontiguousarray(points, dtype=float).reshape(-1, 3)
        return _sample_field(a, pts, self.origin, 1.0 / self.dx, np.asarray(off))

    def sample_velocity(self, points) -> np.ndarray:
        return np.stack([self._sample(self.u, U_OFF, points), self._sample(self.v, V_OFF, points),
                         self._sample(self.w, W_OFF, points)], axis=1)

    def sample_phi_water(self, points) -> np.ndarray:
        return self._sample(self.phi, C_OFF, points)

    def sample_phi_solid(self, points) -> np.ndarray:
        return self._sample(self.solid_phi, C_OFF, points)

    def water_volume(self) -> float:
        """Smoothed-Heaviside integral of the water region."""
        return float(heaviside(-self.phi, self.dx).sum() * self.dx ** 3)

    def face_momentum(self) -> np.ndarray:
        """Sum of face velocities times cell volume, per axis (unit density)."""
        return np.array([a.sum() for a in (self.u, self.v, self.w)]) * self.dx ** 3


def heaviside(x, eps: float):
    """Smoothed step: 0 below ``-eps``, 1 above ``eps``."""
    x = np.asarray(x, dtype=float)
    out = np.where(x > eps, 1.0, 0.0)
    band = np.abs(x) <= eps
    xb = x[band]
    out[band] = 0.5 * (1.0 + xb / eps + np.sin(np.pi * xb / eps) / np.pi)
    return out


MAGIC = b"TVGR"
VERSION = 1


def write_grid(path, grid: MacGrid, frame: int = 0) -> None:
    arrays = {
        "frame": np.int64(frame), "dims": np.asarray(grid.dims, dtype=np.int64),
        "dx": np.float64(grid.dx), "origin": grid.origin, "u": grid.u, "v": grid.v, "w": grid.w,
        "phi": grid.phi, "solid_phi": grid.solid_phi, "pressure": grid.pressure,
    }
    write_container(path, MAGIC, VERSION, [(b"GRID", arrays)])


def read_grid(path) -> tuple[MacGrid, int]:
    _, chunks = read_container(path, MAGIC, (VERSION,))
    if not chunks or chunks[0][0] != b"GRID":
        raise FormatError(f"{path}: missing GRID chunk")
    a = chunks[0][1]
    g = MacGrid(tuple(int(d) for d in a["dims"]), float(a["dx"]), a["origin"], a["u"], a["v"],
                a["w"], a["phi"], a["solid_phi"], a["pressure"])
    return g, int(a["frame"])
