"""Spray particles carrying water volume and momentum between representations."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numba as nb
import numpy as np

from ._io import FormatError, read_container, write_container
from .vof.state import DRY_EPS, WaterState

log = logging.getLogger(__name__)

FOUR_THIRDS_PI = 4.0 / 3.0 * np.pi


def radius_from_volume(v):
    return np.cbrt(np.asarray(v, dtype=float) / FOUR_THIRDS_PI)


def volume_from_radius(r):
    return FOUR_THIRDS_PI * np.asarray(r, dtype=float) ** 3


def jitter_rng(seed: int) -> np.random.Generator:
    """Counter-based stream: same seed and call sequence give the same jitters."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass
class Particles:
    position: np.ndarray
    velocity: np.ndarray
    radius: np.ndarray
    ids: np.ndarray
    next_id: int = 0

    @classmethod
    def empty(cls) -> "Particles":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.radius)

    @property
    def volume(self) -> np.ndarray:
        return volume_from_radius(self.radius)

    @property
    def total_volume(self) -> float:
        return float(self.volume.sum())

    def momentum(self) -> np.ndarray:
        return (self.volume[:, None] * self.velocity).sum(axis=0)

    def select(self, keep: np.ndarray) -> "Particles":
        return Particles(self.position[keep], self.velocity[keep], self.radius[keep],
                         self.ids[keep], self.next_id)

    def extend(self, other: "Particles") -> "Particles":
        return Particles(np.concatenate([self.position, other.position]),
                         np.concatenate([self.velocity, other.velocity]),
                         np.concatenate([self.radius, other.radius]),
                         np.concatenate([self.ids, other.ids]),
                         max(self.next_id, other.next_id))


def ball_offsets(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    """Uniform samples in a ball."""
    d = rng.standard_normal((n, 3))
    d /= np.maximum(np.linalg.norm(d, axis=1), 1e-300)[:, None]
    r = radius * np.cbrt(rng.random(n))
    return d * r[:, None]


def spawn(volume, momentum, position, normal, jitter_frac: float, max_edge: float,
          rng: np.random.Generator, first_id: int = 0) -> Particles:
    """One particle per ledger entry, jittered inside a ball of radius ``jitter_frac * max_edge``.

    Entries with a nonzero ``normal`` came out through an exterior mesh face and
    are first pushed one jitter radius along it.
    """
    if not 0.0 <= jitter_frac <= 1.0:
        raise ValueError("jitter_frac must lie in [0, 1]")
    volume = np.asarray(volume, dtype=float).reshape(-1)
    momentum = np.asarray(momentum, dtype=float).reshape(-1, 3)
    position = np.asarray(position, dtype=float).reshape(-1, 3)
    normal = np.asarray(normal, dtype=float).reshape(-1, 3)
    ok = volume > 0
    if not np.all(ok):
        log.warning("skipping %d spray entries with non-positive volume", int((~ok).sum()))
        volume, momentum, position, normal = volume[ok], momentum[ok], position[ok], normal[ok]
    n = len(volume)
    jr = jitter_frac * max_edge
    pos = position + normal * jr
    if jr > 0 and n:
        pos = pos + ball_offsets(rng, n, jr)
    vel = momentum / volume[:, None] if n else np.zeros((0, 3))
    ids = np.arange(first_id, first_id + n, dtype=np.int64)
    return Particles(pos, vel, radius_from_volume(volume), ids, first_id + n)


def add_gravity(p: Particles, gravity, dt: float) -> Particles:
    return Particles(p.position, p.velocity + np.asarray(gravity, dtype=float) * dt, p.radius,
                     p.ids, p.next_id)


def move(p: Particles, solid, dt: float, t: float = 0.0) -> Particles:
    """Drift positions by ``v dt`` and resolve solid contact."""
    x = p.position + p.velocity * dt
    v = p.velocity.copy()
    if solid and len(p):
        phi, nrm = solid.query(x, t)
        hit = phi < p.radius
        if np.any(hit):
            x[hit] += (p.radius[hit] - phi[hit])[:, None] * nrm[hit]
            vs = solid.velocity(x[hit], t)
            rel = np.einsum("ij,ij->i", v[hit] - vs, nrm[hit])
            v[hit] -= np.minimum(rel, 0.0)[:, None] * nrm[hit]
    return Particles(x, v, p.radius, p.ids, p.next_id)


def advect_particles(p: Particles, gravity, solid, dt: float, t: float = 0.0) -> Particles:
    """Symplectic Euler: velocity first, then position, then collision."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return move(add_gravity(p, gravity, dt), solid, dt, t)


def reincorporate_to_vof(p: Particles, state: WaterState, mesh, bake):
    """Absorb particles sitting in wet, enabled tets.  Returns ``(particles, state, volume)``."""
    if len(p) == 0:
        return p, state, 0.0
    tet, _ = bake.locator(mesh).locate_many(p.position)
    hit = tet >= 0
    hit[hit] = (state.water[tet[hit]] > DRY_EPS) & ~bake.disabled[tet[hit]]
    if not np.any(hit):
        return p, state, 0.0
    V = p.volume[hit]
    n = len(state.water)
    W = state.water + np.bincount(tet[hit], weights=V, minlength=n)
    M = state.momentum.copy()
    for d in range(3):
        M[:, d] += np.bincount(tet[hit], weights=V * p.velocity[hit, d], minlength=n)
    return p.select(~hit), WaterState(W, M), float(V.sum())


@nb.njit(cache=True, inline="always")
def _corner(g, n):
    g = min(max(g, 0.0), n - 1.0)
    i0 = min(int(np.floor(g)), max(n - 2, 0))
    return i0, g - i0


@nb.njit(cache=True)
def _impulse(a, x, y, z, ox, oy, oz, amount):
    """Spread ``amount`` over the 8 trilinear weights of a staggered array."""
    nx, ny, nz = a.shape
    i0, fx = _corner(x - ox, nx)
    j0, fy = _corner(y - oy, ny)
    k0, fz = _corner(z - oz, nz)
    for c in range(8):
        bi, bj, bk = c & 1, (c >> 1) & 1, (c >> 2) & 1
        w = (fx if bi else 1.0 - fx) * (fy if bj else 1.0 - fy) * (fz if bk else 1.0 - fz)
        a[min(i0 + bi, nx - 1), min(j0 + bj, ny - 1), min(k0 + bk, nz - 1)] += amount * w


@nb.njit(cache=True)
def _expand(a, x, y, z, ox, oy, oz, r_cells, push, axis):
    """Add ``push`` times the outward unit direction component at faces inside the sphere."""
    nx, ny, nz = a.shape
    gx, gy, gz = x - ox, y - oy, z - oz
    for i in range(max(int(np.floor(gx - r_cells)), 0), min(int(np.ceil(gx + r_cells)), nx - 1) + 1):
        for j in range(max(int(np.floor(gy - r_cells)), 0), min(int(np.ceil(gy + r_cells)), ny - 1) + 1):
            for k in range(max(int(np.floor(gz - r_cells)), 0), min(int(np.ceil(gz + r_cells)), nz - 1) + 1):
                dx_, dy_, dz_ = i - gx, j - gy, k - gz
                d = np.sqrt(dx_ * dx_ + dy_ * dy_ + dz_ * dz_)
                if d < r_cells and d > 0.0:
                    comp = dx_ if axis == 0 else (dy_ if axis == 1 else dz_)
                    a[i, j, k] += push * comp / d


@nb.njit(cache=True)
def _merge_into_grid(phi, u, v, w, pos, rad, dp, speed, origin, dx, kappa_exp):
    nx, ny, nz = phi.shape
    inv = 1.0 / dx
    cell_vol = dx * dx * dx
    for p in range(pos.shape[0]):
        x = (pos[p, 0] - origin[0]) * inv
        y = (pos[p, 1] - origin[1]) * inv
        z = (pos[p, 2] - origin[2]) * inv
        r = rad[p]
        halo = 2.0 * r * inv
        # level-set blend over a 2r halo, always including the host cell
        hi_ = min(max(int(np.floor(x)), 0), nx - 1)
        hj = min(max(int(np.floor(y)), 0), ny - 1)
        hk = min(max(int(np.floor(z)), 0), nz - 1)
        i_lo = min(max(int(np.floor(x - 0.5 - halo)), 0), hi_)
        i_hi = max(min(int(np.ceil(x - 0.5 + halo)), nx - 1), hi_)
        j_lo = min(max(int(np.floor(y - 0.5 - halo)), 0), hj)
        j_hi = max(min(int(np.ceil(y - 0.5 + halo)), ny - 1), hj)
        k_lo = min(max(int(np.floor(z - 0.5 - halo)), 0), hk)
        k_hi = max(min(int(np.ceil(z - 0.5 + halo)), nz - 1), hk)
        for i in range(i_lo, i_hi + 1):
            for j in range(j_lo, j_hi + 1):
                for k in range(k_lo, k_hi + 1):
                    ex, ey, ez = i + 0.5 - x, j + 0.5 - y, k + 0.5 - z
                    d = np.sqrt(ex * ex + ey * ey + ez * ez) * dx - r
                    if d <= 2.0 * r or (i == hi_ and j == hj and k == hk):
                        if d < phi[i, j, k]:
                            phi[i, j, k] = d
        _impulse(u, x, y, z, 0.0, 0.5, 0.5, dp[p, 0] / cell_vol)
        _impulse(v, x, y, z, 0.5, 0.0, 0.5, dp[p, 1] / cell_vol)
        _impulse(w, x, y, z, 0.5, 0.5, 0.0, dp[p, 2] / cell_vol)
        if kappa_exp > 0.0:
            push = kappa_exp * speed[p]
            _expand(u, x, y, z, 0.0, 0.5, 0.5, r * inv, push, 0)
            _expand(v, x, y, z, 0.5, 0.0, 0.5, r * inv, push, 1)
            _expand(w, x, y, z, 0.5, 0.5, 0.0, r * inv, push, 2)


def reincorporate_to_grid(p: Particles, grid, kappa_exp: float = 0.0):
    """Merge particles that have landed in grid water.  Returns ``(particles, volume)``.

    The level set is lowered to include each particle's sphere, and the
    particle's momentum relative to the grid is spread over the faces that
    interpolate the velocity at its position.
    """
    if len(p) == 0:
        return p, 0.0
    inside = grid.sample_phi_water(p.position) < 0
    if not np.any(inside):
        return p, 0.0
    pos = np.ascontiguousarray(p.position[inside])
    vp = p.velocity[inside]
    dp = p.volume[inside][:, None] * (vp - grid.sample_velocity(pos))
    _merge_into_grid(grid.phi, grid.u, grid.v, grid.w, pos, p.radius[inside], dp,
                     np.linalg.norm(vp, axis=1), np.asarray(grid.origin, dtype=float), grid.dx,
                     float(kappa_exp))
    absorbed = float(p.volume[inside].sum())
    return p.select(~inside), absorbed


MAGIC = b"TVSP"
VERSION = 1


def write_particles(path, p: Particles, frame: int = 0) -> None:
    write_container(path, MAGIC, VERSION, [(b"PART", {
        "frame": np.int64(frame), "position": p.position, "velocity": p.velocity,
        "radius": p.radius, "ids": p.ids, "next_id": np.int64(p.next_id),
    })])


def read_particles(path) -> tuple[Particles, int]:
    _, chunks = read_container(path, MAGIC, (VERSION,))
    if not chunks or chunks[0][0] != b"PART":
        raise FormatError(f"{path}: missing PART chunk")
    a = chunks[0][1]
    return (Particles(a["position"], a["velocity"], a["radius"], a["ids"], int(a["next_id"])),
            int(a["frame"]))
