"""Semi-Lagrangian advection, level-set reinitialization, marker touch-up."""

from __future__ import annotations

import numba as nb
import numpy as np

from .mac import MacGrid, sample_vel, trilinear

GRAD_LO, GRAD_HI = 1.0, 1.0


@nb.njit(cache=True, inline="always")
def _backtrace(u, v, w, x, y, z, dt, inv_dx):
    a, b, c = sample_vel(u, v, w, x, y, z, inv_dx)
    xm, ym, zm = x - 0.5 * dt * a, y - 0.5 * dt * b, z - 0.5 * dt * c
    a, b, c = sample_vel(u, v, w, xm, ym, zm, inv_dx)
    return x - dt * a, y - dt * b, z - dt * c


@nb.njit(cache=True, parallel=True)
def _advect_field(q, u, v, w, dt, dx, ox, oy, oz):
    """Advect a field whose sample ``(i,j,k)`` sits at ``((i,j,k) + o) * dx``."""
    nx, ny, nz = q.shape
    out = np.empty_like(q)
    inv = 1.0 / dx
    for i in nb.prange(nx):
        for j in range(ny):
            for k in range(nz):
                x, y, z = _backtrace(u, v, w, (i + ox) * dx, (j + oy) * dx, (k + oz) * dx, dt, inv)
                out[i, j, k] = trilinear(q, x * inv - ox, y * inv - oy, z * inv - oz)
    return out


def advect_velocity(grid: MacGrid, dt: float) -> MacGrid:
    """RK2 backtrace of every face velocity through the old field."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    g = grid.copy()
    dx = grid.dx
    g.u = _advect_field(grid.u, grid.u, grid.v, grid.w, dt, dx, 0.0, 0.5, 0.5)
    g.v = _advect_field(grid.v, grid.u, grid.v, grid.w, dt, dx, 0.5, 0.0, 0.5)
    g.w = _advect_field(grid.w, grid.u, grid.v, grid.w, dt, dx, 0.5, 0.5, 0.0)
    return g


@nb.njit(cache=True)
def _advect_points(pts, u, v, w, dt, origin, dx):
    inv = 1.0 / dx
    for p in range(pts.shape[0]):
        x = pts[p, 0] - origin[0]
        y = pts[p, 1] - origin[1]
        z = pts[p, 2] - origin[2]
        a, b, c = sample_vel(u, v, w, x, y, z, inv)
        a, b, c = sample_vel(u, v, w, x + 0.5 * dt * a, y + 0.5 * dt * b, z + 0.5 * dt * c, inv)
        pts[p, 0] += dt * a
        pts[p, 1] += dt * b
        pts[p, 2] += dt * c


@nb.njit(cache=True, inline="always")
def _slope(a, c, span):
    return (c - a) / max(span, 1)


@nb.njit(cache=True)
def _interface_fix(phi0, dx):
    """Subcell interface distance for cells whose sign differs from a neighbor."""
    nx, ny, nz = phi0.shape
    near = np.zeros(phi0.shape, dtype=np.bool_)
    dist = np.zeros(phi0.shape)
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                p = phi0[i, j, k]
                flag = False
                if i > 0 and p * phi0[i - 1, j, k] <= 0: flag = True
                if i < nx - 1 and p * phi0[i + 1, j, k] <= 0: flag = True
                if j > 0 and p * phi0[i, j - 1, k] <= 0: flag = True
                if j < ny - 1 and p * phi0[i, j + 1, k] <= 0: flag = True
                if k > 0 and p * phi0[i, j, k - 1] <= 0: flag = True
                if k < nz - 1 and p * phi0[i, j, k + 1] <= 0: flag = True
                if not flag:
                    continue
                i0, i1 = max(i - 1, 0), min(i + 1, nx - 1)
                j0, j1 = max(j - 1, 0), min(j + 1, ny - 1)
                k0, k1 = max(k - 1, 0), min(k + 1, nz - 1)
                gx = _slope(phi0[i0, j, k], phi0[i1, j, k], i1 - i0)
                gy = _slope(phi0[i, j0, k], phi0[i, j1, k], j1 - j0)
                gz = _slope(phi0[i, j, k0], phi0[i, j, k1], k1 - k0)
                g = np.sqrt(gx * gx + gy * gy + gz * gz) / dx
                if g < 1e-12:
                    continue
                near[i, j, k] = True
                # leave healthy distance values alone so the interface cannot creep
                dist[i, j, k] = p if GRAD_LO <= g <= GRAD_HI else p / g
    return near, dist


@nb.njit(cache=True, inline="always")
def _godunov(a, b, s):
    # a = backward difference, b = forward difference, s = sign of phi0
    if s > 0:
        ap = max(a, 0.0)
        bm = min(b, 0.0)
        return max(ap * ap, bm * bm)
    am = min(a, 0.0)
    bp = max(b, 0.0)
    return max(am * am, bp * bp)


@nb.njit(cache=True, parallel=True)
def _reinit_sweep(phi, phi0, near, dist, dx, dtau):
    nx, ny, nz = phi.shape
    out = np.empty_like(phi)
    inv = 1.0 / dx
    for i in nb.prange(nx):
        for j in range(ny):
            for k in range(nz):
                p = phi[i, j, k]
                s0 = phi0[i, j, k]
                s = 1.0 if s0 > 0 else (-1.0 if s0 < 0 else 0.0)
                if near[i, j, k]:
                    out[i, j, k] = p - dtau * inv * (s * abs(p) - dist[i, j, k])
                    continue
                if s == 0.0:
                    out[i, j, k] = p
                    continue
                # one-sided differences; ghost cells copy the boundary value
                ax = (p - phi[i - 1, j, k]) * inv if i > 0 else 0.0
                bx = (phi[i + 1, j, k] - p) * inv if i < nx - 1 else 0.0
                ay = (p - phi[i, j - 1, k]) * inv if j > 0 else 0.0
                by = (phi[i, j + 1, k] - p) * inv if j < ny - 1 else 0.0
                az = (p - phi[i, j, k - 1]) * inv if k > 0 else 0.0
                bz = (phi[i, j, k + 1] - p) * inv if k < nz - 1 else 0.0
                g = np.sqrt(_godunov(ax, bx, s) + _godunov(ay, by, s) + _godunov(az, bz, s))
                out[i, j, k] = p - dtau * s * (g - 1.0)
    return out


def reinitialize(phi: np.ndarray, dx: float, iterations: int = 12, cfl: float = 0.3) -> np.ndarray:
    """Relax ``phi`` toward a signed distance without moving its zero set.

    Godunov upwinding away from the interface.  Cells next to a sign change
    are pinned to ``phi / |grad phi|``, or to their own value when the
    gradient is already close to one.
    """
    phi0 = np.ascontiguousarray(phi, dtype=float)
    near, dist = _interface_fix(phi0, dx)
    out = phi0.copy()
    for _ in range(iterations):
        out = _reinit_sweep(out, phi0, near, dist, dx, cfl * dx)
    return out


def advect_levelset(grid: MacGrid, dt: float, reinit_iterations: int = 12) -> MacGrid:
    """Semi-Lagrangian transport of the water level set, then reinitialization."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    g = grid.copy()
    g.phi = _advect_field(grid.phi, grid.u, grid.v, grid.w, dt, grid.dx, 0.5, 0.5, 0.5)
    if g.markers is not None:
        pos, rad = g.markers
        _advect_points(pos, grid.u, grid.v, grid.w, dt, grid.origin, grid.dx)
        apply_markers(g)
    if reinit_iterations:
        g.phi = reinitialize(g.phi, g.dx, reinit_iterations)
        apply_markers(g)
    return g


# --------------------------------------------------------------------------
# simplified particle level set: water-side markers only
# --------------------------------------------------------------------------

def seed_markers(grid: MacGrid, per_cell: int = 8, band: float = 3.0, rng=None) -> None:
    """Scatter water-side markers in cells within ``band`` cells of the surface."""
    rng = np.random.default_rng(0) if rng is None else rng
    dx = grid.dx
    cells = np.argwhere((grid.phi < 0) & (grid.phi > -band * dx))
    if len(cells) == 0:
        grid.markers = (np.zeros((0, 3)), np.zeros(0))
        return
    pts = (np.repeat(cells, per_cell, axis=0) + rng.random((len(cells) * per_cell, 3))) * dx
    pts += grid.origin
    phi = grid.sample_phi_water(pts)
    keep = (phi < 0) & (phi > -band * dx)
    pts = pts[keep]
    rad = np.clip(-phi[keep], 0.1 * dx, 0.5 * dx)
    grid.markers = (pts, rad)


@nb.njit(cache=True)
def _marker_fix(phi, pts, rad, origin, dx):
    nx, ny, nz = phi.shape
    inv = 1.0 / dx
    for p in range(pts.shape[0]):
        x = (pts[p, 0] - origin[0]) * inv - 0.5
        y = (pts[p, 1] - origin[1]) * inv - 0.5
        z = (pts[p, 2] - origin[2]) * inv - 0.5
        val = trilinear(phi, x, y, z)
        r = rad[p]
        if val <= -r:
            continue  # sphere still fully inside the water
        i0, j0, k0 = int(np.floor(x)), int(np.floor(y)), int(np.floor(z))
        for i in range(max(i0 - 1, 0), min(i0 + 3, nx)):
            for j in range(max(j0 - 1, 0), min(j0 + 3, ny)):
                for k in range(max(k0 - 1, 0), min(k0 + 3, nz)):
                    d = np.sqrt((i - x) ** 2 + (j - y) ** 2 + (k - z) ** 2) * dx - r
                    if d < phi[i, j, k]:
                        phi[i, j, k] = d


def apply_markers(grid: MacGrid) -> None:
    """Let escaped water markers pull the level set back around themselves."""
    if grid.markers is None:
        return
    pos, rad = grid.markers
    inside = np.all((pos >= grid.origin) & (pos <= grid.upper), axis=1)
    pos, rad = np.ascontiguousarray(pos[inside]), rad[inside]
    grid.markers = (pos, rad)
    _marker_fix(grid.phi, pos, rad, grid.origin, grid.dx)
