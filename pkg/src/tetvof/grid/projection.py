"""Pressure projection on water cells and velocity extrapolation into air."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numba as nb
import numpy as np
import pyamg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .mac import MacGrid

log = logging.getLogger(__name__)

MIN_THETA = 0.01


class ProjectionError(RuntimeError):
    pass


@dataclass
class SolidFaces:
    """Per-axis open/closed face masks and the solid's normal velocity on closed faces."""

    open: tuple
    velocity: tuple


def solid_faces(grid: MacGrid, solid=None, t: float = 0.0) -> SolidFaces:
    """Binary face classification; domain walls are always closed."""
    opened, vel = [], []
    for ax in range(3):
        shape = list(grid.dims)
        shape[ax] += 1
        op = np.ones(shape, dtype=bool)
        sl = [slice(None)] * 3
        sl[ax] = 0
        op[tuple(sl)] = False
        sl[ax] = -1
        op[tuple(sl)] = False
        vn = np.zeros(shape)
        if solid:
            fc = grid.face_centers(ax)
            inside = (solid.phi(fc, t) < 0).reshape(shape)
            op &= ~inside
            if not solid.is_static and np.any(inside):
                vn[inside] = solid.velocity(fc[inside.ravel()], t)[:, ax]
        opened.append(op)
        vel.append(vn)
    return SolidFaces(tuple(opened), tuple(vel))


def update_solid(grid: MacGrid, solid=None, t: float = 0.0) -> SolidFaces:
    """Refresh ``grid.solid_phi`` and return the face classification."""
    if solid:
        grid.solid_phi = solid.phi(grid.cell_centers(), t).reshape(grid.dims)
    else:
        grid.solid_phi = np.full(grid.dims, np.inf)
    return solid_faces(grid, solid, t)


def _default_faces(grid: MacGrid, faces: SolidFaces | None) -> SolidFaces:
    return faces if faces is not None else solid_faces(grid)


def enforce_solid_velocity(grid: MacGrid, faces: SolidFaces) -> None:
    for a, op, vn in zip((grid.u, grid.v, grid.w), faces.open, faces.velocity):
        a[~op] = vn[~op]


def divergence(grid: MacGrid) -> np.ndarray:
    """Cell-centered discrete divergence (1/s)."""
    return ((grid.u[1:] - grid.u[:-1]) + (grid.v[:, 1:] - grid.v[:, :-1])
            + (grid.w[:, :, 1:] - grid.w[:, :, :-1])) / grid.dx


@nb.njit(cache=True)
def _assemble(phi, idx, ou, ov, ow):
    nx, ny, nz = phi.shape
    n = 0
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if idx[i, j, k] >= 0:
                    n += 1
    rows = np.empty(7 * n, dtype=np.int64)
    cols = np.empty(7 * n, dtype=np.int64)
    vals = np.empty(7 * n)
    diag = np.zeros(n)
    dirichlet = np.zeros(n, dtype=np.bool_)
    m = 0
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                c = idx[i, j, k]
                if c < 0:
                    continue
                for d in range(6):
                    ax = d // 2
                    hi = d % 2 == 1
                    if ax == 0:
                        op = ou[i + 1, j, k] if hi else ou[i, j, k]
                    elif ax == 1:
                        op = ov[i, j + 1, k] if hi else ov[i, j, k]
                    else:
                        op = ow[i, j, k + 1] if hi else ow[i, j, k]
                    if not op:
                        continue
                    a, b, e = i, j, k
                    step = 1 if hi else -1
                    if ax == 0:
                        a += step
                    elif ax == 1:
                        b += step
                    else:
                        e += step
                    nbr = idx[a, b, e]
                    if nbr >= 0:
                        diag[c] += 1.0
                        rows[m] = c
                        cols[m] = nbr
                        vals[m] = -1.0
                        m += 1
                    elif phi[a, b, e] >= 0:
                        th = phi[i, j, k] / (phi[i, j, k] - phi[a, b, e])
                        diag[c] += 1.0 / max(th, 0.01)
                        dirichlet[c] = True
                rows[m] = c
                cols[m] = c
                vals[m] = diag[c]
                m += 1
    return rows[:m], cols[:m], vals[:m], diag, dirichlet


def _unknowns(grid: MacGrid, faces: SolidFaces) -> np.ndarray:
    fluid = grid.phi < 0
    ou, ov, ow = faces.open
    n_open = (ou[1:].astype(int) + ou[:-1] + ov[:, 1:] + ov[:, :-1] + ow[:, :, 1:] + ow[:, :, :-1])
    fluid &= n_open > 0
    idx = np.full(grid.dims, -1, dtype=np.int64)
    idx[fluid] = np.arange(int(fluid.sum()))
    return idx


def pressure_matrix(grid: MacGrid, faces: SolidFaces | None = None):
    """Symmetric positive (semi-)definite pressure operator on water cells.

    Returns ``(A, idx, dirichlet)`` where ``idx`` maps cells to unknowns.
    """
    faces = _default_faces(grid, faces)
    idx = _unknowns(grid, faces)
    rows, cols, vals, _, dirichlet = _assemble(grid.phi, idx, *faces.open)
    n = int((idx >= 0).sum())
    A = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return A, idx, dirichlet


def project(grid: MacGrid, dt: float, tol: float = 1e-8, faces: SolidFaces | None = None,
            max_iter: int = 400) -> MacGrid:
    """Make face velocities divergence-free on water cells."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    faces = _default_faces(grid, faces)
    g = grid.copy()
    enforce_solid_velocity(g, faces)
    A, idx, dirichlet = pressure_matrix(g, faces)
    n = A.shape[0]
    g.pressure = np.zeros(g.dims)
    if n == 0:
        return g
    cells = idx >= 0
    b = -divergence(g)[cells] * g.dx ** 2 / dt

    ncomp, labels = connected_components(A, directed=False)
    has_dirichlet = np.bincount(labels, weights=dirichlet.astype(float), minlength=ncomp) > 0
    if not np.all(has_dirichlet):
        # pure-Neumann pockets: make the RHS compatible and pin one cell
        keep = np.ones(n)
        for c in np.flatnonzero(~has_dirichlet):
            members = np.flatnonzero(labels == c)
            b[members] -= b[members].mean()
            keep[members[0]] = 0.0
            b[members[0]] = 0.0
        D = sp.diags(keep)
        A = (D @ A @ D + sp.diags(1.0 - keep)).tocsr()

    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        p = np.zeros(n)
    else:
        # pyamg draws spectral-radius start vectors from the global RNG
        saved = np.random.get_state()
        np.random.seed(0)
        try:
            ml = pyamg.smoothed_aggregation_solver(A, symmetry="symmetric", max_coarse=500)
            p = ml.solve(b, tol=tol, accel="cg", maxiter=max_iter)
        finally:
            np.random.set_state(saved)
        res = float(np.linalg.norm(b - A @ p)) / bnorm
        if not np.isfinite(res) or res > tol * 10:
            raise ProjectionError(f"pressure solve did not converge: relative residual {res:.3e}")
    g.pressure[cells] = p
    _apply_gradient(g, idx, faces, dt)
    return g


def _ghost_pressure(p_c, phi_c, phi_n):
    th = np.maximum(phi_c / (phi_c - phi_n), MIN_THETA)
    return p_c * (th - 1.0) / th


def _apply_gradient(g: MacGrid, idx, faces: SolidFaces, dt: float) -> None:
    fluid = idx >= 0
    for ax, a in enumerate((g.u, g.v, g.w)):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        # interior faces between cells lo and hi
        f_lo, f_hi = fluid[lo], fluid[hi]
        p_lo, p_hi = g.pressure[lo], g.pressure[hi]
        ph_lo, ph_hi = g.phi[lo], g.phi[hi]
        pl = np.where(f_lo, p_lo, 0.0)
        phh = np.where(f_hi, p_hi, 0.0)
        air_hi = f_lo & ~f_hi & (ph_hi >= 0)
        air_lo = f_hi & ~f_lo & (ph_lo >= 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            phh = np.where(air_hi, _ghost_pressure(p_lo, ph_lo, ph_hi), phh)
            pl = np.where(air_lo, _ghost_pressure(p_hi, ph_hi, ph_lo), pl)
        mid = [slice(None)] * 3
        mid[ax] = slice(1, -1)
        mid = tuple(mid)
        upd = (f_lo | f_hi) & faces.open[ax][mid]
        inner = a[mid]
        inner[upd] -= dt / g.dx * (phh - pl)[upd]
    enforce_solid_velocity(g, faces)


# --------------------------------------------------------------------------
# extrapolation
# --------------------------------------------------------------------------

@nb.njit(cache=True)
def _extrapolate(a, valid, layers):
    nx, ny, nz = a.shape
    for _ in range(layers):
        new_valid = valid.copy()
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    if valid[i, j, k]:
                        continue
                    s = 0.0
                    c = 0
                    if i > 0 and valid[i - 1, j, k]:
                        s += a[i - 1, j, k]; c += 1
                    if i < nx - 1 and valid[i + 1, j, k]:
                        s += a[i + 1, j, k]; c += 1
                    if j > 0 and valid[i, j - 1, k]:
                        s += a[i, j - 1, k]; c += 1
                    if j < ny - 1 and valid[i, j + 1, k]:
                        s += a[i, j + 1, k]; c += 1
                    if k > 0 and valid[i, j, k - 1]:
                        s += a[i, j, k - 1]; c += 1
                    if k < nz - 1 and valid[i, j, k + 1]:
                        s += a[i, j, k + 1]; c += 1
                    if c > 0:
                        a[i, j, k] = s / c
                        new_valid[i, j, k] = True
        valid[:] = new_valid


def extrapolate_velocity(grid: MacGrid, faces: SolidFaces | None = None, layers: int = 6) -> None:
    """Overwrite air-side face velocities with averages spreading out from the water."""
    faces = _default_faces(grid, faces)
    fluid = grid.phi < 0
    for ax, a in enumerate((grid.u, grid.v, grid.w)):
        shape = a.shape
        valid = np.zeros(shape, dtype=bool)
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        valid[tuple(hi)] |= fluid
        valid[tuple(lo)] |= fluid
        valid &= faces.open[ax]
        # closed faces are not sources; enforce_solid_velocity resets them below
        a[~valid] = 0.0
        _extrapolate(a, valid, layers)
    enforce_solid_velocity(grid, faces)
