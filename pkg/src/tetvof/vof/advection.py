"""Three-pass ALE advection of per-tet water between consecutive frames.

Backward: every new-mesh tet is translated rigidly by ``-u dt`` and its
quadrature samples request water from the old-mesh tets they land in (or
pull it from the background grid when off-mesh).  Limit: requests against
each old tet are scaled down uniformly to what it holds.  Forward: water
nobody asked for is pushed along ``+u dt`` into the new mesh; the samples
of one tet that miss are gathered into a single spray entry.
"""

from __future__ import annotations

import numpy as np

from ..bake.frame import FrameBake
from ..mesh import MeshError, SolidField, TetMesh, barycentric_table, tet_volume
from .state import DRY_EPS, TransferLedger, WaterState, remove_dust

CLAMP_ITERATIONS = 6


def clamp_trace(start: np.ndarray, end: np.ndarray, solid: SolidField | None, t: float,
                offset: float = 0.0) -> np.ndarray:
    """Pull trace endpoints that end up inside the solid back to its surface.

    Bisects the segment ``start -> end`` for ``phi = offset``.  Only
    segments that start outside and end inside are touched.
    """
    if not solid:
        return end
    end = end.copy()
    phi_end = solid.phi(end, t)
    hit = phi_end < offset
    if not np.any(hit):
        return end
    a = start[hit]
    b = end[hit]
    outside = solid.phi(a, t) >= offset
    a, b = a[outside], b[outside]
    lo = np.zeros(len(a))
    hi = np.ones(len(a))
    for _ in range(CLAMP_ITERATIONS):
        mid = 0.5 * (lo + hi)
        inside = solid.phi(a + mid[:, None] * (b - a), t) < offset
        hi = np.where(inside, mid, hi)
        lo = np.where(inside, lo, mid)
    idx = np.flatnonzero(hit)[outside]
    end[idx] = a + lo[:, None] * (b - a)
    return end


def _traced_nodes(node_pos, tets, vel, dt, sign, solid, t):
    start = node_pos[tets]                                  # (k, 4, 3)
    end = start + sign * dt * vel[:, None, :]
    moving = np.any(vel != 0.0, axis=1)
    if solid and np.any(moving):
        s = start[moving].reshape(-1, 3)
        e = end[moving].reshape(-1, 3)
        end[moving] = clamp_trace(s, e, solid, t).reshape(-1, 4, 3)
    return end


def advect(state: WaterState, mesh: TetMesh, bake_old: FrameBake, bake_new: FrameBake, dt: float,
           grid_view=None, n_samples: int = 10, solid: SolidField | None = None,
           t_old: float = 0.0, t_new: float | None = None) -> tuple[WaterState, TransferLedger]:
    """Move water from the old frame's mesh to the new frame's mesh.

    ``grid_view`` needs ``sample_velocity(points)`` and
    ``sample_phi_water(points)``; without it off-mesh samples pull nothing.
    ``solid`` is used to clamp traces at ``t_old`` (backward) and ``t_new``
    (forward).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = mesh.n_tets
    for fb in (bake_old, bake_new):
        if fb.node_positions.shape != (mesh.n_nodes, 3) or len(fb.rank) != n:
            raise MeshError("frame topology does not match the mesh")
    if state.water.shape != (n,):
        raise MeshError("water state does not match the mesh")
    if t_new is None:
        t_new = t_old + dt

    lam = barycentric_table(n_samples)
    tets = mesh.tets
    W = state.water
    M = state.momentum
    vel = state.velocity()
    ledger = TransferLedger()
    out_w = np.zeros(n)
    out_m = np.zeros((n, 3))

    old_pos, new_pos = bake_old.node_positions, bake_new.node_positions
    static_tet = np.all(old_pos[tets] == new_pos[tets], axis=(1, 2))
    still = ~np.any(vel != 0.0, axis=1)

    # --- backward pass -------------------------------------------------
    active = ~bake_new.disabled
    fast = active & still & static_tet & ~bake_old.disabled
    slow = np.flatnonzero(active & ~fast)
    req_src = [np.flatnonzero(fast)]
    req_dst = [req_src[0]]
    req_vol = [bake_new.volume[fast]]

    if len(slow):
        # a new tet's prior velocity is the old water velocity at the same id
        nodes = _traced_nodes(new_pos, tets[slow], vel[slow], dt, -1.0, solid, t_old)
        vb = np.abs(tet_volume(nodes[:, 0], nodes[:, 1], nodes[:, 2], nodes[:, 3]))
        pts = np.einsum("sk,tkd->tsd", lam, nodes).reshape(-1, 3)
        share = np.repeat(vb / n_samples, n_samples)
        dst = np.repeat(slow, n_samples)
        src, _ = bake_old.locator(mesh).locate_many(pts)
        on = src >= 0
        hit = on.copy()
        hit[on] = ~bake_old.disabled[src[on]]
        req_src.append(src[hit])
        req_dst.append(dst[hit])
        req_vol.append(share[hit])
        off = ~on
        if grid_view is not None and np.any(off):
            p = pts[off]
            wet = grid_view.sample_phi_water(p) < 0
            pulled = share[off] * wet
            u = grid_view.sample_velocity(p)
            out_w += np.bincount(dst[off], weights=pulled, minlength=n)
            for d in range(3):
                out_m[:, d] += np.bincount(dst[off], weights=pulled * u[:, d], minlength=n)
            ledger.from_grid += float(pulled.sum())

    req_src = np.concatenate(req_src)
    req_dst = np.concatenate(req_dst)
    req_vol = np.concatenate(req_vol)

    # --- limiter -------------------------------------------------------
    total = np.bincount(req_src, weights=req_vol, minlength=n)
    scale = np.ones(n)
    over = total > W
    scale[over] = np.divide(W[over], total[over])
    given = req_vol * scale[req_src]
    wet_src = W[req_src] > 0
    given = np.where(wet_src, given, 0.0)
    frac = np.zeros_like(given)
    frac[wet_src] = given[wet_src] / W[req_src[wet_src]]
    out_w += np.bincount(req_dst, weights=given, minlength=n)
    for d in range(3):
        out_m[:, d] += np.bincount(req_dst, weights=frac * M[req_src, d], minlength=n)
    taken = np.bincount(req_src, weights=given, minlength=n)
    rem = np.where(over, 0.0, np.maximum(W - taken, 0.0))
    rem_frac = np.zeros(n)
    np.divide(rem, W, out=rem_frac, where=W > 0)
    rem_m = M * rem_frac[:, None]

    # --- forward pass --------------------------------------------------
    left = rem > 0
    direct = left & still & static_tet & ~bake_new.disabled
    out_w[direct] += rem[direct]
    out_m[direct] += rem_m[direct]
    moved = np.flatnonzero(left & ~direct)
    if len(moved):
        nodes = _traced_nodes(old_pos, tets[moved], vel[moved], dt, 1.0, solid, t_new)
        pts = np.einsum("sk,tkd->tsd", lam, nodes).reshape(-1, 3)
        sv = np.repeat(rem[moved] / n_samples, n_samples)
        sm = np.repeat(rem_m[moved] / n_samples, n_samples, axis=0)
        dst, _ = bake_new.locator(mesh).locate_many(pts)
        ok = dst >= 0
        ok[ok] = ~bake_new.disabled[dst[ok]]
        out_w += np.bincount(dst[ok], weights=sv[ok], minlength=n)
        for d in range(3):
            out_m[:, d] += np.bincount(dst[ok], weights=sm[ok, d], minlength=n)
        miss = np.flatnonzero(~ok)
        if len(miss):
            # one spray entry per source tet: summed volume and momentum at the
            # volume-weighted mean of its missed samples
            owner = miss // n_samples
            src_ids, inv = np.unique(owner, return_inverse=True)
            k = len(src_ids)
            vol = np.bincount(inv, weights=sv[miss], minlength=k)
            mom = np.stack([np.bincount(inv, weights=sm[miss, d], minlength=k) for d in range(3)], 1)
            pos = np.stack([np.bincount(inv, weights=sv[miss] * pts[miss, d], minlength=k)
                            for d in range(3)], 1) / vol[:, None]
            ledger.add_particles(vol, mom, pos)

    new = WaterState(out_w, out_m)
    remove_dust(new, ledger, DRY_EPS)
    return new, ledger
