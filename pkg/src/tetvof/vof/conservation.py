"""Volume conservation: smear, rank-ordered pushout, velocity correction."""

from __future__ import annotations

import logging

import numba as nb
import numpy as np

from ..bake.frame import FrameBake
from ..bake.precompute import rank_order
from ..mesh import TetMesh
from ..mesh.lattice import FACE_LOCAL
from .state import DRY_EPS, TransferLedger, WaterState

log = logging.getLogger(__name__)

MAX_SWEEPS = 64
# excess below this fraction of capacity is not worth moving
SATURATION_RTOL = 1e-10


@nb.njit(cache=True)
def _smear(W, M, cap, fnb, rank, disabled, boundary, tol):
    n = W.shape[0]
    dW = np.zeros(n)
    dM = np.zeros((n, 3))
    for t in range(n):
        ex = W[t] - cap[t]
        if ex <= tol[t] or boundary[t] or disabled[t]:
            continue
        m = 0
        for f in range(4):
            s = fnb[t, f]
            if s >= 0 and rank[s] >= 0 and not disabled[s]:
                m += 1
        if m == 0:
            continue
        frac = ex / W[t]
        dW[t] -= ex
        for d in range(3):
            dM[t, d] -= M[t, d] * frac
        for f in range(4):
            s = fnb[t, f]
            if s >= 0 and rank[s] >= 0 and not disabled[s]:
                dW[s] += ex / m
                for d in range(3):
                    dM[s, d] += M[t, d] * frac / m
    return dW, dM


def smear(state: WaterState, mesh: TetMesh, bake: FrameBake) -> WaterState:
    """One Jacobi pass spreading each interior tet's excess to its face neighbors."""
    tol = SATURATION_RTOL * bake.capacity
    dW, dM = _smear(state.water, state.momentum, bake.capacity, mesh.face_neighbors, bake.rank,
                    bake.disabled, mesh.boundary_tets, tol)
    return WaterState(state.water + dW, state.momentum + dM)


@nb.njit(cache=True)
def _give(W, M, t, s, amount, W0, M0):
    W[s] += amount
    for d in range(3):
        M[s, d] += M0[d] * amount / W0


@nb.njit(cache=True)
def _pushout(W, M, cap, tol, fnb, rank, disabled, pocket, boundary, esc_off, esc_items, order,
             max_sweeps, ledger_w, ledger_m):
    n = W.shape[0]
    room_ids = np.empty(4, dtype=np.int64)
    sweeps = 0
    M0 = np.zeros(3)
    for sweep in range(max_sweeps):
        sweeps = sweep + 1
        moved = False
        for q in range(order.shape[0]):
            t = order[q]
            if disabled[t] and W[t] == 0.0:
                continue
            ex = W[t] - cap[t]
            if ex <= tol[t]:
                continue
            W0 = W[t]
            for d in range(3):
                M0[d] = M[t, d]
            start_ex = ex

            # (a) fill unsaturated face neighbors, equal shares, iterated
            k = 0
            for f in range(4):
                s = fnb[t, f]
                if s >= 0 and not disabled[s] and rank[s] >= 0 and W[s] < cap[s]:
                    room_ids[k] = s
                    k += 1
            while k > 0 and ex > 0.0:
                share = ex / k
                filled = False
                j = 0
                while j < k:
                    s = room_ids[j]
                    room = cap[s] - W[s]
                    if room <= share:
                        _give(W, M, t, s, room, W0, M0)
                        W[s] = cap[s]
                        ex -= room
                        k -= 1
                        room_ids[j] = room_ids[k]
                        filled = True
                    else:
                        j += 1
                if not filled:
                    for j in range(k):
                        _give(W, M, t, room_ids[j], share, W0, M0)
                    ex = 0.0
                    k = 0

            if ex > tol[t] and not pocket[t]:
                if boundary[t]:
                    ledger_w[t] += ex
                    for d in range(3):
                        ledger_m[t, d] += M0[d] * ex / W0
                    ex = 0.0
                else:
                    # (b) strictly higher-rank face neighbors
                    k = 0
                    for f in range(4):
                        s = fnb[t, f]
                        if s >= 0 and not disabled[s] and rank[s] > rank[t]:
                            room_ids[k] = s
                            k += 1
                    if k > 0:
                        for j in range(k):
                            _give(W, M, t, room_ids[j], ex / k, W0, M0)
                        ex = 0.0
                    else:
                        # (c) non-local escalation targets
                        a, b = esc_off[t], esc_off[t + 1]
                        if b > a:
                            for j in range(a, b):
                                _give(W, M, t, esc_items[j], ex / (b - a), W0, M0)
                            ex = 0.0
            if ex < start_ex:
                kept = W0 - (start_ex - ex)
                W[t] = kept if kept > 0.0 else 0.0
                for d in range(3):
                    M[t, d] = M0[d] * (W[t] / W0)
                moved = True
        if not moved:
            return sweeps, False
    return sweeps, True


def pushout(state: WaterState, mesh: TetMesh, bake: FrameBake, ledger: TransferLedger | None = None,
            max_sweeps: int = MAX_SWEEPS) -> tuple[WaterState, TransferLedger]:
    """Push excess water away from the solid in ascending rank order.

    Repeats Gauss-Seidel sweeps until nothing transferable is left.  Excess
    in mesh-boundary tets leaves through their exterior face into the
    ledger; enclosed pockets keep theirs.
    """
    if ledger is None:
        ledger = TransferLedger()
    W = state.water.copy()
    M = state.momentum.copy()
    n = mesh.n_tets
    lw = np.zeros(n)
    lm = np.zeros((n, 3))
    tol = SATURATION_RTOL * bake.capacity
    sweeps, capped = _pushout(W, M, bake.capacity, tol, mesh.face_neighbors, bake.rank,
                              bake.disabled, bake.pocket, mesh.boundary_tets, bake.esc_offsets,
                              bake.esc_items, rank_order(bake.rank), max_sweeps, lw, lm)
    if capped:
        log.warning("pushout stopped after %d sweeps with excess remaining", sweeps)
    out = np.flatnonzero(lw > 0)
    if len(out):
        c, nrm = boundary_face_frames(mesh, bake)
        ledger.add_particles(lw[out], lm[out], c[out], nrm[out])
    return WaterState(W, M), ledger


def boundary_face_frames(mesh: TetMesh, bake: FrameBake):
    """Centroid and outward unit normal of each tet's first exterior face."""
    pos = bake.node_positions
    n = mesh.n_tets
    cent = np.zeros((n, 3))
    nrm = np.zeros((n, 3))
    fnb = mesh.face_neighbors
    done = np.zeros(n, dtype=bool)
    for f in range(4):
        sel = (fnb[:, f] < 0) & ~done
        if not np.any(sel):
            continue
        nodes = mesh.tets[sel][:, FACE_LOCAL[f]]
        p = pos[nodes]
        cent[sel] = p.mean(axis=1)
        v = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        # orient away from the opposite vertex
        opp = pos[mesh.tets[sel, f]]
        flip = np.einsum("ij,ij->i", v, cent[sel] - opp) < 0
        v[flip] *= -1
        nrm[sel] = v / np.maximum(np.linalg.norm(v, axis=1), 1e-300)[:, None]
        done |= sel
    return cent, nrm


@nb.njit(cache=True)
def _velocity_correction(W, M, cap, rank, normal, svel, fnb, order, eps):
    n = W.shape[0]
    flag = np.zeros(n, dtype=np.bool_)
    for t in range(n):
        if rank[t] == 0 and W[t] > eps:
            flag[t] = True
    for q in range(order.shape[0]):
        t = order[q]
        if rank[t] < 0 or not flag[t] or W[t] <= eps:
            continue
        vn = 0.0
        wn = 0.0
        for d in range(3):
            vn += M[t, d] / W[t] * normal[t, d]
            wn += svel[t, d] * normal[t, d]
        if vn < wn:
            for d in range(3):
                M[t, d] = (M[t, d] / W[t] + (wn - vn) * normal[t, d]) * W[t]
            if W[t] >= cap[t] - eps:
                for f in range(4):
                    s = fnb[t, f]
                    if s >= 0 and rank[s] > rank[t]:
                        flag[s] = True
    return flag


def velocity_correction(state: WaterState, mesh: TetMesh, bake: FrameBake,
                        eps: float = DRY_EPS) -> tuple[WaterState, np.ndarray]:
    """One-sided clamp of the normal velocity along saturated columns touching the solid.

    Returns the corrected state and the per-tet flags.
    """
    M = state.momentum.copy()
    flags = _velocity_correction(state.water, M, bake.capacity, bake.rank, bake.surf_normal,
                                 bake.surf_velocity, mesh.face_neighbors, rank_order(bake.rank), eps)
    return WaterState(state.water.copy(), M), flags
