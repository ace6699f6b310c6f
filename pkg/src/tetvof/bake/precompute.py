"""Per-frame precomputation: occupancy, ranks, escalation lists, extrapolated
surface data, adhesion and hair rasterization, degeneracy flags."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numba as nb
import numpy as np

from ..mesh import PointLocator, SolidField, TetMesh, tet_samples, tet_volumes

log = logging.getLogger(__name__)

ESCALATION_FANOUT = 4
DEGENERATE_REL_VOLUME = 1e-6


# --------------------------------------------------------------------------
# occupancy and ranks
# --------------------------------------------------------------------------

def compute_occupancy(mesh: TetMesh, pos: np.ndarray, solid: SolidField, n_samples: int,
                      t: float = 0.0) -> np.ndarray:
    """Fraction of quadrature samples inside the solid, per tet."""
    frac = np.zeros(mesh.n_tets)
    if not solid:
        return frac
    p = pos[mesh.tets]
    c = p.mean(axis=1)
    reach = np.linalg.norm(p - c[:, None], axis=2).max(axis=1)
    phi_c = solid.phi(c, t)
    frac[phi_c < -reach] = 1.0
    unsure = np.abs(phi_c) <= reach
    if np.any(unsure):
        idx = np.nonzero(unsure)[0]
        s = tet_samples(pos, mesh.tets[idx], n_samples)
        inside = solid.phi(s.reshape(-1, 3), t).reshape(len(idx), n_samples) < 0
        frac[idx] = inside.sum(axis=1) / n_samples
    return frac


@nb.njit(cache=True)
def _rank_bfs(tets, node_off, node_items, n_nodes, seed_mask, minus1_mask):
    n = tets.shape[0]
    rank = np.full(n, -2, dtype=np.int64)
    frontier = np.empty(n, dtype=np.int64)
    nxt = np.empty(n, dtype=np.int64)
    nf = 0
    for t in range(n):
        if minus1_mask[t]:
            rank[t] = -1
        elif seed_mask[t]:
            rank[t] = 0
            frontier[nf] = t
            nf += 1
    node_done = np.zeros(n_nodes, dtype=np.bool_)
    level = 0
    while nf > 0:
        nn = 0
        for q in range(nf):
            t = frontier[q]
            for a in range(4):
                v = tets[t, a]
                if node_done[v]:
                    continue
                node_done[v] = True
                for s_i in range(node_off[v], node_off[v + 1]):
                    s = node_items[s_i]
                    if rank[s] == -2:
                        rank[s] = level + 1
                        nxt[nn] = s
                        nn += 1
        frontier, nxt = nxt, frontier
        nf = nn
        level += 1
    for t in range(n):
        if rank[t] == -2:
            rank[t] = 1
    return rank


def compute_ranks(mesh: TetMesh, solid_frac: np.ndarray) -> np.ndarray:
    """Node-adjacency BFS distance from the cut-cell layer.

    ``-1`` inside the solid, ``0`` for cut cells; fluid tets the search never
    reaches (in particular every tet of a scene without solids) get ``1``.
    """
    sf = np.asarray(solid_frac)
    return _rank_bfs(mesh.tets, mesh.node_tet_offsets, mesh.node_tet_items, mesh.n_nodes,
                     (sf > 0) & (sf < 1), sf >= 1)


# --------------------------------------------------------------------------
# escalation lists
# --------------------------------------------------------------------------

@nb.njit(cache=True)
def _components(fnb, passable):
    n = fnb.shape[0]
    label = np.full(n, -1, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    nl = 0
    for t0 in range(n):
        if label[t0] >= 0 or not passable[t0]:
            continue
        label[t0] = nl
        sp = 0
        stack[sp] = t0
        sp += 1
        while sp > 0:
            sp -= 1
            t = stack[sp]
            for f in range(4):
                s = fnb[t, f]
                if s >= 0 and passable[s] and label[s] < 0:
                    label[s] = nl
                    stack[sp] = s
                    sp += 1
        nl += 1
    return label, nl


@nb.njit(cache=True)
def _escalation(fnb, rank, disabled, boundary, k_max):
    n = fnb.shape[0]
    pass_fluid = np.empty(n, dtype=np.bool_)
    pass_all = np.empty(n, dtype=np.bool_)
    for t in range(n):
        pass_all[t] = not disabled[t]
        pass_fluid[t] = (not disabled[t]) and rank[t] >= 0
    lab_f, nf = _components(fnb, pass_fluid)
    lab_a, na = _components(fnb, pass_all)
    max_rank_f = np.full(nf, -2, dtype=np.int64)
    bnd_f = np.zeros(nf, dtype=np.bool_)
    has_fluid_a = np.zeros(na, dtype=np.bool_)
    for t in range(n):
        if lab_f[t] >= 0:
            max_rank_f[lab_f[t]] = max(max_rank_f[lab_f[t]], rank[t])
            if boundary[t]:
                bnd_f[lab_f[t]] = True
        if lab_a[t] >= 0 and rank[t] >= 0:
            has_fluid_a[lab_a[t]] = True

    counts = np.zeros(n + 1, dtype=np.int64)
    items = np.empty(n * k_max, dtype=np.int64)
    pocket = np.zeros(n, dtype=np.bool_)
    stamp = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    found = np.empty(k_max, dtype=np.int64)
    fallback = np.empty(k_max, dtype=np.int64)
    total = 0
    depth = np.zeros(n, dtype=np.int64)
    for t in range(n):
        counts[t] = total
        if disabled[t]:
            continue
        r = rank[t]
        starved = True
        for f in range(4):
            s = fnb[t, f]
            if s >= 0 and not disabled[s] and rank[s] > r:
                starved = False
        if not starved:
            continue
        if r >= 0 and boundary[t]:
            continue
        if r >= 0:
            want_higher = max_rank_f[lab_f[t]] > r
            want_boundary = bnd_f[lab_f[t]]
        else:
            want_higher = has_fluid_a[lab_a[t]]
            want_boundary = False
        if not want_higher and not want_boundary:
            pocket[t] = True
            continue
        nfound = 0
        nfb = 0
        head = 0
        tail = 0
        queue[tail] = t
        tail += 1
        stamp[t] = t
        depth[t] = 0
        stop_depth = n
        while head < tail and nfound < k_max:
            u = queue[head]
            head += 1
            if depth[u] >= stop_depth:
                break
            for f in range(4):
                s = fnb[u, f]
                if s < 0 or stamp[s] == t or disabled[s]:
                    continue
                if r >= 0 and rank[s] < 0:
                    continue
                stamp[s] = t
                depth[s] = depth[u] + 1
                queue[tail] = s
                tail += 1
                if rank[s] > r:
                    if nfound < k_max:
                        found[nfound] = s
                        nfound += 1
                    if stop_depth == n:
                        stop_depth = depth[s] + 2
                elif boundary[s] and nfb < k_max:
                    fallback[nfb] = s
                    nfb += 1
            if not want_higher and nfb >= k_max:
                break
        if nfound > 0:
            for q in range(nfound):
                items[total] = found[q]
                total += 1
        elif nfb > 0:
            for q in range(nfb):
                items[total] = fallback[q]
                total += 1
        else:
            pocket[t] = True
    counts[n] = total
    return counts, items[:total].copy(), pocket


def build_escalation(mesh: TetMesh, rank: np.ndarray, disabled: np.ndarray | None = None,
                     fanout: int = ESCALATION_FANOUT):
    """Non-local pushout targets for tets with no usable higher-rank face neighbor.

    Breadth-first over face adjacency (rank ``-1`` tets are skipped unless the
    source is itself inside the solid) collecting up to ``fanout`` strictly
    higher-rank tets in discovery order.  When the face-connected region
    holds no higher rank, the nearest mesh-boundary tets are used instead so
    excess can leave the mesh.  Tets with neither are flagged as enclosed
    pockets.  Returns ``(offsets, items, pocket)``.
    """
    if disabled is None:
        disabled = np.zeros(mesh.n_tets, dtype=bool)
    return _escalation(mesh.face_neighbors, np.asarray(rank, dtype=np.int64),
                       np.asarray(disabled, dtype=np.bool_), mesh.boundary_tets, fanout)


# --------------------------------------------------------------------------
# rank-ordered propagation (surface data, adhesion)
# --------------------------------------------------------------------------

def rank_order(rank: np.ndarray) -> np.ndarray:
    """Tet ids sorted by ascending rank, ties by ascending id."""
    return np.lexsort((np.arange(len(rank)), rank))


@nb.njit(cache=True)
def _propagate(vals, rank, order, tets, fnb, node_off, node_items, renorm):
    n, k = vals.shape
    acc = np.zeros(k)
    stamp = np.full(n, -1, dtype=np.int64)
    for q in range(order.shape[0]):
        t = order[q]
        r = rank[t]
        if r < 1:
            continue
        acc[:] = 0.0
        cnt = 0
        for f in range(4):
            s = fnb[t, f]
            if s >= 0 and rank[s] >= 0 and rank[s] < r:
                acc += vals[s]
                cnt += 1
        if cnt == 0:
            for a in range(4):
                v = tets[t, a]
                for i in range(node_off[v], node_off[v + 1]):
                    s = node_items[i]
                    if stamp[s] == t:
                        continue
                    stamp[s] = t
                    if rank[s] >= 0 and rank[s] < r:
                        acc += vals[s]
                        cnt += 1
        if cnt == 0:
            continue
        acc /= cnt
        if renorm:
            nrm = np.sqrt(np.sum(acc * acc))
            if nrm > 1e-300:
                acc /= nrm
            else:
                continue
        vals[t] = acc


def propagate_by_rank(mesh: TetMesh, rank: np.ndarray, values: np.ndarray, renormalize: bool) -> np.ndarray:
    """Fill rank >= 1 tets with the mean of their lower-rank face neighbors.

    Processed in ascending (rank, id) order; a tet whose lower-rank contacts
    are only through shared nodes averages those instead.  Tets with no
    lower-rank contact keep their input value.
    """
    vals = np.array(values, dtype=float).reshape(len(rank), -1).copy()
    _propagate(vals, np.asarray(rank, dtype=np.int64), rank_order(rank), mesh.tets,
               mesh.face_neighbors, mesh.node_tet_offsets, mesh.node_tet_items, renormalize)
    return vals.reshape(np.shape(values))


def extrapolate_surface_data(mesh: TetMesh, rank: np.ndarray, solid: SolidField, pos: np.ndarray,
                             t: float = 0.0):
    """Per-tet solid normal, solid velocity and signed distance at the centroid.

    Cut cells (and solid-interior tets) take the solid's own values;
    exterior tets receive rank-ordered averages, normals renormalized.
    """
    c = pos[mesh.tets].mean(axis=1)
    if solid:
        phi, normal = solid.query(c, t)
        vel = solid.velocity(c, t)
    else:
        phi = np.full(mesh.n_tets, np.inf)
        normal = np.tile([0.0, 1.0, 0.0], (mesh.n_tets, 1))
        vel = np.zeros((mesh.n_tets, 3))
    normal = propagate_by_rank(mesh, rank, normal, renormalize=True)
    vel = propagate_by_rank(mesh, rank, vel, renormalize=False)
    return normal, vel, phi


# --------------------------------------------------------------------------
# adhesion
# --------------------------------------------------------------------------

@dataclass
class PaintRegion:
    """Predicate on surface points in the solid's rest frame."""

    kind: str = "all"
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 0.0
    lo: tuple = (0.0, 0.0, 0.0)
    hi: tuple = (0.0, 0.0, 0.0)

    def contains(self, p: np.ndarray) -> np.ndarray:
        if self.kind == "all":
            return np.ones(len(p), dtype=bool)
        if self.kind == "sphere":
            return np.linalg.norm(p - np.asarray(self.center), axis=1) <= self.radius
        if self.kind == "box":
            return np.all((p >= np.asarray(self.lo)) & (p <= np.asarray(self.hi)), axis=1)
        raise ValueError(f"unknown paint region {self.kind!r}")


@dataclass
class Paint:
    region: PaintRegion
    alpha: float
    direction: object = "inward"  # "inward", "outward" or a rest-frame vector


def rasterize_adhesion(mesh: TetMesh, rank: np.ndarray, pos: np.ndarray, solid: SolidField,
                       paint: list, t: float = 0.0):
    """Adhesion coefficient and direction per tet.

    Cut cells average the paint entries whose region holds their nearest
    surface point; unpainted cut cells carry zero.  Higher ranks average
    their lower-rank neighbors (direction renormalized).
    """
    n = mesh.n_tets
    alpha = np.zeros(n)
    d = np.zeros((n, 3))
    cut = np.nonzero(rank == 0)[0]
    if paint and solid and len(cut):
        c = pos[mesh.tets[cut]].mean(axis=1)
        phi, normal = solid.query(c, t)
        surf = c - phi[:, None] * normal
        owner = solid.owner(surf, t)
        rest = np.empty_like(surf)
        rot = np.empty((len(cut), 3, 3))
        for i, prim in enumerate(solid.primitives):
            sel = owner == i
            rest[sel] = prim.to_rest(surf[sel], t)
            rot[sel] = prim.motion.rotation(t)
        a_sum = np.zeros(len(cut))
        d_sum = np.zeros((len(cut), 3))
        hits = np.zeros(len(cut))
        for p in paint:
            inside = p.region.contains(rest)
            if isinstance(p.direction, str):
                if p.direction == "inward":
                    dv = -normal
                elif p.direction == "outward":
                    dv = normal
                else:
                    raise ValueError(f"unknown adhesion direction {p.direction!r}")
            else:
                dv = np.einsum("tij,j->ti", rot, np.asarray(p.direction, dtype=float))
            a_sum[inside] += p.alpha
            d_sum[inside] += dv[inside]
            hits[inside] += 1
        painted = hits > 0
        alpha[cut[painted]] = a_sum[painted] / hits[painted]
        dd = d_sum[painted] / hits[painted][:, None]
        nrm = np.linalg.norm(dd, axis=1, keepdims=True)
        d[cut[painted]] = np.where(nrm > 1e-300, dd / np.maximum(nrm, 1e-300), 0.0)
    alpha = propagate_by_rank(mesh, rank, alpha, renormalize=False)
    d = propagate_by_rank(mesh, rank, d, renormalize=True)
    return alpha, d


# --------------------------------------------------------------------------
# hair
# --------------------------------------------------------------------------

@dataclass
class Strand:
    points: np.ndarray
    radius: float

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.radius <= 0:
            raise ValueError("strand radius must be positive")


@nb.njit(cache=True)
def _accumulate_hair(ids, vols, dirs, n):
    vol = np.zeros(n)
    acc = np.zeros((n, 3))
    for q in range(ids.shape[0]):
        t = ids[q]
        if t < 0:
            continue
        s = dirs[q, 0] * acc[t, 0] + dirs[q, 1] * acc[t, 1] + dirs[q, 2] * acc[t, 2]
        sign = -1.0 if s < 0 else 1.0
        vol[t] += vols[q]
        for d in range(3):
            acc[t, d] += sign * vols[q] * dirs[q, d]
    return vol, acc


def bake_hair(mesh: TetMesh, pos: np.ndarray, strands: list, solid_frac: np.ndarray | None = None,
              locator: PointLocator | None = None):
    """Hair volume fraction and mean (unoriented) strand direction per tet.

    Each segment is cut into pieces no longer than a quarter of the mean
    edge; a piece deposits its cylinder volume ``pi r^2 L`` in the tet that
    holds its midpoint.
    """
    n = mesh.n_tets
    frac = np.zeros(n)
    hdir = np.zeros((n, 3))
    if not strands:
        return frac, hdir
    if locator is None:
        locator = PointLocator(mesh, pos)
    e = pos[mesh.tets[:, 1:]] - pos[mesh.tets[:, :1]]
    step = 0.25 * float(np.linalg.norm(e, axis=2).mean())
    mids, vols, dirs = [], [], []
    for s in strands:
        a, b = s.points[:-1], s.points[1:]
        seg = b - a
        length = np.linalg.norm(seg, axis=1)
        keep = length > 0
        a, seg, length = a[keep], seg[keep], length[keep]
        m = np.maximum(1, np.ceil(length / step)).astype(int)
        for ai, si, li, mi in zip(a, seg, length, m):
            u = (np.arange(mi) + 0.5) / mi
            mids.append(ai + u[:, None] * si)
            vols.append(np.full(mi, np.pi * s.radius ** 2 * li / mi))
            dirs.append(np.tile(si / li, (mi, 1)))
    if not mids:
        return frac, hdir
    mids = np.concatenate(mids)
    ids, _ = locator.locate_many(mids)
    vol, acc = _accumulate_hair(ids, np.concatenate(vols), np.concatenate(dirs), n)
    tv = tet_volumes(mesh.tets, pos)
    frac = np.where(tv > 0, vol / np.maximum(tv, 1e-300), 0.0)
    cap = 1.0 if solid_frac is None else 1.0 - np.asarray(solid_frac)
    frac = np.clip(np.minimum(frac, cap), 0.0, 1.0)
    nrm = np.linalg.norm(acc, axis=1, keepdims=True)
    hdir = np.where(nrm > 1e-300, acc / np.maximum(nrm, 1e-300), 0.0)
    hdir[frac == 0] = 0.0
    return frac, hdir


def deform_directions(mesh: TetMesh, rest: np.ndarray, pos: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Carry rest-frame per-tet directions through each tet's deformation gradient."""
    Dr = (rest[mesh.tets[:, 1:]] - rest[mesh.tets[:, :1]]).transpose(0, 2, 1)
    Dc = (pos[mesh.tets[:, 1:]] - pos[mesh.tets[:, :1]]).transpose(0, 2, 1)
    has = np.linalg.norm(dirs, axis=1) > 0
    out = np.zeros_like(dirs)
    if np.any(has):
        F = Dc[has] @ np.linalg.inv(Dr[has])
        v = np.einsum("tij,tj->ti", F, dirs[has])
        nrm = np.linalg.norm(v, axis=1, keepdims=True)
        out[has] = np.where(nrm > 1e-300, v / np.maximum(nrm, 1e-300), dirs[has])
    return out


# --------------------------------------------------------------------------
# degeneracy
# --------------------------------------------------------------------------

def detect_degenerate(mesh: TetMesh, frames) -> list[np.ndarray]:
    """Disabled-tet flags per frame: signed volume at or below 1e-6 x median volume."""
    out = []
    for pos in frames:
        v = tet_volumes(mesh.tets, np.asarray(pos))
        eps = DEGENERATE_REL_VOLUME * float(np.median(np.abs(v)))
        out.append(v <= eps)
    return out
