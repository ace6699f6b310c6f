"""Point location in a deforming tet mesh through a uniform spatial hash."""

from __future__ import annotations

import numba as nb
import numpy as np

from .lattice import TetMesh

BARY_EPS = 1e-9
_MAX_CELLS = 1 << 23


@nb.njit(cache=True)
def _inverse_frames(pos, tets):
    n = tets.shape[0]
    inv = np.zeros((n, 3, 3))
    ok = np.zeros(n, dtype=np.bool_)
    m = np.empty((3, 3))
    for t in range(n):
        p0 = pos[tets[t, 0]]
        for c in range(3):
            q = pos[tets[t, c + 1]]
            for r in range(3):
                m[r, c] = q[r] - p0[r]
        det = (m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
               - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
               + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0]))
        scale = 0.0
        for r in range(3):
            for c in range(3):
                scale = max(scale, abs(m[r, c]))
        if abs(det) <= 1e-14 * scale ** 3 or scale == 0.0:
            continue
        ok[t] = True
        inv[t, 0, 0] = (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1]) / det
        inv[t, 0, 1] = (m[0, 2] * m[2, 1] - m[0, 1] * m[2, 2]) / det
        inv[t, 0, 2] = (m[0, 1] * m[1, 2] - m[0, 2] * m[1, 1]) / det
        inv[t, 1, 0] = (m[1, 2] * m[2, 0] - m[1, 0] * m[2, 2]) / det
        inv[t, 1, 1] = (m[0, 0] * m[2, 2] - m[0, 2] * m[2, 0]) / det
        inv[t, 1, 2] = (m[0, 2] * m[1, 0] - m[0, 0] * m[1, 2]) / det
        inv[t, 2, 0] = (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0]) / det
        inv[t, 2, 1] = (m[0, 1] * m[2, 0] - m[0, 0] * m[2, 1]) / det
        inv[t, 2, 2] = (m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]) / det
    return inv, ok


@nb.njit(cache=True)
def _cell_range(lo, hi, origin, h, dims):
    out = np.empty((2, 3), dtype=np.int64)
    for d in range(3):
        a = int(np.floor((lo[d] - origin[d]) / h))
        b = int(np.floor((hi[d] - origin[d]) / h))
        out[0, d] = min(max(a, 0), dims[d] - 1)
        out[1, d] = min(max(b, 0), dims[d] - 1)
    return out


@nb.njit(cache=True)
def _build_hash(pos, tets, ok, origin, h, dims, pad):
    n = tets.shape[0]
    ncell = dims[0] * dims[1] * dims[2]
    counts = np.zeros(ncell + 1, dtype=np.int64)
    lo = np.empty(3)
    hi = np.empty(3)
    for pass_ in range(2):
        if pass_ == 1:
            for c in range(ncell):
                counts[c + 1] += counts[c]
            fill = counts[:-1].copy()
            items = np.empty(counts[ncell], dtype=np.int64)
        for t in range(n):
            if not ok[t]:
                continue
            for d in range(3):
                lo[d] = pos[tets[t, 0], d]
                hi[d] = lo[d]
            for k in range(1, 4):
                for d in range(3):
                    v = pos[tets[t, k], d]
                    lo[d] = min(lo[d], v)
                    hi[d] = max(hi[d], v)
            for d in range(3):
                lo[d] -= pad
                hi[d] += pad
            r = _cell_range(lo, hi, origin, h, dims)
            for i in range(r[0, 0], r[1, 0] + 1):
                for j in range(r[0, 1], r[1, 1] + 1):
                    for k in range(r[0, 2], r[1, 2] + 1):
                        c = (i * dims[1] + j) * dims[2] + k
                        if pass_ == 0:
                            counts[c + 1] += 1
                        else:
                            items[fill[c]] = t
                            fill[c] += 1
    return counts, items


@nb.njit(cache=True)
def _locate_one(p, pos, tets, inv, origin, h, dims, starts, items, eps, out_bary):
    for d in range(3):
        if p[d] < origin[d] or p[d] >= origin[d] + h * dims[d]:
            return -1
    i = int((p[0] - origin[0]) / h)
    j = int((p[1] - origin[1]) / h)
    k = int((p[2] - origin[2]) / h)
    i = min(i, dims[0] - 1)
    j = min(j, dims[1] - 1)
    k = min(k, dims[2] - 1)
    c = (i * dims[1] + j) * dims[2] + k
    for s in range(starts[c], starts[c + 1]):
        t = items[s]
        p0 = pos[tets[t, 0]]
        dx = p[0] - p0[0]
        dy = p[1] - p0[1]
        dz = p[2] - p0[2]
        l1 = inv[t, 0, 0] * dx + inv[t, 0, 1] * dy + inv[t, 0, 2] * dz
        l2 = inv[t, 1, 0] * dx + inv[t, 1, 1] * dy + inv[t, 1, 2] * dz
        l3 = inv[t, 2, 0] * dx + inv[t, 2, 1] * dy + inv[t, 2, 2] * dz
        l0 = 1.0 - l1 - l2 - l3
        if (l0 >= -eps and l1 >= -eps and l2 >= -eps and l3 >= -eps
                and l0 <= 1 + eps and l1 <= 1 + eps and l2 <= 1 + eps and l3 <= 1 + eps):
            out_bary[0] = l0
            out_bary[1] = l1
            out_bary[2] = l2
            out_bary[3] = l3
            return t
    return -1


@nb.njit(cache=True, parallel=True)
def _locate_many(points, pos, tets, inv, origin, h, dims, starts, items, eps):
    n = points.shape[0]
    ids = np.empty(n, dtype=np.int64)
    bary = np.zeros((n, 4))
    for q in nb.prange(n):
        ids[q] = _locate_one(points[q], pos, tets, inv, origin, h, dims, starts, items, eps, bary[q])
    return ids, bary


class PointLocator:
    """Spatial hash of tet bounding boxes for one frame of node positions.

    Cell size is the mean tet edge length.  Queries return the lowest tet id
    whose barycentric coordinates all lie in ``[-eps, 1 + eps]``; collapsed
    tets are never returned.
    """

    def __init__(self, mesh: TetMesh, pos: np.ndarray, eps: float = BARY_EPS):
        self.mesh = mesh
        self.pos = np.ascontiguousarray(pos, dtype=float)
        self.eps = eps
        tets = mesh.tets
        self.inv, self.valid = _inverse_frames(self.pos, tets)
        e = self.pos[tets[:, 1:]] - self.pos[tets[:, :1]]
        h = float(np.linalg.norm(e, axis=2).mean())
        lo = self.pos.min(axis=0)
        hi = self.pos.max(axis=0)
        pad = 1e-7 * max(float(np.max(hi - lo)), 1e-300)
        lo = lo - 2 * pad
        hi = hi + 2 * pad
        while True:
            dims = np.maximum(np.ceil((hi - lo) / h).astype(np.int64), 1)
            if dims.prod() <= _MAX_CELLS:
                break
            h *= 1.5
        self.origin = lo
        self.h = h
        self.dims = dims
        self.starts, self.items = _build_hash(self.pos, tets, self.valid, lo, h, dims, pad)

    def locate(self, p) -> tuple[int, np.ndarray] | None:
        ids, bary = self.locate_many(np.asarray(p, dtype=float).reshape(1, 3))
        if ids[0] < 0:
            return None
        return int(ids[0]), bary[0]

    def locate_many(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        points = np.ascontiguousarray(points, dtype=float).reshape(-1, 3)
        return _locate_many(points, self.pos, self.mesh.tets, self.inv, self.origin,
                            self.h, self.dims, self.starts, self.items, self.eps)
