"""Tetrahedral mesh topology, BCC lattice generation and 1->8 refinement."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Local face i is the face opposite local vertex i.
FACE_LOCAL = np.array([[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]], dtype=np.int64)


class MeshError(ValueError):
    pass


def tet_volume(v0, v1, v2, v3):
    """Signed volume of tetrahedra; broadcasts over leading dimensions."""
    v0 = np.asarray(v0, dtype=float)
    e1 = np.asarray(v1, dtype=float) - v0
    e2 = np.asarray(v2, dtype=float) - v0
    e3 = np.asarray(v3, dtype=float) - v0
    return np.einsum("...i,...i->...", e1, np.cross(e2, e3)) / 6.0


def tet_volumes(tets: np.ndarray, pos: np.ndarray) -> np.ndarray:
    p = pos[tets]
    return tet_volume(p[:, 0], p[:, 1], p[:, 2], p[:, 3])


@dataclass(eq=False)
class TetMesh:
    """Static topology shared by every frame of an animation.

    ``face_neighbors[t, i]`` is the tet across the face opposite local
    vertex ``i`` (``-1`` on the mesh exterior).  Node-to-tet incidence is
    kept in CSR form; node neighbors are derived from it on demand.
    """

    tets: np.ndarray
    n_nodes: int
    face_neighbors: np.ndarray = field(repr=False)
    node_tet_offsets: np.ndarray = field(repr=False)
    node_tet_items: np.ndarray = field(repr=False)

    @classmethod
    def from_tets(cls, tets, n_nodes: int) -> "TetMesh":
        tets = np.ascontiguousarray(tets, dtype=np.int64)
        if tets.ndim != 2 or tets.shape[1] != 4:
            raise MeshError("tets must be an (n, 4) array")
        if len(tets) == 0:
            raise MeshError("mesh has no tetrahedra")
        if tets.min() < 0 or tets.max() >= n_nodes:
            raise MeshError("tet references a node id out of range")
        s = np.sort(tets, axis=1)
        if np.any(s[:, 1:] == s[:, :-1]):
            raise MeshError("every tet needs 4 distinct node ids")
        fn = _face_neighbors(tets)
        offsets, items = _node_tets(tets, n_nodes)
        return cls(tets, int(n_nodes), fn, offsets, items)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    @property
    def boundary_tets(self) -> np.ndarray:
        return np.any(self.face_neighbors < 0, axis=1)

    @property
    def boundary_faces(self) -> set[tuple[int, int]]:
        t, f = np.nonzero(self.face_neighbors < 0)
        return set(zip(t.tolist(), f.tolist()))

    def face_nodes(self, t: int, local_face: int) -> np.ndarray:
        return self.tets[t, FACE_LOCAL[local_face]]

    def node_neighbors(self, t: int) -> np.ndarray:
        """Tets sharing at least one node with ``t`` (``t`` excluded), sorted."""
        parts = [
            self.node_tet_items[self.node_tet_offsets[n]:self.node_tet_offsets[n + 1]]
            for n in self.tets[t]
        ]
        nb = np.unique(np.concatenate(parts))
        return nb[nb != t]

    def edges(self) -> np.ndarray:
        """Unique undirected edges, each row sorted, rows lexicographically sorted."""
        e = np.stack([self.tets[:, [0, 0, 0, 1, 1, 2]], self.tets[:, [1, 2, 3, 2, 3, 3]]], axis=-1)
        e = np.sort(e.reshape(-1, 2), axis=1)
        return np.unique(e, axis=0)


def _face_neighbors(tets: np.ndarray) -> np.ndarray:
    n = len(tets)
    faces = np.sort(tets[:, FACE_LOCAL].reshape(-1, 3), axis=1)
    order = np.lexsort((faces[:, 2], faces[:, 1], faces[:, 0]))
    f = faces[order]
    same = np.all(f[1:] == f[:-1], axis=1)
    if np.any(same[1:] & same[:-1]):
        raise MeshError("non-manifold mesh: a face is shared by more than two tets")
    fn = np.full(4 * n, -1, dtype=np.int64)
    i = np.nonzero(same)[0]
    a, b = order[i], order[i + 1]
    fn[a] = b // 4
    fn[b] = a // 4
    return fn.reshape(n, 4)


def _node_tets(tets: np.ndarray, n_nodes: int):
    flat = tets.ravel()
    owner = np.repeat(np.arange(len(tets), dtype=np.int64), 4)
    order = np.lexsort((owner, flat))
    counts = np.bincount(flat, minlength=n_nodes)
    offsets = np.zeros(n_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return offsets, owner[order]


def orient_positive(tets: np.ndarray, pos: np.ndarray) -> np.ndarray:
    tets = tets.copy()
    neg = tet_volumes(tets, pos) < 0
    tets[neg, 2], tets[neg, 3] = tets[neg, 3].copy(), tets[neg, 2].copy()
    return tets


def generate_bcc_lattice(lo, hi, dx: float) -> tuple[TetMesh, np.ndarray]:
    """Body-centered cubic tet mesh over the box ``[lo, hi]``.

    Every pair of face-adjacent lattice cells contributes the four tets
    spanned by the two cell centers and the edges of their shared face, so
    all tets are congruent with volume ``dx**3 / 12``.  The lattice has
    ``ceil(extent / dx)`` cells per axis anchored at ``lo``; at least two
    cells per axis are required.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if not dx > 0:
        raise MeshError(f"dx must be positive, got {dx}")
    ext = hi - lo
    if np.any(ext <= 0):
        raise MeshError("bounds are degenerate")
    n = np.ceil(ext / dx - 1e-9).astype(int)
    if np.any(n < 2):
        raise MeshError(f"bounds {ext.tolist()} too small for a lattice with dx={dx}")
    nx, ny, nz = n
    ci = np.arange((nx + 1) * (ny + 1) * (nz + 1)).reshape(nx + 1, ny + 1, nz + 1)
    n_corner = ci.size
    cc = n_corner + np.arange(nx * ny * nz).reshape(nx, ny, nz)

    blocks = []
    # x-faces between cells (i, j, k) and (i+1, j, k)
    a, b = cc[:-1], cc[1:]
    I, J, K = np.meshgrid(np.arange(1, nx), np.arange(ny), np.arange(nz), indexing="ij")
    ring = [ci[I, J, K], ci[I, J + 1, K], ci[I, J + 1, K + 1], ci[I, J, K + 1]]
    blocks.append((a, b, ring))
    a, b = cc[:, :-1], cc[:, 1:]
    I, J, K = np.meshgrid(np.arange(nx), np.arange(1, ny), np.arange(nz), indexing="ij")
    ring = [ci[I, J, K], ci[I + 1, J, K], ci[I + 1, J, K + 1], ci[I, J, K + 1]]
    blocks.append((a, b, ring))
    a, b = cc[:, :, :-1], cc[:, :, 1:]
    I, J, K = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(1, nz), indexing="ij")
    ring = [ci[I, J, K], ci[I + 1, J, K], ci[I + 1, J + 1, K], ci[I, J + 1, K]]
    blocks.append((a, b, ring))

    tets = []
    for a, b, ring in blocks:
        for q in range(4):
            r0, r1 = ring[q], ring[(q + 1) % 4]
            tets.append(np.stack([a.ravel(), b.ravel(), r0.ravel(), r1.ravel()], axis=1))
    tets = np.concatenate(tets)

    g = np.stack(np.meshgrid(*(np.arange(m + 1) for m in n), indexing="ij"), axis=-1)
    corners = lo + g.reshape(-1, 3) * dx
    c = np.stack(np.meshgrid(*(np.arange(m) for m in n), indexing="ij"), axis=-1)
    centers = lo + (c.reshape(-1, 3) + 0.5) * dx
    pos = np.concatenate([corners, centers])

    used = np.unique(tets)
    remap = np.full(len(pos), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    tets = remap[tets]
    pos = pos[used]
    tets = orient_positive(tets, pos)
    return TetMesh.from_tets(tets, len(pos)), pos


def subdivide_positions(mesh: TetMesh, pos: np.ndarray, edges: np.ndarray | None = None) -> np.ndarray:
    """Node positions of the refined mesh for one frame of the coarse mesh."""
    if edges is None:
        edges = mesh.edges()
    pos = np.asarray(pos, dtype=float)
    return np.concatenate([pos, 0.5 * (pos[edges[:, 0]] + pos[edges[:, 1]])])


def subdivide(mesh: TetMesh, pos: np.ndarray) -> tuple[TetMesh, np.ndarray]:
    """Regular 1->8 refinement through edge midpoints.

    The interior octahedron of each tet is split along its shortest
    diagonal (measured on ``pos``).  Later frames reuse the same topology
    through :func:`subdivide_positions`.
    """
    edges = mesh.edges()
    n = mesh.n_nodes
    # edge id lookup through a hash of sorted pairs
    key = edges[:, 0] * n + edges[:, 1]
    t = mesh.tets

    def mid(i, j):
        a = np.minimum(t[:, i], t[:, j])
        b = np.maximum(t[:, i], t[:, j])
        return n + np.searchsorted(key, a * n + b)

    a, b, c, d = t[:, 0], t[:, 1], t[:, 2], t[:, 3]
    ab, ac, ad, bc, bd, cd = mid(0, 1), mid(0, 2), mid(0, 3), mid(1, 2), mid(1, 3), mid(2, 3)
    new_pos = subdivide_positions(mesh, pos, edges)

    corner = [
        np.stack([a, ab, ac, ad], 1),
        np.stack([ab, b, bc, bd], 1),
        np.stack([ac, bc, c, cd], 1),
        np.stack([ad, bd, cd, d], 1),
    ]
    diag_len = np.stack([
        np.linalg.norm(new_pos[ab] - new_pos[cd], axis=1),
        np.linalg.norm(new_pos[ac] - new_pos[bd], axis=1),
        np.linalg.norm(new_pos[ad] - new_pos[bc], axis=1),
    ], axis=1)
    choice = np.argmin(diag_len, axis=1)
    # (axis endpoints, ring in cyclic order) for each diagonal choice
    options = [
        (ab, cd, [ac, ad, bd, bc]),
        (ac, bd, [ab, ad, cd, bc]),
        (ad, bc, [ab, ac, cd, bd]),
    ]
    octa = [np.empty((len(t), 4), dtype=np.int64) for _ in range(4)]
    for k, (p, q, ring) in enumerate(options):
        sel = choice == k
        for r in range(4):
            octa[r][sel] = np.stack([p[sel], q[sel], ring[r][sel], ring[(r + 1) % 4][sel]], 1)
    children = np.stack(corner + octa, axis=1).reshape(-1, 4)
    children = orient_positive(children, new_pos)
    return TetMesh.from_tets(children, len(new_pos)), new_pos


def mean_edge_length(mesh: TetMesh, pos: np.ndarray) -> float:
    e = mesh.edges()
    return float(np.linalg.norm(pos[e[:, 0]] - pos[e[:, 1]], axis=1).mean())


def max_edge_lengths(mesh: TetMesh, pos: np.ndarray) -> np.ndarray:
    p = pos[mesh.tets]
    out = np.zeros(mesh.n_tets)
    for i in range(4):
        for j in range(i + 1, 4):
            out = np.maximum(out, np.linalg.norm(p[:, i] - p[:, j], axis=1))
    return out
