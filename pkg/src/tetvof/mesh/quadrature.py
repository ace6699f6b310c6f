"""Equal-weight interior sample points for tetrahedra.

Samples sit on a symmetric, cell-centered barycentric lattice: integer
coordinates ``(a, b, c, d) >= 0`` with ``a + b + c + d = k`` map to
``(a + 1/2, ...) / (k + 2)``.  The points spread over the whole tet and none
lies on a face.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import product

import numpy as np

SUPPORTED_COUNTS = (1, 4, 10, 20, 35)


@lru_cache(maxsize=None)
def barycentric_table(n: int) -> np.ndarray:
    """``(n, 4)`` barycentric coordinates of the sample lattice for ``n``."""
    if n not in SUPPORTED_COUNTS:
        raise ValueError(f"unsupported sample count {n}; choose one of {SUPPORTED_COUNTS}")
    k = SUPPORTED_COUNTS.index(n)
    rows = [
        (a, b, c, k - a - b - c)
        for a, b, c in product(range(k + 1), repeat=3)
        if k - a - b - c >= 0
    ]
    lam = (np.array(sorted(rows, reverse=True), dtype=float) + 0.5) / (k + 2)
    lam.setflags(write=False)
    return lam


def quadrature_samples(v0, v1, v2, v3, n: int) -> np.ndarray:
    """``n`` sample points inside one tet (each carries weight ``1/n``)."""
    verts = np.stack([np.asarray(v, dtype=float) for v in (v0, v1, v2, v3)])
    return barycentric_table(n) @ verts


def tet_samples(pos: np.ndarray, tets: np.ndarray, n: int) -> np.ndarray:
    """Samples for many tets at once, shape ``(len(tets), n, 3)``."""
    return np.einsum("sk,tkd->tsd", barycentric_table(n), pos[tets])
