"""Versioned binary bake file.

Chunks: ``META`` (frame_dt, first frame, frame count), ``MESH`` (tets and
node count), then one ``FRAM`` per frame or ``FREF`` when a frame repeats an
earlier one verbatim.
"""

from __future__ import annotations

import numpy as np

from .._io import ContainerWriter, FormatError, read_container
from ..mesh import TetMesh
from .frame import FRAME_ARRAYS, Bake, FrameBake

MAGIC = b"TVBK"
VERSION = 1


def write_bake(path, bake: Bake) -> None:
    with ContainerWriter(path, MAGIC, VERSION) as w:
        w.chunk(b"META", {
            "frame_dt": np.float64(bake.frame_dt),
            "first_frame": np.int64(bake.first_frame),
            "n_frames": np.int64(bake.n_frames),
        })
        w.chunk(b"MESH", {"tets": bake.mesh.tets, "n_nodes": np.int64(bake.mesh.n_nodes)})
        seen = {}
        for i, fb in enumerate(bake.frames):
            f = bake.first_frame + i
            if id(fb) in seen:
                w.chunk(b"FREF", {"frame": np.int64(f), "same_as": np.int64(seen[id(fb)])})
                continue
            seen[id(fb)] = f
            w.chunk(b"FRAM", {"frame": np.int64(f), **fb.arrays()})


def read_bake(path) -> Bake:
    _, chunks = read_container(path, MAGIC, (VERSION,))
    if len(chunks) < 2 or chunks[0][0] != b"META" or chunks[1][0] != b"MESH":
        raise FormatError(f"{path}: missing META/MESH chunks")
    meta, m = chunks[0][1], chunks[1][1]
    mesh = TetMesh.from_tets(m["tets"], int(m["n_nodes"]))
    first = int(meta["first_frame"])
    by_frame = {}
    for tag, a in chunks[2:]:
        f = int(a["frame"])
        if tag == b"FRAM":
            by_frame[f] = FrameBake(**{k: a[k] for k in FRAME_ARRAYS})
        elif tag == b"FREF":
            src = int(a["same_as"])
            if src not in by_frame:
                raise FormatError(f"{path}: frame {f} references unknown frame {src}")
            by_frame[f] = by_frame[src]
        else:
            raise FormatError(f"{path}: unknown chunk {tag!r}")
    n = int(meta["n_frames"])
    missing = [f for f in range(first, first + n) if f not in by_frame]
    if missing:
        raise FormatError(f"{path}: missing frames {missing[:5]}")
    frames = [by_frame[f] for f in range(first, first + n)]
    return Bake(mesh=mesh, frames=frames, frame_dt=float(meta["frame_dt"]), first_frame=first)
