"""Per-tet water state and the cross-representation transfer ledger."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .._io import FormatError, read_container, write_container

DRY_EPS = 1e-12  # m^3


@dataclass
class WaterState:
    water: np.ndarray
    momentum: np.ndarray

    @classmethod
    def empty(cls, n_tets: int) -> "WaterState":
        return cls(np.zeros(n_tets), np.zeros((n_tets, 3)))

    def copy(self) -> "WaterState":
        return WaterState(self.water.copy(), self.momentum.copy())

    @property
    def total(self) -> float:
        return float(self.water.sum())

    def velocity(self, eps: float = DRY_EPS) -> np.ndarray:
        wet = self.water > eps
        v = np.zeros_like(self.momentum)
        v[wet] = self.momentum[wet] / self.water[wet, None]
        return v


@dataclass
class TransferLedger:
    """Volume crossing the VOF boundary during one step.

    ``to_particles`` entries become spray; ``from_grid`` counts water pulled
    from the background grid by off-mesh samples, ``grid_overwrite`` the net
    volume set by submerged-tet overwrites, ``dust`` what was discarded
    below the dry threshold.
    """

    p_volume: list = field(default_factory=list)
    p_momentum: list = field(default_factory=list)
    p_position: list = field(default_factory=list)
    p_normal: list = field(default_factory=list)
    from_grid: float = 0.0
    grid_overwrite: float = 0.0
    dust: float = 0.0

    def add_particles(self, volume, momentum, position, normal=None):
        volume = np.asarray(volume, dtype=float).reshape(-1)
        if len(volume) == 0:
            return
        self.p_volume.append(volume)
        self.p_momentum.append(np.asarray(momentum, dtype=float).reshape(-1, 3))
        self.p_position.append(np.asarray(position, dtype=float).reshape(-1, 3))
        if normal is None:
            normal = np.zeros((len(volume), 3))
        self.p_normal.append(np.asarray(normal, dtype=float).reshape(-1, 3))

    def merge(self, other: "TransferLedger") -> "TransferLedger":
        self.p_volume += other.p_volume
        self.p_momentum += other.p_momentum
        self.p_position += other.p_position
        self.p_normal += other.p_normal
        self.from_grid += other.from_grid
        self.grid_overwrite += other.grid_overwrite
        self.dust += other.dust
        return self

    def particle_entries(self):
        if not self.p_volume:
            z = np.zeros((0, 3))
            return np.zeros(0), z, z.copy(), z.copy()
        return (np.concatenate(self.p_volume), np.concatenate(self.p_momentum),
                np.concatenate(self.p_position), np.concatenate(self.p_normal))

    @property
    def to_particles(self) -> float:
        return float(sum(v.sum() for v in self.p_volume))


def remove_dust(state: WaterState, ledger: TransferLedger, eps: float = DRY_EPS) -> None:
    dry = state.water <= eps
    ledger.dust += float(state.water[dry].sum())
    state.water[dry] = 0.0
    state.momentum[dry] = 0.0


MAGIC = b"TVWS"
VERSION = 1


def write_state(path, state: WaterState, frame: int = 0) -> None:
    write_container(path, MAGIC, VERSION, [(b"WATR", {
        "frame": np.int64(frame), "water": state.water, "momentum": state.momentum,
    })])


def read_state(path) -> tuple[WaterState, int]:
    _, chunks = read_container(path, MAGIC, (VERSION,))
    if not chunks or chunks[0][0] != b"WATR":
        raise FormatError(f"{path}: missing WATR chunk")
    a = chunks[0][1]
    return WaterState(a["water"], a["momentum"]), int(a["frame"])
