"""Body forces and water sources on the grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mesh import Cylinder
from .mac import MacGrid


def apply_gravity(grid: MacGrid, gravity, dt: float) -> MacGrid:
    g = grid.copy()
    gv = np.asarray(gravity, dtype=float)
    g.u += gv[0] * dt
    g.v += gv[1] * dt
    g.w += gv[2] * dt
    return g


@dataclass
class Inlet:
    """Cylindrical nozzle that keeps its volume filled with water moving at ``velocity``."""

    center: tuple
    axis: tuple
    radius: float
    half_height: float
    velocity: tuple

    def shape(self) -> Cylinder:
        return Cylinder(center=self.center, axis=self.axis, radius=self.radius,
                        half_height=self.half_height)


def apply_inlet(grid: MacGrid, inlet: Inlet) -> float:
    """Fill the nozzle in place; returns the water volume added to the grid."""
    before = grid.water_volume()
    cyl = inlet.shape()
    phi_in = cyl.query(grid.cell_centers())[0].reshape(grid.dims)
    np.minimum(grid.phi, phi_in, out=grid.phi)
    vel = np.asarray(inlet.velocity, dtype=float)
    for ax, a in enumerate((grid.u, grid.v, grid.w)):
        inside = (cyl.query(grid.face_centers(ax))[0] < 0).reshape(a.shape)
        a[inside] = vel[ax]
    return grid.water_volume() - before
