"""Analytic and sampled signed distance fields for animated rigid solids.

Convention: ``phi < 0`` inside the solid.  Every primitive carries an
optional rigid motion (linear velocity, sinusoidal oscillation and spin
about its reference point); queries take the time ``t``.  A
:class:`SolidField` is the union (min) of its primitives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _normalize(v, fallback=(0.0, 1.0, 0.0)):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    safe = n[..., 0] > 1e-300
    out = np.empty_like(v)
    out[safe] = v[safe] / n[safe]
    out[~safe] = fallback
    return out


def rotation_matrix(axis_angle) -> np.ndarray:
    """Rodrigues rotation for a rotation vector (axis times angle)."""
    w = np.asarray(axis_angle, dtype=float)
    theta = float(np.linalg.norm(w))
    if theta < 1e-300:
        return np.eye(3)
    k = w / theta
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(theta) * K + (1 - np.cos(theta)) * (K @ K)


@dataclass
class RigidMotion:
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    amplitude: np.ndarray = field(default_factory=lambda: np.zeros(3))
    frequency: float = 0.0

    def __post_init__(self):
        self.velocity = np.asarray(self.velocity, dtype=float)
        self.angular_velocity = np.asarray(self.angular_velocity, dtype=float)
        self.amplitude = np.asarray(self.amplitude, dtype=float)

    @property
    def is_static(self) -> bool:
        return (not np.any(self.velocity) and not np.any(self.angular_velocity)
                and (not np.any(self.amplitude) or self.frequency == 0.0))

    def offset(self, t: float) -> np.ndarray:
        return self.velocity * t + self.amplitude * np.sin(2 * np.pi * self.frequency * t)

    def linear_velocity(self, t: float) -> np.ndarray:
        w = 2 * np.pi * self.frequency
        return self.velocity + self.amplitude * w * np.cos(w * t)

    def rotation(self, t: float) -> np.ndarray:
        return rotation_matrix(self.angular_velocity * t)


class Primitive:
    """Base class; subclasses implement ``_local(q) -> (phi, grad)`` in the rest frame."""

    anchor: np.ndarray
    motion: RigidMotion

    def _local(self, q):
        raise NotImplementedError

    def to_rest(self, x, t: float):
        R = self.motion.rotation(t)
        c = self.anchor + self.motion.offset(t)
        return (np.asarray(x, dtype=float) - c) @ R + self.anchor

    def from_rest(self, X, t: float):
        R = self.motion.rotation(t)
        c = self.anchor + self.motion.offset(t)
        return (np.asarray(X, dtype=float) - self.anchor) @ R.T + c

    def query(self, x, t: float = 0.0):
        x = np.asarray(x, dtype=float)
        phi, g = self._local(self.to_rest(x, t))
        R = self.motion.rotation(t)
        return phi, _normalize(g @ R.T)

    def velocity(self, x, t: float = 0.0):
        x = np.asarray(x, dtype=float)
        c = self.anchor + self.motion.offset(t)
        return self.motion.linear_velocity(t) + np.cross(self.motion.angular_velocity, x - c)


@dataclass
class Sphere(Primitive):
    center: np.ndarray
    radius: float
    motion: RigidMotion = field(default_factory=RigidMotion)

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.anchor = self.center

    def _local(self, q):
        d = q - self.center
        r = np.linalg.norm(d, axis=-1)
        return r - self.radius, _normalize(d, fallback=(1.0, 0.0, 0.0))


@dataclass
class Box(Primitive):
    lo: np.ndarray
    hi: np.ndarray
    motion: RigidMotion = field(default_factory=RigidMotion)

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        self.anchor = 0.5 * (self.lo + self.hi)

    def _local(self, q):
        half = 0.5 * (self.hi - self.lo)
        p = q - self.anchor
        s = np.where(p < 0, -1.0, 1.0)
        d = np.abs(p) - half
        out = np.maximum(d, 0.0)
        outside = np.linalg.norm(out, axis=-1)
        inside = np.minimum(d.max(axis=-1), 0.0)
        phi = outside + inside
        g_out = out * s
        axis = np.argmax(d, axis=-1)
        g_in = np.zeros_like(p)
        np.put_along_axis(g_in, axis[..., None], np.take_along_axis(s, axis[..., None], -1), -1)
        g = np.where((outside > 0)[..., None], g_out, g_in)
        return phi, g


@dataclass
class HalfSpace(Primitive):
    """Solid below the plane through ``point`` with outward ``normal``."""

    point: np.ndarray
    normal: np.ndarray
    motion: RigidMotion = field(default_factory=RigidMotion)

    def __post_init__(self):
        self.point = np.asarray(self.point, dtype=float)
        self.normal = _normalize(np.asarray(self.normal, dtype=float))
        self.anchor = self.point

    def _local(self, q):
        phi = (q - self.point) @ self.normal
        return phi, np.broadcast_to(self.normal, np.shape(q)).copy()


@dataclass
class Cylinder(Primitive):
    """Capped cylinder with an arbitrary axis through ``center``."""

    center: np.ndarray
    axis: np.ndarray
    radius: float
    half_height: float
    motion: RigidMotion = field(default_factory=RigidMotion)

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.axis = _normalize(np.asarray(self.axis, dtype=float))
        self.anchor = self.center

    def _local(self, q):
        p = q - self.center
        a = p @ self.axis
        radial = p - a[..., None] * self.axis
        r = np.linalg.norm(radial, axis=-1)
        er = _normalize(radial, fallback=_perpendicular(self.axis))
        ea = np.where(a < 0, -1.0, 1.0)[..., None] * self.axis
        d = np.stack([r - self.radius, np.abs(a) - self.half_height], axis=-1)
        out = np.maximum(d, 0.0)
        outside = np.linalg.norm(out, axis=-1)
        inside = np.minimum(d.max(axis=-1), 0.0)
        g_out = out[..., :1] * er + out[..., 1:] * ea
        g_in = np.where((d[..., 0] >= d[..., 1])[..., None], er, ea)
        g = np.where((outside > 0)[..., None], g_out, g_in)
        return outside + inside, g


def _perpendicular(a):
    a = np.asarray(a, dtype=float)
    e = np.eye(3)[int(np.argmin(np.abs(a)))]
    v = np.cross(a, e)
    return v / np.linalg.norm(v)


@dataclass
class SampledSDF(Primitive):
    """Static signed distance samples on a regular grid (trilinear)."""

    origin: np.ndarray
    dx: float
    values: np.ndarray
    motion: RigidMotion = field(default_factory=RigidMotion)

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.anchor = self.origin

    def _interp(self, q):
        from scipy.ndimage import map_coordinates

        c = (np.asarray(q, dtype=float) - self.origin) / self.dx
        flat = c.reshape(-1, 3).T
        v = map_coordinates(self.values, flat, order=1, mode="nearest")
        return v.reshape(np.shape(q)[:-1])

    def _local(self, q):
        h = 0.5 * self.dx
        g = np.stack([
            self._interp(q + h * e) - self._interp(q - h * e) for e in np.eye(3)
        ], axis=-1)
        return self._interp(q), g


class SolidField:
    """Union of primitives; empty fields report ``phi = +inf``."""

    def __init__(self, primitives=()):
        self.primitives = list(primitives)

    def __bool__(self) -> bool:
        return bool(self.primitives)

    @property
    def is_static(self) -> bool:
        return all(p.motion.is_static for p in self.primitives)

    def _all(self, x, t):
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        best = np.full(shape, np.inf)
        normal = np.zeros(shape + (3,))
        normal[..., 1] = 1.0
        owner = np.full(shape, -1, dtype=np.int64)
        for i, prim in enumerate(self.primitives):
            phi, n = prim.query(x, t)
            take = phi < best
            best = np.where(take, phi, best)
            normal = np.where(take[..., None], n, normal)
            owner = np.where(take, i, owner)
        return best, normal, owner

    def phi(self, x, t: float = 0.0) -> np.ndarray:
        return self._all(x, t)[0]

    def query(self, x, t: float = 0.0):
        """Signed distance and unit normal at ``x``."""
        phi, n, _ = self._all(x, t)
        return phi, n

    def velocity(self, x, t: float = 0.0) -> np.ndarray:
        """Material velocity of the closest primitive at ``x``."""
        x = np.asarray(x, dtype=float)
        _, _, owner = self._all(x, t)
        v = np.zeros(x.shape)
        for i, prim in enumerate(self.primitives):
            sel = owner == i
            if np.any(sel):
                v[sel] = prim.velocity(x[sel], t)
        return v

    def owner(self, x, t: float = 0.0) -> np.ndarray:
        return self._all(x, t)[2]


def sdf_query(solid: SolidField, p, t: float = 0.0):
    return solid.query(p, t)
