"""Scene configuration: YAML files validated into typed models.

Unknown keys are rejected.  Validation errors name the dotted key path and
the line in the source file.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Annotated, Literal, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

Vec3 = tuple[float, float, float]


class SceneError(ValueError):
    pass


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _finite(v):
    vals = v if isinstance(v, (tuple, list)) else (v,)
    if not all(math.isfinite(x) for x in vals):
        raise ValueError("must be finite")
    return v


# --------------------------------------------------------------------------
# geometry
# --------------------------------------------------------------------------

class MotionCfg(_Model):
    velocity: Vec3 = (0.0, 0.0, 0.0)
    angular_velocity: Vec3 = (0.0, 0.0, 0.0)
    amplitude: Vec3 = (0.0, 0.0, 0.0)
    frequency: float = 0.0

    _check = field_validator("velocity", "angular_velocity", "amplitude", "frequency")(_finite)


class SphereCfg(_Model):
    type: Literal["sphere"]
    center: Vec3
    radius: float = Field(gt=0)
    motion: MotionCfg = MotionCfg()


class BoxCfg(_Model):
    type: Literal["box"]
    lo: Vec3
    hi: Vec3
    motion: MotionCfg = MotionCfg()

    @model_validator(mode="after")
    def _ordered(self):
        if not all(a < b for a, b in zip(self.lo, self.hi)):
            raise ValueError("box needs lo < hi on every axis")
        return self


class HalfSpaceCfg(_Model):
    type: Literal["halfspace"]
    point: Vec3
    normal: Vec3
    motion: MotionCfg = MotionCfg()


class CylinderCfg(_Model):
    type: Literal["cylinder"]
    center: Vec3
    axis: Vec3 = (0.0, 1.0, 0.0)
    radius: float = Field(gt=0)
    half_height: float = Field(gt=0)
    motion: MotionCfg = MotionCfg()


ShapeCfg = Annotated[Union[SphereCfg, BoxCfg, HalfSpaceCfg, CylinderCfg], Field(discriminator="type")]


def build_primitive(cfg):
    from .mesh import Box, Cylinder, HalfSpace, RigidMotion, Sphere

    m = RigidMotion(**cfg.motion.model_dump())
    if cfg.type == "sphere":
        return Sphere(center=cfg.center, radius=cfg.radius, motion=m)
    if cfg.type == "box":
        return Box(lo=cfg.lo, hi=cfg.hi, motion=m)
    if cfg.type == "halfspace":
        return HalfSpace(point=cfg.point, normal=cfg.normal, motion=m)
    return Cylinder(center=cfg.center, axis=cfg.axis, radius=cfg.radius,
                    half_height=cfg.half_height, motion=m)


# --------------------------------------------------------------------------
# sections
# --------------------------------------------------------------------------

class GridCfg(_Model):
    dims: tuple[int, int, int]
    dx: float = Field(gt=0)
    origin: Vec3 = (0.0, 0.0, 0.0)

    @field_validator("dims")
    @classmethod
    def _dims(cls, v):
        if min(v) < 2:
            raise ValueError("need at least 2 cells per axis")
        return v

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.origin) + np.asarray(self.dims) * self.dx


class MeshCfg(_Model):
    lo: Vec3
    hi: Vec3
    dx: float = Field(gt=0)
    subdivisions: int = Field(default=1, ge=0, le=4)
    occupancy_samples: Literal[1, 4, 10, 20, 35] = 20


class InletCfg(_Model):
    center: Vec3
    axis: Vec3 = (0.0, 1.0, 0.0)
    radius: float = Field(gt=0)
    half_height: float = Field(gt=0)
    velocity: Vec3
    stop_step: int | None = Field(default=None, ge=0)


class WaterCfg(_Model):
    grid: list[ShapeCfg] = []
    vof: list[ShapeCfg] = []
    inlet: InletCfg | None = None


class TimeCfg(_Model):
    dt: float = Field(default=1.0 / 120.0, gt=0)
    steps: int = Field(default=400, ge=0)
    substeps: int = Field(default=2, ge=1)


class CouplingCfg(_Model):
    beta: float = Field(default=0.0, ge=0.0, le=1.0)


class VofCfg(_Model):
    n_samples: Literal[1, 4, 10, 20, 35] = 10
    adhesion_falloff: float = Field(default=0.01, gt=0)
    k_drag: float = Field(default=0.0, ge=0)


class PaintRegionCfg(_Model):
    kind: Literal["all", "sphere", "box"] = "all"
    center: Vec3 = (0.0, 0.0, 0.0)
    radius: float = Field(default=0.0, ge=0)
    lo: Vec3 = (0.0, 0.0, 0.0)
    hi: Vec3 = (0.0, 0.0, 0.0)


class PaintCfg(_Model):
    region: PaintRegionCfg = PaintRegionCfg()
    alpha: float = Field(ge=0)
    direction: Literal["inward", "outward"] | Vec3 = "inward"


class StrandCfg(_Model):
    points: list[Vec3] = Field(min_length=2)
    radius: float = Field(gt=0)


class SkinningCfg(_Model):
    stiffness: float = Field(default=1.0e3, gt=0)
    damping: float = Field(default=20.0, ge=0)
    attachment_stiffness: float = Field(default=5.0e3, gt=0)
    iterations: int = Field(default=40, ge=0)
    dt_sub: float = Field(default=5.0e-3, gt=0)


class SprayCfg(_Model):
    jitter_frac: float = Field(default=0.5, ge=0.0, le=1.0)
    kappa_exp: float = Field(default=0.0, ge=0.0)


class LevelSetCfg(_Model):
    markers: bool = False
    reinit_iterations: int = Field(default=12, ge=0)
    projection_tol: float = Field(default=1e-8, gt=0)


class OutputCfg(_Model):
    dumps: bool = True
    dump_every: int = Field(default=1, ge=1)
    timings: bool = True
    max_error: float = Field(default=2e-4, gt=0)


class SceneConfig(_Model):
    name: str = "scene"
    grid: GridCfg
    mesh: MeshCfg | None = None
    solids: list[ShapeCfg] = []
    water: WaterCfg = WaterCfg()
    gravity: Vec3 = (0.0, -9.8, 0.0)
    time: TimeCfg = TimeCfg()
    coupling: CouplingCfg = CouplingCfg()
    vof: VofCfg = VofCfg()
    adhesion: list[PaintCfg] = []
    hair: list[StrandCfg] = []
    skinning: SkinningCfg = SkinningCfg()
    spray: SprayCfg = SprayCfg()
    levelset: LevelSetCfg = LevelSetCfg()
    output: OutputCfg = OutputCfg()
    seed: int = 0

    _check = field_validator("gravity")(_finite)

    @model_validator(mode="after")
    def _mesh_inside_grid(self):
        if self.mesh is not None:
            lo = np.asarray(self.grid.origin)
            hi = self.grid.upper
            if np.any(np.asarray(self.mesh.lo) < lo) or np.any(np.asarray(self.mesh.hi) > hi):
                raise ValueError("mesh bounds must lie inside the grid domain")
            if not all(a < b for a, b in zip(self.mesh.lo, self.mesh.hi)):
                raise ValueError("mesh needs lo < hi on every axis")
        return self

    # -- builders ----------------------------------------------------------
    def solid_field(self):
        from .mesh import SolidField

        return SolidField([build_primitive(s) for s in self.solids])

    def paint(self):
        from .bake import Paint, PaintRegion

        return [Paint(PaintRegion(**p.region.model_dump()), p.alpha,
                      p.direction if isinstance(p.direction, str) else tuple(p.direction))
                for p in self.adhesion]

    def strands(self):
        from .bake import Strand

        return [Strand(np.asarray(s.points), s.radius) for s in self.hair]


# --------------------------------------------------------------------------
# parsing and serialization
# --------------------------------------------------------------------------

def _node_at(node, loc):
    """Deepest YAML node along ``loc``; falls back to the last one found."""
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == str(key):
                    nxt = v
                    break
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            nxt = node.value[key]
        else:
            nxt = None
        if nxt is None:
            break
        node = nxt
    return node


def _format_errors(err: ValidationError, root, source: str) -> str:
    lines = []
    for e in err.errors():
        # drop union-tag segments pydantic inserts into the location
        loc = [x for x in e["loc"] if not (isinstance(x, str) and x in
                                             ("sphere", "box", "halfspace", "cylinder"))]
        path = ".".join(str(x) for x in loc) or "<root>"
        where = ""
        if root is not None:
            node = _node_at(root, loc)
            where = f" (line {node.start_mark.line + 1})"
        lines.append(f"{source}: {path}{where}: {e['msg']}")
    return "\n".join(lines)


def parse_scene_text(text: str, source: str = "<string>") -> SceneConfig:
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SceneError(f"{source}: malformed YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise SceneError(f"{source}: top level must be a mapping")
    try:
        return SceneConfig.model_validate(data)
    except ValidationError as exc:
        raise SceneError(_format_errors(exc, root, source)) from None


def parse_scene(path) -> SceneConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SceneError(f"cannot read scene {path}: {exc}") from exc
    return parse_scene_text(text, str(path))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def serialize_scene(cfg: SceneConfig) -> str:
    return yaml.safe_dump(_plain(cfg.model_dump(mode="python")), sort_keys=False)


def preset_path(name: str) -> Path:
    """Path of a scene file shipped with the package."""
    p = Path(__file__).parent / "scenes" / f"{name}.yaml"
    if not p.exists():
        raise SceneError(f"no built-in scene named {name!r}")
    return p


def load_scene(ref) -> SceneConfig:
    """Parse a scene from a path, or a built-in preset name."""
    p = Path(ref)
    if p.suffix in (".yaml", ".yml") or p.exists():
        return parse_scene(p)
    return parse_scene(preset_path(str(ref)))
