"""Partitioned coupling loop between the tet-mesh VOF, spray and the grid."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import spray
from .bake import Bake, BakeInputs, bake_frames
from .coupling import transfer_grid_to_vof, transfer_vof_to_grid
from .grid import (
    Inlet,
    MacGrid,
    advect_levelset,
    advect_velocity,
    apply_gravity,
    apply_inlet,
    extrapolate_velocity,
    project,
    reinitialize,
    seed_markers,
    update_solid,
    write_grid,
)
from .mesh import generate_bcc_lattice, max_edge_lengths
from .scene import SceneConfig, build_primitive
from .vof import (
    TransferLedger,
    WaterState,
    advect,
    apply_adhesion,
    apply_external_forces,
    apply_porosity_drag,
    pushout,
    smear,
    velocity_correction,
    write_state,
)

log = logging.getLogger(__name__)

PHASES = (
    "1a vof.advect",
    "1b spray.advect",
    "1c grid.advect",
    "2a transfer_vof_to_grid",
    "2b transfer_grid_to_vof",
    "2c spray.reincorporate_to_vof",
    "3a vof.external_forces",
    "3b spray.external_forces",
    "3c grid.external_forces",
    "4a vof.adhesion_drag",
    "4a vof.smear",
    "4a vof.pushout",
    "4a vof.velocity_correction",
    "4b spray.reincorporate_to_grid",
    "4b grid.project",
    "4c transfer_grid_to_vof",
    "spray.spawn",
)
GRID_ONLY_PHASES = ("1c grid.advect", "3c grid.external_forces", "4b grid.project")

CSV_HEADER = ("frame", "vof_vol", "particle_vol", "grid_vol", "ledger_in", "ledger_out",
              "cons_err_rel", "mom_x", "mom_y", "mom_z", "ms_advect", "ms_conserve", "ms_project")


class PhaseError(RuntimeError):
    def __init__(self, phase: str, step: int, cause: BaseException):
        super().__init__(f"step {step}, phase {phase}: {cause}")
        self.phase = phase
        self.step = step


@dataclass
class Flows:
    """Volume crossing the VOF+spray boundary during one step."""

    from_grid: float = 0.0
    overwrite_in: float = 0.0
    overwrite_out: float = 0.0
    to_grid: float = 0.0
    dust: float = 0.0

    @property
    def inflow(self) -> float:
        return self.from_grid + self.overwrite_in

    @property
    def outflow(self) -> float:
        return self.to_grid + self.dust + self.overwrite_out

    def overwrite(self, delta: float) -> None:
        if delta >= 0:
            self.overwrite_in += delta
        else:
            self.overwrite_out -= delta


@dataclass
class Simulation:
    cfg: SceneConfig
    bake: Bake | None
    grid: MacGrid
    state: WaterState | None
    particles: spray.Particles
    solid: object
    inlet: Inlet | None
    rng: np.random.Generator
    grid_only: bool = False
    disabled: frozenset = frozenset()
    step_index: int = 0
    injected: float = 0.0
    initial_grid_volume: float = 0.0
    trace: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    _faces: object = None
    _max_edge: float = 0.0

    @property
    def dt(self) -> float:
        return self.cfg.time.dt

    @property
    def time(self) -> float:
        return self.step_index * self.dt

    @property
    def mesh(self):
        return self.bake.mesh if self.bake is not None else None

    def subsystem_volume(self) -> float:
        v = self.particles.total_volume
        if self.state is not None:
            v += self.state.total
        return v

    def subsystem_momentum(self) -> np.ndarray:
        m = self.particles.momentum() if len(self.particles) else np.zeros(3)
        if self.state is not None:
            m = m + self.state.momentum.sum(axis=0)
        return m


# --------------------------------------------------------------------------
# construction
# --------------------------------------------------------------------------

def bake_scene(cfg: SceneConfig, first: int = 0, last: int | None = None) -> Bake:
    if cfg.mesh is None:
        raise ValueError("scene has no mesh section")
    if last is None:
        last = cfg.time.steps
    m = cfg.mesh
    coarse, rest = generate_bcc_lattice(m.lo, m.hi, m.dx)
    inputs = BakeInputs(coarse_mesh=coarse, coarse_rest=rest, subdivisions=m.subdivisions,
                        solid=cfg.solid_field(), frame_dt=cfg.time.dt,
                        occupancy_samples=m.occupancy_samples,
                        skinning=cfg.skinning.model_dump(), paint=cfg.paint(),
                        strands=cfg.strands())
    return bake_frames(inputs, first, last)


def _union_phi(shapes, points) -> np.ndarray:
    phi = np.full(len(points), np.inf)
    for s in shapes:
        phi = np.minimum(phi, build_primitive(s).query(points)[0])
    return phi


def build_simulation(cfg: SceneConfig, bake: Bake | None = None, grid_only: bool = False,
                     seed: int | None = None, disabled=()) -> Simulation:
    unknown = set(disabled) - set(PHASES)
    if unknown:
        raise ValueError(f"unknown phases {sorted(unknown)}")
    g = cfg.grid
    grid = MacGrid.create(g.dims, g.dx, g.origin)
    solid = cfg.solid_field()
    if cfg.water.grid:
        phi = _union_phi(cfg.water.grid, grid.cell_centers()).reshape(grid.dims)
        grid.phi = reinitialize(np.minimum(phi, grid.phi), grid.dx, 2 * cfg.levelset.reinit_iterations)
    if cfg.levelset.markers:
        seed_markers(grid)
    inlet = None
    if cfg.water.inlet is not None:
        i = cfg.water.inlet
        inlet = Inlet(i.center, i.axis, i.radius, i.half_height, i.velocity)
    rng = spray.jitter_rng(cfg.seed if seed is None else seed)

    state = None
    if not grid_only and cfg.mesh is not None:
        if bake is None:
            bake = bake_scene(cfg)
        if bake.n_frames < cfg.time.steps + 1:
            raise ValueError(f"bake has {bake.n_frames} frames, need {cfg.time.steps + 1}")
        fb = bake.frame(0)
        state = WaterState.empty(bake.mesh.n_tets)
        if cfg.water.vof:
            c = fb.centroids(bake.mesh)
            inside = _union_phi(cfg.water.vof, c) < 0
            state.water[inside] = fb.capacity[inside]
    elif grid_only:
        bake = None

    sim = Simulation(cfg=cfg, bake=bake, grid=grid, state=state, particles=spray.Particles.empty(),
                     solid=solid, inlet=inlet, rng=rng, grid_only=grid_only,
                     disabled=frozenset(disabled))
    sim._faces = update_solid(grid, solid, 0.0)
    if bake is not None:
        sim._max_edge = float(max_edge_lengths(bake.mesh, bake.frame(0).node_positions).max())
    sim.initial_grid_volume = grid.water_volume()
    return sim


# --------------------------------------------------------------------------
# stepping
# --------------------------------------------------------------------------

class _Phases:
    def __init__(self, sim: Simulation):
        self.sim = sim
        self.trace = []

    def run(self, name: str, fn):
        self.trace.append(name)
        if name in self.sim.disabled:
            return
        try:
            fn()
        except Exception as exc:  # label and re-raise
            raise PhaseError(name, self.sim.step_index, exc) from exc


def _clamp_to_domain(p: spray.Particles, grid: MacGrid) -> spray.Particles:
    if len(p) == 0:
        return p
    lo = grid.origin + p.radius[:, None]
    hi = grid.upper - p.radius[:, None]
    x = np.clip(p.position, lo, np.maximum(hi, lo))
    v = p.velocity.copy()
    v[(x > p.position) & (v < 0)] = 0.0
    v[(x < p.position) & (v > 0)] = 0.0
    return spray.Particles(x, v, p.radius, p.ids, p.next_id)


def step(sim: Simulation) -> dict:
    """Advance one time step; returns the diagnostics row."""
    cfg = sim.cfg
    dt = sim.dt
    t0, t1 = sim.time, sim.time + dt
    f = sim.step_index
    ph = _Phases(sim)
    flows = Flows()
    ledger = TransferLedger()
    ms = {"advect": 0.0, "conserve": 0.0, "project": 0.0}
    v_before = sim.subsystem_volume()
    coupled = not sim.grid_only and sim.state is not None
    mesh = sim.mesh
    fb_old = sim.bake.frame(f) if coupled else None
    fb_new = sim.bake.frame(f + 1) if coupled else None
    faces = sim._faces
    if not sim.solid.is_static:
        faces = sim._faces = update_solid(sim.grid, sim.solid, t1)

    def timed(key, fn):
        def wrapped():
            a = time.perf_counter()
            fn()
            ms[key] += (time.perf_counter() - a) * 1e3
        return wrapped

    # 1. advection
    if coupled:
        def p1a():
            sim.state, led = advect(sim.state, mesh, fb_old, fb_new, dt, sim.grid,
                                    cfg.vof.n_samples, sim.solid, t0, t1)
            ledger.merge(led)
        ph.run("1a vof.advect", timed("advect", p1a))

        def p1b():
            sim.particles = _clamp_to_domain(spray.move(sim.particles, sim.solid, dt, t1), sim.grid)
        ph.run("1b spray.advect", timed("advect", p1b))

    def p1c():
        g = advect_velocity(sim.grid, dt)
        g = advect_levelset(g, dt, cfg.levelset.reinit_iterations)
        sim.grid = g
    ph.run("1c grid.advect", timed("advect", p1c))

    # 2. momentum transfer
    if coupled:
        def p2a():
            if cfg.coupling.beta > 0:
                sim.grid = transfer_vof_to_grid(sim.state, mesh, fb_new, sim.grid, cfg.coupling.beta)
        ph.run("2a transfer_vof_to_grid", p2a)

        def p2b():
            sim.state, d = transfer_grid_to_vof(sim.state, mesh, fb_new, sim.grid)
            flows.overwrite(d)
        ph.run("2b transfer_grid_to_vof", p2b)

        def p2c():
            sim.particles, sim.state, _ = spray.reincorporate_to_vof(sim.particles, sim.state,
                                                                     mesh, fb_new)
        ph.run("2c spray.reincorporate_to_vof", p2c)

        # 3. external forces
        def p3a():
            sim.state = apply_external_forces(sim.state, cfg.gravity, dt)
        ph.run("3a vof.external_forces", p3a)

        def p3b():
            sim.particles = spray.add_gravity(sim.particles, cfg.gravity, dt)
        ph.run("3b spray.external_forces", p3b)

    def p3c():
        g = apply_gravity(sim.grid, cfg.gravity, dt)
        if sim.inlet is not None and (cfg.water.inlet.stop_step is None
                                      or f < cfg.water.inlet.stop_step):
            sim.injected += apply_inlet(g, sim.inlet)
        sim.grid = g
    ph.run("3c grid.external_forces", p3c)

    # 4. volume conservation
    if coupled:
        def p4f():
            s = apply_adhesion(sim.state, fb_new, dt, cfg.vof.adhesion_falloff)
            sim.state = apply_porosity_drag(s, fb_new, dt, cfg.vof.k_drag)
        ph.run("4a vof.adhesion_drag", timed("conserve", p4f))

        def p4s():
            sim.state = smear(sim.state, mesh, fb_new)
        ph.run("4a vof.smear", timed("conserve", p4s))

        def p4p():
            sim.state, _ = pushout(sim.state, mesh, fb_new, ledger)
        ph.run("4a vof.pushout", timed("conserve", p4p))

        def p4v():
            sim.state, _ = velocity_correction(sim.state, mesh, fb_new)
        ph.run("4a vof.velocity_correction", timed("conserve", p4v))

        def p4r():
            sim.particles, vol = spray.reincorporate_to_grid(sim.particles, sim.grid,
                                                             cfg.spray.kappa_exp)
            flows.to_grid += vol
        ph.run("4b spray.reincorporate_to_grid", p4r)

    def p4g():
        g = project(sim.grid, dt, cfg.levelset.projection_tol, faces)
        extrapolate_velocity(g, faces)
        sim.grid = g
    ph.run("4b grid.project", timed("project", p4g))

    if coupled:
        def p4c():
            sim.state, d = transfer_grid_to_vof(sim.state, mesh, fb_new, sim.grid)
            flows.overwrite(d)
        ph.run("4c transfer_grid_to_vof", p4c)

        def pspawn():
            vol, mom, pos, nrm = ledger.particle_entries()
            new = spray.spawn(vol, mom, pos, nrm, cfg.spray.jitter_frac, sim._max_edge, sim.rng,
                              sim.particles.next_id)
            sim.particles = sim.particles.extend(new)
        ph.run("spray.spawn", pspawn)

    expected = [p for p in PHASES if p in ph.trace]
    wanted = list(PHASES) if coupled else list(GRID_ONLY_PHASES)
    if ph.trace != wanted or ph.trace != expected:
        raise RuntimeError(f"phase order violated: {ph.trace}")

    flows.from_grid = ledger.from_grid
    flows.dust = ledger.dust
    # spawned-but-unspawned volume would be missing if spawning is ablated
    if "spray.spawn" in sim.disabled:
        flows.dust += ledger.to_particles
    v_after = sim.subsystem_volume()
    denom = max(v_before, v_after, 1e-300)
    err = abs((v_after - v_before) - (flows.inflow - flows.outflow)) / denom
    if v_before == 0.0 and v_after == 0.0:
        err = 0.0
    mom = sim.subsystem_momentum()
    sim.step_index += 1
    sim.trace = ph.trace
    keep_time = cfg.output.timings
    row = {
        "frame": sim.step_index,
        "vof_vol": sim.state.total if sim.state is not None else 0.0,
        "particle_vol": sim.particles.total_volume,
        "grid_vol": sim.grid.water_volume(),
        "ledger_in": flows.inflow,
        "ledger_out": flows.outflow,
        "cons_err_rel": err,
        "mom_x": mom[0], "mom_y": mom[1], "mom_z": mom[2],
        "ms_advect": ms["advect"] if keep_time else 0.0,
        "ms_conserve": ms["conserve"] if keep_time else 0.0,
        "ms_project": ms["project"] if keep_time else 0.0,
    }
    sim.rows.append(row)
    return row


# --------------------------------------------------------------------------
# run loop and outputs
# --------------------------------------------------------------------------

def format_row(row: dict) -> list[str]:
    out = []
    for k in CSV_HEADER:
        v = row[k]
        out.append(str(v) if k == "frame" else repr(float(v)))
    return out


def write_frame(sim: Simulation, out: Path) -> None:
    d = out / "frames"
    d.mkdir(parents=True, exist_ok=True)
    tag = f"{sim.step_index:05d}"
    write_grid(d / f"grid_{tag}.bin", sim.grid, sim.step_index)
    spray.write_particles(d / f"spray_{tag}.bin", sim.particles, sim.step_index)
    if sim.state is not None:
        write_state(d / f"vof_{tag}.bin", sim.state, sim.step_index)


def run(sim: Simulation, steps: int | None = None, out: Path | str | None = None,
        progress=None) -> list[dict]:
    """Run ``steps`` steps, streaming the diagnostics CSV and frame dumps to ``out``."""
    cfg = sim.cfg
    steps = cfg.time.steps if steps is None else steps
    writer = None
    fh = None
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        fh = open(out / "diagnostics.csv", "w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        if cfg.output.dumps:
            write_frame(sim, out)
    try:
        for _ in range(steps):
            row = step(sim)
            if writer is not None:
                writer.writerow(format_row(row))
                fh.flush()
                every = cfg.time.substeps * cfg.output.dump_every
                if cfg.output.dumps and sim.step_index % every == 0:
                    write_frame(sim, out)
            if progress is not None:
                progress(sim, row)
    finally:
        if fh is not None:
            fh.close()
    return sim.rows


def grid_volume_loss(sim: Simulation) -> float:
    """Fraction of (initial + injected) grid water that has disappeared."""
    total = sim.initial_grid_volume + sim.injected
    if total <= 0:
        return 0.0
    return (total - sim.grid.water_volume()) / total
