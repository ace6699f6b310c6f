"""Acceptance suite: one or more tests per numbered criterion.

Every test records its outcome through the ``criterion`` fixture, and the
terminal summary prints one PASS/FAIL line per criterion.  Criteria 1, 2 and
11 drive the installed CLI in fresh subprocesses pinned to one thread.
"""
import json
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from tetvof import sim as S
from tetvof.bake import BakeInputs, bake_frames, compute_occupancy, compute_ranks
from tetvof.grid import MacGrid, apply_gravity, divergence, project
from tetvof.mesh import SampledSDF, SolidField, Sphere, generate_bcc_lattice, tet_volumes
from tetvof.scene import load_scene, serialize_scene
from tetvof.spray import radius_from_volume, volume_from_radius
from tetvof.vof import (
    PARALLEL_DRAG,
    WaterState,
    adhesion_impulse,
    advect,
    porosity_drag_velocity,
    pushout,
    smear,
    velocity_correction,
)

from conftest import make_frame, tetrahelix
from test_bake import dijkstra_ranks
from test_vof import block_state, brute_force_transport, ledger_balance

BALL_STEPS = 400
TIME_BUDGET = 20 * 60.0


def cli(*args, timeout=None):
    env = dict(os.environ, TETVOF_THREADS="1", NUMBA_NUM_THREADS="1", OMP_NUM_THREADS="1")
    t = time.perf_counter()
    r = subprocess.run([sys.executable, "-m", "tetvof", *args], capture_output=True, text=True,
                       env=env, timeout=timeout)
    return r, time.perf_counter() - t


# -- 1, 2: ball stream -------------------------------------------------------------

@pytest.fixture(scope="module")
def ball_coupled(tmp_path_factory):
    out = tmp_path_factory.mktemp("ball") / "coupled"
    r, secs = cli("sim", "--scene", "ball_stream", "--steps", str(BALL_STEPS), "--out", str(out))
    assert r.returncode == 0, r.stderr[-2000:]
    return json.loads((out / "summary.json").read_text()), secs


@pytest.fixture(scope="module")
def ball_grid_only(tmp_path_factory):
    out = tmp_path_factory.mktemp("ball") / "grid_only"
    r, _ = cli("sim", "--scene", "ball_stream", "--steps", str(BALL_STEPS), "--out", str(out),
               "--compare-levelset-only")
    assert r.returncode == 0, r.stderr[-2000:]
    return json.loads((out / "summary.json").read_text())


def _coupled_ok(summary) -> bool:
    return summary["mean_cons_err_rel"] <= 1e-4 and summary["max_cons_err_rel"] <= 2e-4


def test_c01_ball_stream_conservation(ball_coupled, criterion):
    c = criterion(1, "volume conservation, ball stream")
    s, secs = ball_coupled
    c.check(s["steps"] == BALL_STEPS and _coupled_ok(s) and secs <= TIME_BUDGET,
            f"mean {100 * s['mean_cons_err_rel']:.2e} %, max {100 * s['max_cons_err_rel']:.2e} % "
            f"over {s['steps']} steps in {secs / 60:.1f} min (bake included)")


def test_c02_grid_only_drifts(ball_coupled, ball_grid_only, criterion):
    c = criterion(2, "level-set drift contrast")
    loss = ball_grid_only["grid_volume_loss"]
    c.check(loss >= 0.01 and _coupled_ok(ball_coupled[0]),
            f"grid-only loses {100 * loss:.2f} % over {ball_grid_only['steps']} steps; "
            f"coupled max error {100 * ball_coupled[0]['max_cons_err_rel']:.2e} %")


# -- 3: saturation ---------------------------------------------------------------

CHECKED = ("4a vof.pushout", "4a vof.velocity_correction", "4c transfer_grid_to_vof",
           "spray.spawn")


def test_c03_saturation_in_scene(monkeypatch, criterion):
    c = criterion(3, "saturation invariant")
    cfg = load_scene("splash_box")
    bake = S.bake_scene(cfg)
    sim = S.build_simulation(cfg, bake)
    worst = [0.0]
    bad = []
    orig = S._Phases.run

    def run(self, name, fn):
        orig(self, name, fn)
        if name in CHECKED:
            fb = sim.bake.frame(sim.step_index + 1)
            excess = sim.state.water - fb.capacity * (1 + 1e-9)
            excess[fb.pocket] = -np.inf
            worst[0] = max(worst[0], float(np.max(sim.state.water / np.maximum(fb.capacity, 1e-300)
                                                  * ~fb.pocket)))
            if np.any(excess > 0):
                bad.append((sim.step_index, name, int(np.sum(excess > 0))))

    monkeypatch.setattr(S._Phases, "run", run)
    for _ in range(cfg.time.steps):
        S.step(sim)
    c.check(not bad, f"splash scene {cfg.time.steps} steps: {len(bad)} violations, "
                     f"max fill ratio {worst[0]:.12f}")


def test_c03_enclosed_pocket(criterion):
    c = criterion(3, "saturation invariant")
    mesh, pos = generate_bcc_lattice((0, 0, 0), (1, 1, 1), 0.1)
    h = 0.02
    ax = np.arange(0, 1 + h / 2, h)
    x = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), -1)
    shell = np.abs(np.linalg.norm(x - 0.5, axis=-1) - 0.26) - 0.07
    solid = SolidField([SampledSDF(origin=(0, 0, 0), dx=h, values=shell)])
    fb = bake_frames(BakeInputs(mesh, pos, 0, solid, 1 / 60, 10), 0, 0).frame(0)
    cavity = (np.linalg.norm(fb.centroids(mesh) - 0.5, axis=1) < 0.19) & (fb.rank >= 0)
    s = WaterState.empty(mesh.n_tets)
    s.water[cavity] = 2 * fb.capacity[cavity]
    s.momentum[cavity] = s.water[cavity, None] * np.array([0.0, -1.0, 0.0])
    out, led = pushout(smear(s, mesh, fb), mesh, fb)
    over = out.water > fb.capacity * (1 + 1e-9)
    kept = abs(out.total - s.total) <= 1e-12 * s.total and led.particle_entries()[0].size == 0
    c.check(fb.pocket.any() and not np.any(over & ~fb.pocket) and np.all(fb.pocket[over]) and kept,
            f"hollow shell: {int(fb.pocket.sum())} pocket tets hold the excess, "
            f"{int(np.sum(over & ~fb.pocket))} others over capacity")


# -- 4: ranks ---------------------------------------------------------------------

def test_c04_ranks_match_dijkstra(criterion):
    c = criterion(4, "rank oracle")
    rng = np.random.default_rng(404)
    sizes, mismatched = [], 0
    for _ in range(20):
        dx = rng.uniform(0.12, 0.2)
        ext = rng.uniform(0.5, 1.0, 3)
        mesh, pos = generate_bcc_lattice((0, 0, 0), ext, dx)
        pos = pos + rng.uniform(-0.15, 0.15, pos.shape) * dx
        spheres = [Sphere(center=rng.uniform(0, 1, 3) * ext, radius=rng.uniform(0.1, 0.35))
                   for _ in range(rng.integers(1, 4))]
        sf = compute_occupancy(mesh, pos, SolidField(spheres), 10)
        sizes.append(mesh.n_tets)
        mismatched += not np.array_equal(compute_ranks(mesh, sf), dijkstra_ranks(mesh, sf))
    c.check(mismatched == 0 and max(sizes) <= 5000,
            f"{20 - mismatched}/20 meshes exact ({min(sizes)}..{max(sizes)} tets)")


# -- 5: advection -------------------------------------------------------------------

def test_c05_advection_oracle(criterion):
    c = criterion(5, "advection oracle")
    dx = 0.1
    mesh, pos = generate_bcc_lattice((0, 0, 0), (1.0, 0.6, 0.6), dx)
    fb = make_frame(mesh, pos)
    u = np.array([1.0, 0.0, 0.0])
    s, _ = block_state(mesh, fb, (0.25, 0.15, 0.15), (0.55, 0.45, 0.45), u)
    worst_err, worst_led = 0.0, 0.0
    for k in range(3):
        new, led = advect(s, mesh, fb, fb, dx)
        oracle = brute_force_transport(mesh, pos, s.water, u * dx, seed=k)
        worst_err = max(worst_err, float(np.max(np.abs(new.water - oracle) / fb.capacity)))
        worst_led = max(worst_led, abs(ledger_balance(s, new, led)) / s.total)
        s = new
    c.check(worst_err <= 0.05 and worst_led <= 1e-10,
            f"per-tet error {100 * worst_err:.2f} % of capacity, ledger residual {worst_led:.1e}")


# -- 6: projection ------------------------------------------------------------------

def test_c06_projection(criterion):
    c = criterion(6, "projection")
    n = 32
    g = MacGrid.create((n, n, n), 1.0 / n)
    cc = g.cell_centers()
    g.phi[:] = np.maximum(cc[:, 0] - 0.4, cc[:, 1] - 0.6).reshape(g.dims)
    g = project(apply_gravity(g, (0, -9.8, 0), 0.01), 0.01, tol=1e-10)
    vmax = max(np.abs(a).max() for a in (g.u, g.v, g.w))
    div = np.abs(divergence(g)[g.phi < 0]).max() * g.dx / vmax

    t = MacGrid.create((n, n, n), 1.0 / n)
    t.phi[:] = (t.cell_centers()[:, 1] - 0.5).reshape(t.dims)
    t = project(apply_gravity(t, (0, -9.8, 0), 1 / 120), 1 / 120, tol=1e-10)
    wet = np.zeros(t.v.shape, dtype=bool)
    wet[:, 1:] |= t.phi < 0
    wet[:, :-1] |= t.phi < 0
    resid = max(np.abs(t.v[wet]).max(), np.abs(t.u).max(), np.abs(t.w).max())
    c.check(div <= 1e-6 and resid <= 1e-4,
            f"dam break divergence {div:.1e} (relative), hydrostatic residual {resid:.1e} m/s")


# -- 7: momentum ------------------------------------------------------------------

def _ball_frame(hair: float = 0.0):
    """Box mesh around an interior sphere solid, optionally filled with hair."""
    mesh, pos = generate_bcc_lattice((0, 0, 0), (1, 1, 1), 0.1)
    sf = compute_occupancy(mesh, pos, SolidField([Sphere(center=(0.5, 0.5, 0.5), radius=0.15)]), 10)
    hf = np.where(sf < 1, hair * (1 - sf), 0.0)
    return mesh, make_frame(mesh, pos, solid_frac=sf, hair_frac=hf), tet_volumes(mesh.tets, pos)


def _random_state(mesh, fb, rng):
    """Excess concentrated near the solid, plenty of room further out, dry boundary."""
    r = np.linalg.norm(fb.centroids(mesh) - 0.5, axis=1)
    near = (r < 0.3) & (fb.capacity > 0)
    water = fb.capacity * rng.uniform(0.0, 0.5, mesh.n_tets)
    hot = near & (rng.random(mesh.n_tets) < 0.3)
    water[hot] = fb.capacity[hot] * rng.uniform(1.0, 3.0, hot.sum())
    water[r > 0.4] = 0.0
    v = np.array([1.0, -2.0, 0.5]) + rng.normal(size=(mesh.n_tets, 3))
    return WaterState(water, water[:, None] * v)


def test_c07_momentum(criterion):
    c = criterion(7, "momentum conservation")
    mesh, fb, _ = _ball_frame()
    rng = np.random.default_rng(707)
    worst, leaked = 0.0, 0
    for _ in range(50):
        s = _random_state(mesh, fb, rng)
        out, led = pushout(smear(s, mesh, fb), mesh, fb)
        leaked += led.particle_entries()[0].size > 0
        p0 = s.momentum.sum(0)
        worst = max(worst, np.linalg.norm(out.momentum.sum(0) - p0) / np.linalg.norm(p0))
    c.check(leaked == 0 and worst <= 1e-10,
            f"50 states, worst relative drift {worst:.1e}, {leaked} with boundary overflow")


# -- 8: velocity correction ------------------------------------------------------------

def test_c08_velocity_correction(criterion):
    c = criterion(8, "velocity correction")
    mesh, pos = tetrahelix(20)
    sf = np.zeros(20)
    sf[0] = 0.5
    nrm = np.array([0.6, 0.8, 0.0])
    vs = 0.3 * nrm
    fb = make_frame(mesh, pos, solid_frac=sf, rank=np.arange(20),
                    surf_normal=np.tile(nrm, (20, 1)), surf_velocity=np.tile(vs, (20, 1)))
    rng = np.random.default_rng(808)
    W = fb.capacity.copy()
    s = WaterState(W, W[:, None] * rng.normal(size=(20, 3)))
    once, flags = velocity_correction(s, mesh, fb)
    twice, _ = velocity_correction(once, mesh, fb)
    idem = np.abs(twice.momentum - once.momentum).max()

    v0, v1 = s.velocity(), once.velocity()
    vn0, vn1 = v0 @ nrm, v1 @ nrm
    target = vs @ nrm
    inflow = flags & (vn0 < target)
    expect_n = np.where(inflow, target, vn0)
    tang0 = v0 - vn0[:, None] * nrm
    tang1 = v1 - vn1[:, None] * nrm
    clamp = max(np.abs(vn1 - expect_n).max(), np.abs(tang1 - tang0).max())
    c.check(idem <= 1e-12 and clamp <= 1e-12 and inflow.any() and (flags & ~inflow).any(),
            f"idempotence {idem:.1e}, clamp error {clamp:.1e} "
            f"({int(inflow.sum())} clamped, {int((~inflow).sum())} untouched)")


# -- 9: adhesion -------------------------------------------------------------------

def test_c09_adhesion(criterion):
    c = criterion(9, "adhesion formula")
    rng = np.random.default_rng(909)
    worst = 0.0
    for _ in range(20):
        phi_a, alpha, water, dt = rng.uniform(0.005, 0.05), rng.uniform(0.1, 10), \
            rng.uniform(1e-4, 2.0), rng.uniform(1e-3, 0.05)
        d = rng.normal(size=3)
        d = np.tile(d / np.linalg.norm(d), (3, 1))
        imp = adhesion_impulse(np.full(3, water), np.full(3, alpha),
                               np.array([0.0, phi_a / 2, phi_a]), d, dt, phi_a)
        expected = np.array([alpha, alpha / 2, 0.0])[:, None] * water * dt * d
        worst = max(worst, float(np.abs(imp - expected).max()))
    c.check(worst <= 1e-12, f"max deviation {worst:.1e} at phi in {{0, phi_a/2, phi_a}}")


# -- 10: porosity ------------------------------------------------------------------

def test_c10_porosity(criterion):
    c = criterion(10, "porosity")
    rng = np.random.default_rng(1010)
    mesh, fb, vol = _ball_frame(hair=0.3)
    cap_err = np.abs(fb.capacity - vol * (1 - fb.solid_frac - fb.hair_frac)).max()
    over = 0
    for _ in range(20):
        s = _random_state(mesh, fb, rng)
        out, _ = pushout(smear(s, mesh, fb), mesh, fb)
        wet = out.water > 0
        over += int(np.sum(wet & (out.water > fb.capacity * (1 + 1e-9)) & ~fb.pocket))

    hd = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]])
    du = porosity_drag_velocity(np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]), hd,
                                np.full(2, 0.3), 0.01, 20.0)
    ratio = np.linalg.norm(du[1]) / np.linalg.norm(du[0])
    c.check(cap_err <= 1e-15 and over == 0 and abs(ratio - 5.0) <= 1e-12 * 5
            and abs(1 / PARALLEL_DRAG - 5.0) <= 1e-12,
            f"capacity formula error {cap_err:.1e}, {over} wet tets over capacity, "
            f"orthogonal/parallel drag {ratio:.12f}")


# -- 11: determinism ---------------------------------------------------------------

def test_c11_determinism(tmp_path, criterion):
    c = criterion(11, "determinism")
    cfg = load_scene("splash_box")
    cfg = cfg.model_copy(update={"output": cfg.output.model_copy(update={"timings": False})})
    scene = tmp_path / "splash.yaml"
    scene.write_text(serialize_scene(cfg))
    csv = []
    for name in ("a", "b"):
        r, _ = cli("sim", "--scene", str(scene), "--out", str(tmp_path / name))
        assert r.returncode == 0, r.stderr[-2000:]
        csv.append((tmp_path / name / "diagnostics.csv").read_bytes())
    rows = csv[0].count(b"\n") - 1
    c.check(csv[0] == csv[1] and rows == cfg.time.steps,
            f"two single-threaded runs, {rows} rows, identical bytes: {csv[0] == csv[1]}")


# -- 12: spawn radius --------------------------------------------------------------

def test_c12_radius_round_trip(criterion):
    c = criterion(12, "spawn radius")
    v = 10.0 ** np.random.default_rng(1212).uniform(-15, 0, 10_000)
    r = radius_from_volume(v)
    back = volume_from_radius(r)
    err = float(np.max(np.abs(back - v) / v))
    ident = float(np.max(np.abs(4.0 / 3.0 * np.pi * r**3 - v) / v))
    c.check(err <= 1e-12 and ident <= 1e-12, f"max relative round-trip error {max(err, ident):.1e}")
