import numpy as np
import pytest
from scipy import stats

from tetvof.grid import MacGrid
from tetvof.mesh import HalfSpace, SolidField
from tetvof.spray import (
    Particles,
    advect_particles,
    jitter_rng,
    radius_from_volume,
    read_particles,
    reincorporate_to_grid,
    reincorporate_to_vof,
    spawn,
    volume_from_radius,
    write_particles,
)
from tetvof.vof import WaterState


def one(pos, vel, r):
    return Particles(np.atleast_2d(np.asarray(pos, dtype=float)),
                     np.atleast_2d(np.asarray(vel, dtype=float)), np.atleast_1d(float(r)),
                     np.zeros(1, dtype=np.int64), 1)


def test_unit_sphere_radius():
    assert radius_from_volume(4 * np.pi / 3) == pytest.approx(1.0, abs=1e-15)


def test_radius_round_trip(rng):
    v = 10 ** rng.uniform(-12, 0, 10_000)
    back = volume_from_radius(radius_from_volume(v))
    assert np.abs(back / v - 1).max() <= 1e-12


def test_spawn_without_jitter():
    pos = np.array([[0.1, 0.2, 0.3], [0.5, 0.5, 0.5]])
    p = spawn([1e-3, 2e-3], [[1e-3, 0, 0], [0, 4e-3, 0]], pos, np.zeros((2, 3)), 0.0, 0.1,
              jitter_rng(0))
    np.testing.assert_array_equal(p.position, pos)
    np.testing.assert_allclose(p.velocity, [[1, 0, 0], [0, 2, 0]])
    np.testing.assert_allclose(p.volume, [1e-3, 2e-3], rtol=1e-12)


def test_spawn_skips_bad_volumes(caplog):
    p = spawn([1e-3, 0.0, -1.0], np.zeros((3, 3)), np.zeros((3, 3)), np.zeros((3, 3)), 0.5, 0.1,
              jitter_rng(0))
    assert len(p) == 1
    assert "non-positive" in caplog.text


def test_spawn_rejects_bad_fraction():
    with pytest.raises(ValueError):
        spawn([1.0], np.zeros((1, 3)), np.zeros((1, 3)), np.zeros((1, 3)), 1.5, 0.1, jitter_rng(0))


def test_boundary_entries_pushed_out():
    n = np.array([[0.0, 1.0, 0.0]])
    p = spawn([1e-3], np.zeros((1, 3)), np.zeros((1, 3)), n, 0.5, 0.2, jitter_rng(3))
    # offset one jitter radius along the normal, then jitter within that radius
    assert p.position[0, 1] >= 0.0
    assert np.linalg.norm(p.position[0] - [0, 0.1, 0]) <= 0.1 + 1e-15


def jitters(seed, n=10_000, radius=0.1):
    p = spawn(np.full(n, 1e-6), np.zeros((n, 3)), np.zeros((n, 3)), np.zeros((n, 3)), 0.5,
              2 * radius, jitter_rng(seed))
    return p.position


def test_jitter_octants_uniform():
    d = jitters(17)
    assert np.linalg.norm(d, axis=1).max() <= 0.1 + 1e-15
    octant = (d[:, 0] > 0) + 2 * (d[:, 1] > 0) + 4 * (d[:, 2] > 0)
    counts = np.bincount(octant, minlength=8)
    assert stats.chisquare(counts).pvalue > 0.01
    # radial CDF of a uniform ball is (r / R)^3
    r3 = (np.linalg.norm(d, axis=1) / 0.1) ** 3
    assert stats.kstest(r3, "uniform").pvalue > 0.01


def test_jitter_reproducible():
    np.testing.assert_array_equal(jitters(5), jitters(5))
    assert not np.array_equal(jitters(5), jitters(6))


# -- flight ------------------------------------------------------------------

def test_straight_line():
    p = one([0, 0, 0], [1, 2, 3], 0.01)
    for _ in range(10):
        p = advect_particles(p, (0, 0, 0), None, 0.1)
    np.testing.assert_allclose(p.position[0], [1, 2, 3], rtol=1e-14)


def test_projectile_matches_symplectic_euler_closed_form():
    g = np.array([0.0, -9.81, 0.0])
    v0 = np.array([1.0, 5.0, -0.5])
    dt, n = 0.01, 100
    p = one([0, 1, 0], v0, 0.01)
    for _ in range(n):
        p = advect_particles(p, g, None, dt)
    # x_n = x0 + n dt v0 + dt^2 g n(n+1)/2 for v-then-x updates
    exact = np.array([0, 1, 0]) + n * dt * v0 + dt**2 * g * n * (n + 1) / 2
    assert np.abs(p.position[0] - exact).max() <= 1e-10
    np.testing.assert_allclose(p.velocity[0], v0 + n * dt * g, atol=1e-12)


def floor():
    return SolidField([HalfSpace(point=(0, 0, 0), normal=(0, 1, 0))])


def test_rest_on_floor():
    r = 0.02
    p = one([0.3, r, 0.2], [0, 0, 0], r)
    for _ in range(50):
        p = advect_particles(p, (0, -9.81, 0), floor(), 1 / 120)
    assert p.position[0, 1] == pytest.approx(r, abs=1e-12)
    assert p.velocity[0, 1] == 0.0


def test_never_penetrates(rng):
    n = 300
    p = Particles(rng.random((n, 3)), rng.normal(scale=3, size=(n, 3)), rng.uniform(0.005, 0.03, n),
                  np.arange(n), n)
    s = floor()
    for _ in range(40):
        p = advect_particles(p, (0, -9.81, 0), s, 1 / 60)
        assert np.all(p.position[:, 1] >= p.radius - 1e-6)


def test_bad_dt():
    with pytest.raises(ValueError):
        advect_particles(Particles.empty(), (0, 0, 0), None, 0.0)


# -- reincorporation into the mesh -------------------------------------------------

@pytest.fixture(scope="module")
def cube_frame(cube_mesh):
    from conftest import make_frame
    mesh, pos = cube_mesh
    return mesh, make_frame(mesh, pos)


def test_into_dry_tet_is_ignored(cube_frame):
    mesh, fb = cube_frame
    s = WaterState.empty(mesh.n_tets)
    p = one([0.5, 0.5, 0.5], [1, 0, 0], 0.01)
    out, s2, vol = reincorporate_to_vof(p, s, mesh, fb)
    assert len(out) == 1 and vol == 0.0 and s2.total == 0.0


def test_into_wet_tet(cube_frame, rng):
    mesh, fb = cube_frame
    s = WaterState(fb.capacity * 0.5, np.zeros((mesh.n_tets, 3)))
    n = 200
    p = Particles(rng.uniform(-0.2, 1.2, (n, 3)), rng.normal(size=(n, 3)),
                  rng.uniform(0.001, 0.01, n), np.arange(n), n)
    before = s.total + p.total_volume
    mom_before = s.momentum.sum(0) + p.momentum()
    out, s2, vol = reincorporate_to_vof(p, s, mesh, fb)
    assert 0 < len(out) < n
    assert abs(s2.total + out.total_volume - before) <= 1e-10 * before
    np.testing.assert_allclose(s2.momentum.sum(0) + out.momentum(), mom_before, atol=1e-12)
    inside, _ = fb.locator(mesh).locate_many(out.position)
    assert np.all(inside < 0)  # every survivor is off-mesh


def test_single_particle_bookkeeping(cube_frame):
    mesh, fb = cube_frame
    s = WaterState(fb.capacity * 0.5, np.zeros((mesh.n_tets, 3)))
    p = one([0.41, 0.52, 0.33], [0, -2, 0], 0.01)
    t, _ = fb.locator(mesh).locate_many(p.position)
    out, s2, vol = reincorporate_to_vof(p, s, mesh, fb)
    assert len(out) == 0
    assert s2.water[t[0]] - s.water[t[0]] == pytest.approx(p.volume[0], abs=1e-12)


# -- reincorporation into the grid -------------------------------------------------

def shallow_pool(n=16, level=0.5):
    g = MacGrid.create((n, n, n), 1.0 / n)
    g.phi[:] = (g.cell_centers()[:, 1] - level).reshape(g.dims)
    return g


def test_particle_in_air_untouched():
    g = shallow_pool()
    before = g.phi.copy()
    p = one([0.5, 0.8, 0.5], [0, -1, 0], 0.02)
    out, vol = reincorporate_to_grid(p, g)
    assert len(out) == 1 and vol == 0.0
    np.testing.assert_array_equal(g.phi, before)


def test_momentum_lands_in_stencil(rng):
    for _ in range(20):
        g = shallow_pool()
        x = np.array([0.1, 0.05, 0.1]) + rng.random(3) * [0.8, 0.4, 0.8]
        v = rng.normal(size=3)
        p = one(x, v, 0.03)
        m0 = g.face_momentum()
        out, vol = reincorporate_to_grid(p, g)
        assert len(out) == 0 and vol == pytest.approx(p.volume[0])
        np.testing.assert_allclose(g.face_momentum() - m0, p.volume[0] * v, rtol=0, atol=1e-8)


def test_level_set_blend_depth(rng):
    dx = 1.0 / 16
    for _ in range(20):
        g = shallow_pool()
        r = 2 * dx
        x = np.array([0.3, 0.5 - 0.3 * dx, 0.3]) + rng.random(3) * [0.4, 0, 0.4]
        out, _ = reincorporate_to_grid(one(x, [0, -1, 0], r), g)
        assert g.sample_phi_water(x[None])[0] <= -0.5 * r


def test_expansion_impulse_is_radial():
    g = shallow_pool(32)
    x = np.array([0.5, 0.3, 0.5])
    p = one(x, [0, 0, 0], 0.1)
    reincorporate_to_grid(p, g, kappa_exp=0.5)
    assert not g.u.any()  # zero speed, zero push
    p = one(x, [0, -2.0, 0], 0.1)
    g2 = shallow_pool(32)
    reincorporate_to_grid(p, g2, kappa_exp=0.5)
    fc = g2.face_centers(0)
    off = fc[:, 0] - x[0]
    du = g2.u.ravel()
    near = np.linalg.norm(fc - x, axis=1) < 0.09
    assert np.all(np.sign(du[near & (np.abs(off) > 1e-9)]) == np.sign(off[near & (np.abs(off) > 1e-9)]))


def test_particle_file_round_trip(tmp_path, rng):
    n = 25
    p = Particles(rng.random((n, 3)), rng.normal(size=(n, 3)), rng.random(n) * 0.01, np.arange(n), n)
    write_particles(tmp_path / "p.bin", p, 4)
    back, frame = read_particles(tmp_path / "p.bin")
    assert frame == 4
    for a in ("position", "velocity", "radius", "ids"):
        np.testing.assert_array_equal(getattr(back, a), getattr(p, a))
