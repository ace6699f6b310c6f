import numpy as np
import pytest

from tetvof.bake import FrameBake, build_escalation, compute_ranks
from tetvof.mesh import TetMesh, generate_bcc_lattice, tet_volumes


def make_frame(mesh: TetMesh, pos, *, solid_frac=None, rank=None, hair_frac=None,
               disabled=None, surf_normal=None, surf_velocity=None, surf_phi=None,
               adhesion_alpha=None, adhesion_dir=None, hair_dir=None, node_velocities=None,
               pocket=None) -> FrameBake:
    """Hand-assembled frame data with neutral defaults."""
    n = mesh.n_tets
    pos = np.asarray(pos, dtype=float)
    vol = tet_volumes(mesh.tets, pos)
    sf = np.zeros(n) if solid_frac is None else np.asarray(solid_frac, dtype=float)
    hf = np.zeros(n) if hair_frac is None else np.asarray(hair_frac, dtype=float)
    dis = np.zeros(n, dtype=bool) if disabled is None else np.asarray(disabled, dtype=bool)
    rk = compute_ranks(mesh, sf) if rank is None else np.asarray(rank, dtype=np.int64)
    off, items, pk = build_escalation(mesh, rk, dis)
    if pocket is not None:
        pk = np.asarray(pocket, dtype=bool)
    cap = np.maximum(vol * (1 - sf - hf), 0.0)
    cap[dis] = 0.0
    z3 = np.zeros((n, 3))
    return FrameBake(
        node_positions=pos,
        node_velocities=np.zeros_like(pos) if node_velocities is None else node_velocities,
        volume=vol, rank=rk, solid_frac=sf, capacity=cap,
        surf_normal=np.tile([0.0, 1.0, 0.0], (n, 1)) if surf_normal is None else surf_normal,
        surf_velocity=z3.copy() if surf_velocity is None else surf_velocity,
        surf_phi=np.full(n, np.inf) if surf_phi is None else surf_phi,
        esc_offsets=off, esc_items=items, pocket=pk,
        adhesion_alpha=np.zeros(n) if adhesion_alpha is None else adhesion_alpha,
        adhesion_dir=z3.copy() if adhesion_dir is None else adhesion_dir,
        hair_frac=hf, hair_dir=z3.copy() if hair_dir is None else hair_dir, disabled=dis,
    )


def tetrahelix(n_tets: int = 20):
    """A column of tets, consecutive ones sharing a face."""
    i = np.arange(n_tets + 3)
    ang = i * 2.0 * np.pi / 3.0
    pos = np.stack([np.cos(ang), i * 0.4, np.sin(ang)], axis=1)
    tets = np.stack([i[:-3], i[1:-2], i[2:-1], i[3:]], axis=1)
    vol = tet_volumes(tets, pos)
    tets[vol < 0] = tets[vol < 0][:, [1, 0, 2, 3]]
    return TetMesh.from_tets(tets, len(pos)), pos


@pytest.fixture(scope="session")
def cube_mesh():
    mesh, pos = generate_bcc_lattice((0, 0, 0), (1, 1, 1), 0.25)
    return mesh, pos


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting --------------------------------------------------------

_CRITERIA = pytest.StashKey[dict]()


class Criterion:
    def __init__(self, table: dict, number: int, name: str):
        self.table, self.number, self.name = table, number, name
        self.done = False

    def check(self, ok: bool, detail: str) -> None:
        self.done = True
        ok = bool(ok)
        prev = self.table.get(self.number)
        if prev is not None:
            ok = ok and prev[1]
            detail = f"{prev[2]}; {detail}"
        self.table[self.number] = (self.name, ok, detail)
        assert ok, f"criterion {self.number} ({self.name}): {detail}"


@pytest.fixture
def criterion(request):
    """``criterion(n, name)`` returns a recorder; a test that dies early is recorded as failed."""
    table = request.config.stash.setdefault(_CRITERIA, {})
    made = []

    def make(number: int, name: str) -> Criterion:
        c = Criterion(table, number, name)
        made.append(c)
        return c

    yield make
    for c in made:
        if not c.done:
            c.table[c.number] = (c.name, False, "did not complete")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    table = config.stash.get(_CRITERIA, None)
    if not table:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(table):
        name, ok, detail = table[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:2d} {name}: {detail}")
