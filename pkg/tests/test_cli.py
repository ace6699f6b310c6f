import json
import subprocess
import sys

import pytest

from tetvof.cli import main
from tetvof.sim import CSV_HEADER
from tetvof.surfacing import read_obj


@pytest.fixture(scope="module")
def baked(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["bake", "--scene", "splash_box", "--frames", "0..4", "--out", str(d / "b.bin")]) == 0
    return d


def test_bake_verify(baked, capsys):
    assert main(["bake", "verify", str(baked / "b.bin")]) == 0
    assert "OK" in capsys.readouterr().out


def test_bad_frame_range(capsys):
    with pytest.raises(SystemExit):
        main(["bake", "--scene", "splash_box", "--frames", "5..2", "--out", "x.bin"])


def test_sim_surface_report(baked, capsys):
    run = baked / "run"
    assert main(["sim", "--scene", "splash_box", "--bake", str(baked / "b.bin"), "--steps", "4",
                 "--out", str(run)]) == 0
    summary = json.loads((run / "summary.json").read_text())
    assert summary["steps"] == 4 and summary["mode"] == "coupled"
    assert summary["max_cons_err_rel"] <= 1e-9
    lines = (run / "diagnostics.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER) and len(lines) == 5

    assert main(["surface", "--scene", "splash_box", "--run", str(run), "--bake",
                 str(baked / "b.bin")]) == 0
    objs = sorted((run / "surfaces").glob("surface_*.obj"))
    assert [p.name for p in objs] == ["surface_00000.obj", "surface_00002.obj", "surface_00004.obj"]
    v, f = read_obj(objs[-1])
    assert len(f) > 0

    assert main(["report", str(run / "diagnostics.csv"), "--scene", "splash_box"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and (run / "report.csv").exists()


def test_sim_needs_long_enough_bake(baked, capsys):
    code = main(["sim", "--scene", "splash_box", "--bake", str(baked / "b.bin"), "--steps", "9",
                 "--out", str(baked / "short")])
    assert code == 2
    assert "must cover frames" in capsys.readouterr().err


def test_levelset_only_run(tmp_path):
    assert main(["sim", "--scene", "splash_box", "--steps", "3", "--compare-levelset-only",
                 "--out", str(tmp_path)]) == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["mode"] == "levelset_only"
    assert "grid_volume_loss" in s


def test_report_exit_status(tmp_path, capsys):
    p = tmp_path / "d.csv"
    row = ["1"] + ["0.0"] * (len(CSV_HEADER) - 1)
    row[CSV_HEADER.index("cons_err_rel")] = "0.001"
    p.write_text(",".join(CSV_HEADER) + "\n" + ",".join(row) + "\n")
    assert main(["report", str(p)]) == 1
    assert main(["report", str(p), "--max-error", "0.01"]) == 0
    p.write_text("garbage\n")
    assert main(["report", str(p)]) == 2


def test_surface_without_dumps(tmp_path, capsys):
    assert main(["surface", "--scene", "splash_box", "--run", str(tmp_path)]) == 2
    assert "no frame dumps" in capsys.readouterr().err


def test_bad_scene_reports_key(tmp_path, capsys):
    p = tmp_path / "s.yaml"
    p.write_text("grid:\n  dims: [8, 8, 8]\n  dx: 0.1\ncoupling:\n  beta: 2\n")
    assert main(["sim", "--scene", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "coupling.beta" in capsys.readouterr().err


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "tetvof", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for verb in ("bake", "sim", "surface", "report"):
        assert verb in r.stdout
