import pytest

from tetvof.scene import SceneError, load_scene, parse_scene, parse_scene_text, serialize_scene

MINIMAL = """
grid:
  dims: [8, 8, 8]
  dx: 0.125
"""


def test_minimal_defaults():
    cfg = parse_scene_text(MINIMAL)
    assert cfg.coupling.beta == 0.0
    assert cfg.spray.jitter_frac == 0.5
    assert cfg.vof.n_samples == 10
    assert cfg.time.dt == pytest.approx(1 / 120)
    assert cfg.time.substeps == 2
    assert cfg.levelset.markers is False


def test_beta_error_names_key_and_line():
    text = MINIMAL + "coupling:\n  beta: 1.5\n"
    with pytest.raises(SceneError) as err:
        parse_scene_text(text, "s.yaml")
    msg = str(err.value)
    assert "coupling.beta" in msg
    assert "line 6" in msg


def test_unknown_key_rejected():
    with pytest.raises(SceneError, match="vof.bogus"):
        parse_scene_text(MINIMAL + "vof:\n  bogus: 3\n")


def test_nonfinite_rejected():
    with pytest.raises(SceneError, match="gravity"):
        parse_scene_text(MINIMAL + "gravity: [0, .nan, 0]\n")


def test_mesh_outside_grid():
    text = MINIMAL + "mesh:\n  lo: [0.5, 0.5, 0.5]\n  hi: [1.5, 0.9, 0.9]\n  dx: 0.1\n"
    with pytest.raises(SceneError, match="inside the grid"):
        parse_scene_text(text)


def test_malformed_yaml():
    with pytest.raises(SceneError, match="malformed"):
        parse_scene_text("grid: [1, 2\n")


def test_missing_file(tmp_path):
    with pytest.raises(SceneError):
        parse_scene(tmp_path / "nope.yaml")


@pytest.mark.parametrize("name", ["ball_stream", "still_pool", "splash_box"])
def test_presets_round_trip(name):
    cfg = load_scene(name)
    again = parse_scene_text(serialize_scene(cfg))
    assert again == cfg
    assert serialize_scene(again) == serialize_scene(cfg)


def test_unknown_preset():
    with pytest.raises(SceneError, match="no built-in"):
        load_scene("does_not_exist")
