"""Config parsing, emission round-trips, physical-scene conversions."""

import math

import pytest

from specklescope import (
    Config,
    ConfigError,
    PhysicalScene,
    RunManifest,
    emit_config,
    magic_positions,
    parse_config,
)


def test_empty_text_gives_defaults():
    cfg = parse_config("")
    assert cfg == Config()
    assert cfg.geometry.x == (3, 1, 4)
    assert cfg.simulate.frames == 1000
    assert cfg.gate.k_a == 2.5
    assert cfg.reconstruct.max_span == 20


def test_defaults_round_trip():
    cfg = Config()
    assert parse_config(emit_config(cfg)) == cfg


def test_custom_config_round_trips():
    text = """
[geometry]
x = [1, 3, 2]
d_microns = 480.0

[simulate]
frames = 250
seed = 42
pixels = 240
orders = [3, 4]
bits = 12
weights = [1.0, 2.0, 1.0, 0.5]
save_frames = False

[gate]
k_A = 3.0

[reconstruct]
max_span = 12
"""
    cfg = parse_config(text)
    assert cfg.geometry.x == (1, 3, 2)
    assert cfg.simulate.bits == 12
    assert cfg.simulate.weights == (1.0, 2.0, 1.0, 0.5)
    assert cfg.simulate.save_frames is False
    assert cfg.gate.k_a == 3.0
    assert cfg.reconstruct.max_span == 12
    assert parse_config(emit_config(cfg)) == cfg


def test_optional_keys_accept_none():
    cfg = parse_config("[simulate]\nbits = None\nweights = None\n")
    assert cfg.simulate.bits is None
    assert cfg.simulate.weights is None


@pytest.mark.parametrize(
    "text",
    [
        "[telescope]\nfocal = 2\n",  # unknown section
        "[simulate]\nframe_count = 10\n",  # unknown key
        "[simulate]\nframes = 10.5\n",  # float for int
        "[simulate]\nframes = True\n",  # bool for int
        "[simulate]\nframes = ten\n",  # not a literal
        "[simulate]\nframes = None\n",  # None where required
        "[geometry]\nx = [0, 2]\n",  # zero gap
        "[geometry]\nx = [1.5]\n",  # non-integer gap
        "[gate]\nk_A = None\n",
        "[gate]\nk_A = -1.0\n",  # GatePolicy rejects it
        "[simulate]\nsave_frames = 1\n",  # int for bool
        "[geometry]\nx = 3\n",  # scalar for tuple
    ],
)
def test_bad_configs_are_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_error_message_lists_every_problem():
    with pytest.raises(ConfigError) as err:
        parse_config("[simulate]\nframes = ten\npixel = 3\n")
    message = str(err.value)
    assert "frames" in message
    assert "pixel" in message


# ---------------------------------------------------------------------------
# physical scene
# ---------------------------------------------------------------------------


def test_scene_angle_conversions_invert():
    scene = PhysicalScene(wavelength=632.8e-9, z=0.4, d=570e-6)
    for delta in (0.1, math.pi, 5.0):
        assert scene.delta(scene.sin_theta(delta)) == pytest.approx(delta, rel=1e-12)
    sines = scene.magic_sin_thetas(5)
    assert len(sines) == 4
    for sine, pos in zip(sines, magic_positions(5)):
        assert scene.delta(sine) == pytest.approx(pos, rel=1e-12)


def test_scene_abbe_limit():
    scene = PhysicalScene(wavelength=600e-9, z=0.4, d=570e-6)
    assert scene.abbe_min_separation(0.5) == pytest.approx(600e-9)
    with pytest.raises(ValueError):
        scene.abbe_min_separation(0.0)
    with pytest.raises(ValueError):
        scene.abbe_min_separation(1.5)
    with pytest.raises(ValueError):
        PhysicalScene(wavelength=-1.0, z=0.4, d=570e-6)


def test_config_builds_scene_and_geometry():
    cfg = parse_config("[geometry]\nx = [2, 2]\nd_microns = 500.0\n")
    geometry = cfg.source_geometry()
    assert geometry.x == (2, 2)
    assert geometry.d == pytest.approx(500e-6)
    scene = cfg.physical_scene()
    assert scene.d == pytest.approx(500e-6)
    assert scene.wavelength == pytest.approx(632.8e-9)


# ---------------------------------------------------------------------------
# run manifest
# ---------------------------------------------------------------------------


def test_manifest_round_trip():
    manifest = RunManifest.create(
        Config(),
        seed=17,
        outputs={"curves": "curves_m3.csv", "frames": "frames.sstk"},
        notes=("clipping above half",),
    )
    data = manifest.to_dict()
    assert data["tool"] == "specklescope"
    assert data["seed"] == 17
    assert data["created_utc"]  # stamped
    back = RunManifest.from_dict(data)
    assert back == manifest
    assert parse_config(back.config_text) == Config()
