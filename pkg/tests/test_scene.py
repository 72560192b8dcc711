"""Scene families and the text scene-file format."""

import numpy as np
import pytest

from skillsim.scene import (
    PALETTE,
    config_from_text,
    config_to_text,
    load_scene,
    make_long_scene,
    make_scene,
    make_short_scene,
    save_scene,
)


def test_palette_pairwise_separation():
    colors = [np.array(c) for c in PALETTE.values()]
    for i, a in enumerate(colors):
        for b in colors[i + 1:]:
            assert np.linalg.norm(a - b) >= 0.3


def test_short_scene_valid_and_deterministic():
    a = make_short_scene(11)
    b = make_short_scene(11)
    a.validate()
    assert np.array_equal(a.robot_start, b.robot_start)
    assert np.array_equal(a.objects[0].center, b.objects[0].center)
    c = make_short_scene(12)
    assert not np.array_equal(a.robot_start, c.robot_start)


def test_short_scene_geometry():
    for seed in range(20):
        cfg = make_short_scene(seed)
        cfg.validate()
        obj = cfg.object("box0").center
        start = cfg.robot_start
        dist = np.linalg.norm(obj[:2] - start[:2])
        assert 0.5 < dist < 0.65
        # heading points exactly at the target
        bearing = np.arctan2(obj[1] - start[1], obj[0] - start[0])
        assert abs(bearing - start[2]) < 1e-9
        # objects rest on the tabletop
        for o in cfg.objects:
            assert o.center[2] == pytest.approx(0.4 + o.half_extents[2])


def test_long_scene_geometry():
    for seed in range(20):
        cfg = make_long_scene(seed)
        cfg.validate()
        obj = cfg.object("box0").center
        dist = np.linalg.norm(obj[:2] - cfg.robot_start[:2])
        assert 2.6 < dist < 3.5
        assert len(cfg.obstacle_boxes) == 2


def test_make_scene_dispatch():
    assert make_scene(0, "short").target_id == "box0"
    assert len(make_scene(0, "long").obstacle_boxes) > 0
    with pytest.raises(ValueError):
        make_scene(0, "medium")


def test_scene_text_round_trip(tmp_path):
    cfg = make_long_scene(5)
    path = tmp_path / "scene.txt"
    save_scene(path, cfg)
    back = load_scene(path)
    assert np.array_equal(back.robot_start, cfg.robot_start)
    assert np.array_equal(back.table_center, cfg.table_center)
    assert back.rng_seed == cfg.rng_seed
    assert back.dt == cfg.dt
    assert back.target_id == cfg.target_id
    assert len(back.objects) == len(cfg.objects)
    for a, b in zip(cfg.objects, back.objects):
        assert a.id == b.id
        assert np.array_equal(a.center, b.center)
        assert np.array_equal(a.color, b.color)
    assert len(back.obstacle_boxes) == len(cfg.obstacle_boxes)
    # serialization is exact: a second dump is byte-identical
    assert config_to_text(back) == config_to_text(cfg)


def test_scene_text_unknown_key_rejected():
    text = config_to_text(make_short_scene(0)) + "bogus.key = 1\n"
    with pytest.raises(ValueError, match="unknown keys"):
        config_from_text(text)


def test_scene_text_missing_object_field():
    cfg = make_short_scene(0)
    lines = [l for l in config_to_text(cfg).splitlines()
             if not l.startswith("object.box0.color")]
    with pytest.raises(ValueError, match="missing"):
        config_from_text("\n".join(lines))


def test_scene_text_bad_line():
    with pytest.raises(ValueError, match="expected 'key = value'"):
        config_from_text("dt 0.1\n")
