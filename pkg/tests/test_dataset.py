"""Episode recording, bit-exact persistence, and normalization statistics."""

import json

import numpy as np
import pytest

from skillsim import World, run_expert
from skillsim.dataset import (
    DatasetError,
    Episode,
    NormStats,
    Step,
    compute_norm_stats,
    denormalize_state,
    load_dataset,
    load_episode,
    normalize_state,
    record,
    save_episode,
)
from skillsim.scene import make_long_scene, make_short_scene


def episodes_equal(a, b):
    if (a.variant, a.outcome, a.seed, len(a)) != (b.variant, b.outcome, b.seed, len(b)):
        return False
    for sa, sb in zip(a.steps, b.steps):
        if sa.t != sb.t or not np.array_equal(sa.state, sb.state):
            return False
        if (sa.base_cmd is None) != (sb.base_cmd is None):
            return False
        if sa.base_cmd is not None and not np.array_equal(sa.base_cmd, sb.base_cmd):
            return False
        if not np.array_equal(sa.rgb, sb.rgb) or not np.array_equal(sa.disparity, sb.disparity):
            return False
    return True


def synthetic_episode(rng, steps=12, variant="short", h=8, w=8, outcome="DONE", seed=0):
    scene = make_short_scene(seed)
    out = []
    for t in range(steps):
        out.append(Step(
            t=t,
            state=rng.uniform(0, 1, 5).astype(np.float32),
            base_cmd=(rng.uniform(-1, 1, 2).astype(np.float32)
                      if variant == "long" else None),
            rgb=rng.integers(0, 256, (h, w, 3), dtype=np.uint8),
            disparity=(rng.uniform(0, 8, (h, w)) * (rng.uniform(size=(h, w)) > 0.1)
                       ).astype(np.float32),
        ))
    return Episode(steps=out, variant=variant, scene=scene, outcome=outcome, seed=seed)


@pytest.fixture(scope="module")
def short_episode():
    cfg = make_short_scene(0)
    transcript = run_expert(World(cfg), cfg.target_id, "short")
    return record(transcript)


def test_record_short_episode(short_episode):
    ep = short_episode
    assert ep.outcome == "DONE"
    assert ep.variant == "short"
    assert [s.t for s in ep.steps] == list(range(len(ep)))
    assert all(s.base_cmd is None for s in ep.steps)
    assert ep.steps[0].rgb.shape == (64, 64, 3)
    assert ep.steps[0].state.dtype == np.float32


def test_record_long_episode_carries_commands():
    cfg = make_long_scene(0)
    transcript = run_expert(World(cfg), cfg.target_id, "long")
    ep = record(transcript)
    assert ep.variant == "long"
    assert all(s.base_cmd is not None and s.base_cmd.shape == (2,) for s in ep.steps)
    assert any(np.any(s.base_cmd != 0) for s in ep.steps)


def test_record_failed_run_kept():
    rng = np.random.default_rng(1)
    ep = synthetic_episode(rng, outcome="FAILED")
    assert ep.outcome == "FAILED"


def test_record_replay_deterministic(short_episode):
    cfg = make_short_scene(0)
    transcript = run_expert(World(cfg), cfg.target_id, "short")
    again = record(transcript)
    assert episodes_equal(short_episode, again)


# ----------------------------------------------------------------------
# persistence


def test_save_load_round_trip_bit_exact(tmp_path, short_episode):
    save_episode(short_episode, tmp_path / "ep")
    back = load_episode(tmp_path / "ep")
    assert episodes_equal(short_episode, back)
    # saving the loaded episode reproduces identical bytes
    save_episode(back, tmp_path / "ep2")
    assert (tmp_path / "ep" / "steps.bin").read_bytes() == \
        (tmp_path / "ep2" / "steps.bin").read_bytes()
    assert (tmp_path / "ep" / "manifest.json").read_text() == \
        (tmp_path / "ep2" / "manifest.json").read_text()


def test_save_load_long_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    ep = synthetic_episode(rng, variant="long")
    save_episode(ep, tmp_path / "ep")
    assert episodes_equal(ep, load_episode(tmp_path / "ep"))


def test_truncated_steps_file_reports_counts(tmp_path):
    rng = np.random.default_rng(3)
    save_episode(synthetic_episode(rng), tmp_path / "ep")
    path = tmp_path / "ep" / "steps.bin"
    blob = path.read_bytes()
    path.write_bytes(blob[:-100])
    with pytest.raises(DatasetError, match=rf"expected {len(blob)} bytes, got {len(blob) - 100}"):
        load_episode(tmp_path / "ep")


def test_version_mismatch_rejected(tmp_path):
    rng = np.random.default_rng(4)
    save_episode(synthetic_episode(rng), tmp_path / "ep")
    mpath = tmp_path / "ep" / "manifest.json"
    manifest = json.loads(mpath.read_text())
    manifest["schema_version"] = 99
    mpath.write_text(json.dumps(manifest))
    with pytest.raises(DatasetError, match="unsupported dataset version"):
        load_episode(tmp_path / "ep")


def test_bad_magic_rejected(tmp_path):
    rng = np.random.default_rng(5)
    save_episode(synthetic_episode(rng), tmp_path / "ep")
    path = tmp_path / "ep" / "steps.bin"
    blob = bytearray(path.read_bytes())
    blob[:8] = b"XXXXXXXX"
    path.write_bytes(bytes(blob))
    with pytest.raises(DatasetError, match="bad magic"):
        load_episode(tmp_path / "ep")


def test_load_dataset_filters_failed(tmp_path):
    rng = np.random.default_rng(6)
    save_episode(synthetic_episode(rng, outcome="DONE", seed=0), tmp_path / "ep0")
    save_episode(synthetic_episode(rng, outcome="FAILED", seed=1), tmp_path / "ep1")
    assert len(load_dataset(tmp_path)) == 1
    assert len(load_dataset(tmp_path, include_failed=True)) == 2


# ----------------------------------------------------------------------
# normalization statistics


def test_stats_single_step_dataset_flags_all_dims():
    rng = np.random.default_rng(7)
    ep = synthetic_episode(rng, steps=1)
    stats = compute_norm_stats([ep])
    assert np.array_equal(stats.state_min, stats.state_max)
    assert np.all(stats.state_flags)
    x = ep.steps[0].state.astype(float)
    assert np.all(normalize_state(x, stats) == 0.5)


def test_stats_two_step_min_max():
    rng = np.random.default_rng(8)
    ep = synthetic_episode(rng, steps=2)
    ep.steps[0].state = np.array([0.0, 0, 0, 0, 0], dtype=np.float32)
    ep.steps[1].state = np.array([1.0, 0, 0, 0, 0], dtype=np.float32)
    stats = compute_norm_stats([ep])
    assert stats.state_min[0] == 0.0
    assert stats.state_max[0] == 1.0
    assert not stats.state_flags[0]
    assert np.all(stats.state_flags[1:])


def naive_stats_oracle(episodes):
    """Full-materialization reference for the streaming statistics."""
    states = np.concatenate([np.stack([s.state for s in e.steps]) for e in episodes])
    rgb = np.concatenate([np.stack([s.rgb for s in e.steps]) for e in episodes])
    disp = np.concatenate([np.stack([s.disparity for s in e.steps]) for e in episodes])
    img = rgb.astype(np.float64) / 255.0
    nz = disp[disp > 0].astype(np.float64)
    return {
        "state_min": states.min(axis=0),
        "state_max": states.max(axis=0),
        "image_mean": img.reshape(-1, 3).mean(axis=0),
        "image_std": img.reshape(-1, 3).std(axis=0),
        "disp_mean": nz.mean(),
        "disp_std": nz.std(),
    }


def test_stats_match_naive_oracle():
    rng = np.random.default_rng(9)
    episodes = [synthetic_episode(rng, steps=int(rng.integers(3, 20)), seed=i)
                for i in range(10)]
    stats = compute_norm_stats(episodes)
    oracle = naive_stats_oracle(episodes)
    assert np.allclose(stats.state_min, oracle["state_min"], atol=1e-6)
    assert np.allclose(stats.state_max, oracle["state_max"], atol=1e-6)
    assert np.allclose(stats.image_mean, oracle["image_mean"], atol=1e-6)
    assert np.allclose(stats.image_std, oracle["image_std"], atol=1e-6)
    assert stats.disp_mean == pytest.approx(oracle["disp_mean"], abs=1e-6)
    assert stats.disp_std == pytest.approx(oracle["disp_std"], abs=1e-6)


def test_stats_require_episodes():
    with pytest.raises(DatasetError):
        compute_norm_stats([])


def test_normalize_endpoints_and_midpoint():
    rng = np.random.default_rng(10)
    episodes = [synthetic_episode(rng, steps=30, seed=i) for i in range(2)]
    stats = compute_norm_stats(episodes)
    assert np.all(normalize_state(stats.state_min, stats) == 0.0)
    mid = (stats.state_min + stats.state_max) / 2.0
    assert normalize_state(mid, stats) == pytest.approx(np.full(5, 0.5))


def test_normalize_round_trip():
    rng = np.random.default_rng(11)
    episodes = [synthetic_episode(rng, steps=30, seed=i) for i in range(2)]
    stats = compute_norm_stats(episodes)
    xs = rng.uniform(-2, 2, size=(1000, 5))
    back = denormalize_state(normalize_state(xs, stats), stats)
    assert np.max(np.abs(back - xs)) < 1e-9


def test_normalized_training_steps_in_unit_interval():
    rng = np.random.default_rng(12)
    episodes = [synthetic_episode(rng, steps=25, seed=i) for i in range(3)]
    stats = compute_norm_stats(episodes)
    for ep in episodes:
        normed = normalize_state(ep.state_matrix.astype(float), stats)
        assert np.all(normed >= 0.0)
        assert np.all(normed <= 1.0)


def test_normalize_long_variant_with_commands():
    rng = np.random.default_rng(13)
    episodes = [synthetic_episode(rng, steps=20, variant="long", seed=i)
                for i in range(2)]
    stats = compute_norm_stats(episodes)
    assert stats.has_cmd
    full = np.concatenate([episodes[0].steps[3].state.astype(float),
                           episodes[0].steps[3].base_cmd.astype(float)])
    normed = normalize_state(full, stats)
    assert normed.shape == (7,)
    back = denormalize_state(normed, stats)
    assert np.max(np.abs(back - full)) < 1e-9


def test_stats_json_round_trip():
    rng = np.random.default_rng(14)
    episodes = [synthetic_episode(rng, steps=10, variant="long", seed=i)
                for i in range(2)]
    stats = compute_norm_stats(episodes)
    back = NormStats.from_dict(json.loads(json.dumps(stats.to_dict())))
    assert np.array_equal(back.state_min, stats.state_min)
    assert np.array_equal(back.state_max, stats.state_max)
    assert np.array_equal(back.cmd_min, stats.cmd_min)
    assert back.disp_mean == stats.disp_mean
    assert back.disp_std == stats.disp_std


def test_dimension_mismatch_rejected():
    rng = np.random.default_rng(15)
    episodes = [synthetic_episode(rng, steps=10, seed=i) for i in range(2)]
    stats = compute_norm_stats(episodes)
    with pytest.raises(DatasetError, match="dimension"):
        normalize_state(np.zeros(6), stats)
