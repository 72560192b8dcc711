"""Episode recording, binary persistence, and normalization statistics.

An episode directory holds `manifest.json` (schema version, variant, dims,
seed, outcome, scene snapshot) and `steps.bin`: magic "SKLDSET1", a u32
little-endian step count, then per step the f32 state vector, the f32
(v, omega) command for long-variant episodes, raw RGB bytes, and the f32
disparity image. Round trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path as FsPath

import numpy as np

from .expert import ExpertTranscript
from .scene import config_from_dict, config_to_dict
from .sim import BaseCommand, World

SCHEMA_VERSION = 1
STEPS_MAGIC = b"SKLDSET1"


class DatasetError(ValueError):
    """Unreadable or inconsistent episode data."""


@dataclass
class Step:
    t: int
    state: np.ndarray                 # (5,) float32 joints incl. gripper
    base_cmd: np.ndarray | None       # (2,) float32, long variant only
    rgb: np.ndarray                   # (H, W, 3) uint8
    disparity: np.ndarray             # (H, W) float32


@dataclass
class Episode:
    steps: list
    variant: str
    scene: object                     # WorldConfig snapshot
    outcome: str
    seed: int

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def state_matrix(self) -> np.ndarray:
        return np.stack([s.state for s in self.steps])

    @property
    def cmd_matrix(self) -> np.ndarray | None:
        if self.variant != "long":
            return None
        return np.stack([s.base_cmd for s in self.steps])


def record(transcript: ExpertTranscript) -> Episode:
    """Replay a transcript on a fresh world, rendering a frame every tick.

    Step t carries the state and sensor frame observed before the t-th
    recorded command is applied, so consecutive steps form one-step
    prediction pairs.
    """
    world = World(transcript.config)
    steps = []
    for t, rec in enumerate(transcript.ticks):
        frame = world.render()
        cmd = None
        if transcript.variant == "long":
            cmd = np.array([rec.v, rec.omega], dtype=np.float32)
        steps.append(Step(
            t=t,
            state=world.state.joints.astype(np.float32),
            base_cmd=cmd,
            rgb=frame.rgb,
            disparity=frame.disparity,
        ))
        world.step(BaseCommand(rec.v, rec.omega), rec.joint_target)
    return Episode(
        steps=steps,
        variant=transcript.variant,
        scene=transcript.config,
        outcome=transcript.outcome,
        seed=int(transcript.config.rng_seed),
    )


def save_episode(episode: Episode, dirpath) -> None:
    d = FsPath(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    h, w = episode.steps[0].rgb.shape[:2] if episode.steps else (0, 0)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "variant": episode.variant,
        "steps": len(episode.steps),
        "dims": {"state": 5, "cmd": 2 if episode.variant == "long" else 0,
                 "height": h, "width": w},
        "dt": episode.scene.dt,
        "seed": episode.seed,
        "outcome": episode.outcome,
        "scene": config_to_dict(episode.scene),
    }
    (d / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))
    with open(d / "steps.bin", "wb") as fh:
        fh.write(STEPS_MAGIC)
        fh.write(struct.pack("<I", len(episode.steps)))
        for step in episode.steps:
            fh.write(step.state.astype("<f4").tobytes())
            if episode.variant == "long":
                fh.write(step.base_cmd.astype("<f4").tobytes())
            fh.write(step.rgb.tobytes())
            fh.write(step.disparity.astype("<f4").tobytes())


def load_episode(dirpath) -> Episode:
    d = FsPath(dirpath)
    mpath = d / "manifest.json"
    if not mpath.exists():
        raise DatasetError(f"{mpath}: missing manifest")
    manifest = json.loads(mpath.read_text())
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise DatasetError(f"{mpath}: unsupported dataset version "
                           f"{manifest.get('schema_version')!r}")
    variant = manifest["variant"]
    n = manifest["steps"]
    dims = manifest["dims"]
    h, w = dims["height"], dims["width"]
    has_cmd = dims["cmd"] == 2

    spath = d / "steps.bin"
    blob = spath.read_bytes()
    if blob[:8] != STEPS_MAGIC:
        raise DatasetError(f"{spath}: bad magic at offset 0")
    (count,) = struct.unpack_from("<I", blob, 8)
    if count != n:
        raise DatasetError(f"{spath}: step count {count} does not match manifest {n}")
    step_bytes = 5 * 4 + (8 if has_cmd else 0) + h * w * 3 + h * w * 4
    expected = 12 + n * step_bytes
    if len(blob) != expected:
        raise DatasetError(f"{spath}: expected {expected} bytes, got {len(blob)}")

    steps = []
    off = 12
    for t in range(n):
        state = np.frombuffer(blob, dtype="<f4", count=5, offset=off).copy()
        off += 20
        cmd = None
        if has_cmd:
            cmd = np.frombuffer(blob, dtype="<f4", count=2, offset=off).copy()
            off += 8
        rgb = np.frombuffer(blob, dtype=np.uint8, count=h * w * 3, offset=off)
        rgb = rgb.reshape(h, w, 3).copy()
        off += h * w * 3
        disparity = np.frombuffer(blob, dtype="<f4", count=h * w, offset=off)
        disparity = disparity.reshape(h, w).copy()
        off += h * w * 4
        steps.append(Step(t=t, state=state, base_cmd=cmd, rgb=rgb, disparity=disparity))

    return Episode(
        steps=steps,
        variant=variant,
        scene=config_from_dict(manifest["scene"]),
        outcome=manifest["outcome"],
        seed=int(manifest["seed"]),
    )


def episode_dirs(root) -> list:
    return sorted(p for p in FsPath(root).iterdir()
                  if p.is_dir() and (p / "manifest.json").exists())


def load_dataset(root, include_failed: bool = False) -> list:
    """Load every episode directory under root, skipping FAILED ones by default."""
    episodes = [load_episode(p) for p in episode_dirs(root)]
    if not include_failed:
        episodes = [e for e in episodes if e.outcome == "DONE"]
    return episodes


# ----------------------------------------------------------------------
# normalization statistics


@dataclass
class NormStats:
    state_min: np.ndarray
    state_max: np.ndarray
    state_flags: np.ndarray           # True where the dimension is degenerate
    cmd_min: np.ndarray | None
    cmd_max: np.ndarray | None
    cmd_flags: np.ndarray | None
    image_mean: np.ndarray            # per RGB channel, on [0, 1] values
    image_std: np.ndarray
    disp_mean: float                  # zeros (no-hit pixels) excluded
    disp_std: float

    @property
    def has_cmd(self) -> bool:
        return self.cmd_min is not None

    def bounds(self, include_cmd: bool):
        """(min, max, degenerate flags) for the learner state vector."""
        if not include_cmd:
            return self.state_min, self.state_max, self.state_flags
        if not self.has_cmd:
            raise DatasetError("stats carry no command bounds")
        return (
            np.concatenate([self.state_min, self.cmd_min]),
            np.concatenate([self.state_max, self.cmd_max]),
            np.concatenate([self.state_flags, self.cmd_flags]),
        )

    def to_dict(self) -> dict:
        return {
            "state_min": self.state_min.tolist(),
            "state_max": self.state_max.tolist(),
            "state_flags": self.state_flags.astype(int).tolist(),
            "cmd_min": None if self.cmd_min is None else self.cmd_min.tolist(),
            "cmd_max": None if self.cmd_max is None else self.cmd_max.tolist(),
            "cmd_flags": None if self.cmd_flags is None else self.cmd_flags.astype(int).tolist(),
            "image_mean": self.image_mean.tolist(),
            "image_std": self.image_std.tolist(),
            "disp_mean": self.disp_mean,
            "disp_std": self.disp_std,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        opt = lambda v, dt: None if v is None else np.array(v, dtype=dt)
        return cls(
            state_min=np.array(d["state_min"], dtype=float),
            state_max=np.array(d["state_max"], dtype=float),
            state_flags=np.array(d["state_flags"], dtype=bool),
            cmd_min=opt(d["cmd_min"], float),
            cmd_max=opt(d["cmd_max"], float),
            cmd_flags=opt(d["cmd_flags"], bool),
            image_mean=np.array(d["image_mean"], dtype=float),
            image_std=np.array(d["image_std"], dtype=float),
            disp_mean=float(d["disp_mean"]),
            disp_std=float(d["disp_std"]),
        )


def _min_max(mat: np.ndarray):
    mn = mat.min(axis=0).astype(float)
    mx = mat.max(axis=0).astype(float)
    flags = mx <= mn
    return mn, mx, flags


def compute_norm_stats(episodes) -> NormStats:
    """Single pass over every step of the given episodes.

    State and command bounds are per-dimension min/max; image statistics are
    per-channel mean/std of the RGB values mapped to [0, 1]; disparity
    statistics are scalar with zero (no-hit) pixels excluded. Degenerate
    dimensions are flagged; degenerate stds are forced to 1.
    """
    if not episodes:
        raise DatasetError("no episodes to compute statistics from")
    states = np.concatenate([e.state_matrix for e in episodes], axis=0)
    state_min, state_max, state_flags = _min_max(states)

    cmd_min = cmd_max = cmd_flags = None
    if all(e.variant == "long" for e in episodes):
        cmds = np.concatenate([e.cmd_matrix for e in episodes], axis=0)
        cmd_min, cmd_max, cmd_flags = _min_max(cmds)

    px_sum = np.zeros(3)
    px_sq = np.zeros(3)
    px_n = 0
    d_sum = d_sq = 0.0
    d_n = 0
    for ep in episodes:
        for step in ep.steps:
            img = step.rgb.astype(np.float64) / 255.0
            px_sum += img.sum(axis=(0, 1))
            px_sq += (img * img).sum(axis=(0, 1))
            px_n += img.shape[0] * img.shape[1]
            disp = step.disparity.astype(np.float64)
            nz = disp[disp > 0.0]
            d_sum += nz.sum()
            d_sq += (nz * nz).sum()
            d_n += nz.size

    image_mean = px_sum / px_n
    image_var = np.maximum(px_sq / px_n - image_mean**2, 0.0)
    image_std = np.sqrt(image_var)
    image_std[image_std <= 0.0] = 1.0
    if d_n > 0:
        disp_mean = d_sum / d_n
        disp_var = max(d_sq / d_n - disp_mean**2, 0.0)
        disp_std = float(np.sqrt(disp_var)) or 1.0
    else:
        disp_mean, disp_std = 0.0, 1.0

    return NormStats(
        state_min=state_min, state_max=state_max, state_flags=state_flags,
        cmd_min=cmd_min, cmd_max=cmd_max, cmd_flags=cmd_flags,
        image_mean=image_mean, image_std=image_std,
        disp_mean=float(disp_mean), disp_std=float(disp_std),
    )


def normalize_state(x: np.ndarray, stats: NormStats) -> np.ndarray:
    """Map to [0, 1] per dimension; degenerate dimensions map to 0.5.

    Accepts the 5-dim joint vector or the 7-dim joints + command vector
    (the latter requires command bounds in the stats). Works on a single
    vector or a batch with the dimension last.
    """
    x = np.asarray(x, dtype=float)
    mn, mx, flags = stats.bounds(include_cmd=x.shape[-1] == stats.state_min.size + 2)
    if x.shape[-1] != mn.size:
        raise DatasetError(f"state dimension {x.shape[-1]} does not match stats {mn.size}")
    span = np.where(flags, 1.0, mx - mn)
    out = (x - mn) / span
    return np.where(flags, 0.5, out)


def denormalize_state(y: np.ndarray, stats: NormStats) -> np.ndarray:
    """Inverse of normalize_state; degenerate dimensions return their min."""
    y = np.asarray(y, dtype=float)
    mn, mx, flags = stats.bounds(include_cmd=y.shape[-1] == stats.state_min.size + 2)
    if y.shape[-1] != mn.size:
        raise DatasetError(f"state dimension {y.shape[-1]} does not match stats {mn.size}")
    out = y * (mx - mn) + mn
    return np.where(flags, mn, out)
