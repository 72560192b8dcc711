"""Layered run configuration: built-in defaults, then a flat key=value config
file, then command-line overrides. Every key's provenance is tracked and
unknown keys are rejected so manifests describe runs completely."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path as FsPath

from .expert import ExpertParams
from .perception import PerceptionParams
from .training import TrainConfig


def _bounded(kind, low=None):
    def parse(text: str):
        value = kind(text)
        if low is not None and value <= low:
            raise ValueError(f"must be > {low}")
        return value
    return parse


def _choice(*options):
    def parse(text: str):
        if text not in options:
            raise ValueError(f"must be one of {options}")
        return text
    return parse


# key -> (default, parser, help)
REGISTRY = {
    "scene.distractors": (2, int, "extra boxes per scene"),
    "scene.short_object_half_extent": (0.03, _bounded(float, 0.0), "short-variant object half extent (m)"),
    "scene.long_object_half_extent": (0.05, _bounded(float, 0.0), "long-variant object half extent (m)"),
    "sim.depth_noise_sigma": (0.002, float, "depth noise std (m), 0 disables"),
    "perception.leaf": (0.01, _bounded(float, 0.0), "voxel edge length (m)"),
    "perception.k_neighbors": (8, _bounded(int, 0), "outlier filter neighbor count"),
    "perception.alpha": (1.0, float, "outlier filter stddev multiplier"),
    "perception.color_threshold": (0.25, _bounded(float, 0.0), "RGB segmentation distance"),
    "expert.standoff_m": (0.55, _bounded(float, 0.0), "navigation standoff from the object (m)"),
    "expert.pregrasp_offset_m": (0.10, _bounded(float, 0.0), "pre-grasp height above the object (m)"),
    "expert.lift_height_m": (0.15, _bounded(float, 0.0), "lift height after grasping (m)"),
    "expert.locate_noise_sigma": (0.005, float, "short-variant localization noise std (m)"),
    "expert.yaw_jitter_rad": (0.2, float, "approach bearing jitter amplitude (rad)"),
    "expert.yaw_jitter": ("auto", _choice("auto", "on", "off"), "jitter mode (auto: long only)"),
    "expert.max_ticks": (3000, _bounded(int, 0), "expert tick budget"),
    "learner.epochs": (1000, _bounded(int, 0), "predictor training epochs"),
    "learner.ae_epochs": (120, _bounded(int, 0), "autoencoder training epochs"),
    "learner.batch": (64, _bounded(int, 0), "autoencoder minibatch size"),
    "learner.lr": (1e-3, _bounded(float, 0.0), "Adam learning rate"),
    "learner.grad_clip": (5.0, _bounded(float, 0.0), "gradient L2 clip"),
    "learner.tbptt": (32, _bounded(int, 0), "truncated BPTT window"),
    "learner.downscale": (2, _bounded(int, 0), "image downscale factor at the learner"),
    "learner.latent": (32, _bounded(int, 0), "autoencoder latent size"),
    "learner.hidden": (64, _bounded(int, 0), "recurrent hidden size"),
    "learner.frame_stride": (1, _bounded(int, 0), "autoencoder frame subsampling stride"),
    "eval.max_steps": (300, _bounded(int, 0), "rollout step budget"),
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    values: dict
    provenance: dict

    def __getitem__(self, key: str):
        return self.values[key]

    def describe(self) -> dict:
        return {k: {"value": self.values[k], "source": self.provenance[k]}
                for k in sorted(self.values)}

    def perception_params(self) -> PerceptionParams:
        p = PerceptionParams(
            leaf=self["perception.leaf"],
            k_neighbors=self["perception.k_neighbors"],
            alpha=self["perception.alpha"],
            color_threshold=self["perception.color_threshold"],
        )
        p.validate()
        return p

    def expert_params(self) -> ExpertParams:
        return ExpertParams(
            standoff_m=self["expert.standoff_m"],
            pregrasp_offset_m=self["expert.pregrasp_offset_m"],
            lift_height_m=self["expert.lift_height_m"],
            locate_noise_sigma=self["expert.locate_noise_sigma"],
            yaw_jitter_rad=self["expert.yaw_jitter_rad"],
            yaw_jitter=self["expert.yaw_jitter"],
            max_ticks=self["expert.max_ticks"],
            perception=self.perception_params(),
        )

    def train_config(self, seed: int = 0) -> TrainConfig:
        cfg = TrainConfig(
            epochs=self["learner.epochs"],
            ae_epochs=self["learner.ae_epochs"],
            batch=self["learner.batch"],
            lr=self["learner.lr"],
            grad_clip=self["learner.grad_clip"],
            tbptt=self["learner.tbptt"],
            seed=seed,
            downscale=self["learner.downscale"],
            latent=self["learner.latent"],
            hidden=self["learner.hidden"],
            frame_stride=self["learner.frame_stride"],
        )
        cfg.validate()
        return cfg

    def scene_kwargs(self, variant: str) -> dict:
        half = (self["scene.short_object_half_extent"] if variant == "short"
                else self["scene.long_object_half_extent"])
        return {
            "distractors": self["scene.distractors"],
            "object_half_extent": half,
            "depth_noise_sigma": self["sim.depth_noise_sigma"],
        }


def _parse_assignment(line: str, where: str):
    if "=" not in line:
        raise ConfigError(f"{where}: expected 'key = value', got {line!r}")
    key, text = (part.strip() for part in line.split("=", 1))
    if key not in REGISTRY:
        raise ConfigError(f"{where}: unknown config key {key!r}")
    _, parser, _ = REGISTRY[key]
    try:
        return key, parser(text)
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {key}: {exc}") from exc


def load_run_config(config_file=None, overrides=()) -> RunConfig:
    """Resolve defaults < file < flag overrides; rejects unknown keys."""
    values = {k: default for k, (default, _, _) in REGISTRY.items()}
    provenance = {k: "default" for k in REGISTRY}
    if config_file is not None:
        path = FsPath(config_file)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        for lineno, raw in enumerate(path.read_text().splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, value = _parse_assignment(line, f"{path}:{lineno}")
            values[key] = value
            provenance[key] = "file"
    for item in overrides:
        key, value = _parse_assignment(item, f"--set {item!r}")
        values[key] = value
        provenance[key] = "flag"
    return RunConfig(values, provenance)
