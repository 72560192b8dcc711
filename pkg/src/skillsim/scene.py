"""Scene construction and persistence.

Two seeded scene families mirror the two collection settings: "short"
scenes start the robot within arm's reach facing the target; "long" scenes
start it a few meters out with an obstacle between, so it has to navigate.
Scene files are flat `key = value` text mirroring WorldConfig.
"""

from __future__ import annotations

from pathlib import Path as FsPath

import numpy as np

from .sim import Box, CameraIntrinsics, ObjectSpec, WorldConfig

# object palette; pairwise RGB distances all exceed the 0.3 separation floor
PALETTE = {
    "red": (0.85, 0.10, 0.10),
    "green": (0.10, 0.75, 0.15),
    "blue": (0.15, 0.20, 0.85),
    "yellow": (0.85, 0.80, 0.10),
    "magenta": (0.80, 0.10, 0.80),
}

TABLE_CENTER = (1.2, 0.0, 0.2)
TABLE_SIZE = (0.6, 1.2, 0.4)
TABLE_TOP = TABLE_CENTER[2] + TABLE_SIZE[2] / 2.0


def _place_distractors(rng, target_xy, count, half_extent, start_index=1):
    """Boxes elsewhere on the table, clear of the target and the grasp lane."""
    names = list(PALETTE)[1:]
    objects = []
    for i in range(count):
        side = 1.0 if rng.uniform() < 0.5 else -1.0
        dy = side * rng.uniform(0.20, 0.34)
        y = float(np.clip(target_xy[1] + dy, -0.48, 0.48))
        x = float(rng.uniform(1.15, 1.38))
        color = PALETTE[names[(start_index - 1 + i) % len(names)]]
        objects.append(ObjectSpec(
            id=f"box{start_index + i}",
            center=np.array([x, y, TABLE_TOP + half_extent]),
            half_extents=np.full(3, half_extent),
            color=np.array(color),
        ))
    return objects


def make_short_scene(
    seed: int,
    distractors: int = 2,
    object_half_extent: float = 0.03,
    depth_noise_sigma: float = 0.002,
    camera: CameraIntrinsics | None = None,
) -> WorldConfig:
    """Grasp-only scene: the base starts 0.54-0.62 m out, heading at the target."""
    rng = np.random.default_rng([seed, 101])
    target_xy = np.array([rng.uniform(0.95, 1.03), rng.uniform(-0.30, 0.30)])
    bearing = rng.uniform(-0.25, 0.25)
    dist = rng.uniform(0.54, 0.62)
    start_xy = target_xy - dist * np.array([np.cos(bearing), np.sin(bearing)])
    target = ObjectSpec(
        id="box0",
        center=np.array([target_xy[0], target_xy[1], TABLE_TOP + object_half_extent]),
        half_extents=np.full(3, object_half_extent),
        color=np.array(PALETTE["red"]),
    )
    objects = [target] + _place_distractors(rng, target_xy, distractors, object_half_extent)
    return WorldConfig(
        table_center=np.array(TABLE_CENTER),
        table_size=np.array(TABLE_SIZE),
        objects=objects,
        obstacle_boxes=[],
        camera=camera or CameraIntrinsics(),
        rng_seed=seed,
        depth_noise_sigma=depth_noise_sigma,
        robot_start=np.array([start_xy[0], start_xy[1], bearing]),
        target_id="box0",
    )


def make_long_scene(
    seed: int,
    distractors: int = 1,
    object_half_extent: float = 0.05,
    depth_noise_sigma: float = 0.002,
    start_distance: tuple = (2.7, 3.3),
    camera: CameraIntrinsics | None = None,
) -> WorldConfig:
    """Navigate-then-grasp scene with staggered obstacle boxes on the route.

    Two boxes, one near each end and on opposite sides of the line, force an
    S-shaped detour so navigation trajectories differ meaningfully between
    seeds. The boxes are short enough that the camera still sees the table
    over them from the start pose.
    """
    rng = np.random.default_rng([seed, 202])
    target_xy = np.array([rng.uniform(0.95, 1.05), rng.uniform(-0.25, 0.25)])
    bearing = rng.uniform(-0.4, 0.4)
    dist = rng.uniform(*start_distance)
    start_xy = target_xy - dist * np.array([np.cos(bearing), np.sin(bearing)])
    start_yaw = bearing + rng.uniform(-0.2, 0.2)

    target = ObjectSpec(
        id="box0",
        center=np.array([target_xy[0], target_xy[1], TABLE_TOP + object_half_extent]),
        half_extents=np.full(3, object_half_extent),
        color=np.array(PALETTE["red"]),
    )
    objects = [target] + _place_distractors(rng, target_xy, distractors, object_half_extent)

    u = (target_xy - start_xy) / dist
    perp = np.array([-u[1], u[0]])
    side = 1.0 if rng.uniform() < 0.5 else -1.0
    obstacles = []
    for d_from_start, s in ((rng.uniform(0.9, 1.3), side),
                            (dist - rng.uniform(1.4, 1.8), -side)):
        lateral = s * rng.uniform(0.0, 0.15)
        c = start_xy + d_from_start * u + lateral * perp
        obstacles.append(Box(
            center=np.array([c[0], c[1], 0.25]),
            half_extents=np.array([0.18, 0.18, 0.25]),
        ))

    return WorldConfig(
        table_center=np.array(TABLE_CENTER),
        table_size=np.array(TABLE_SIZE),
        objects=objects,
        obstacle_boxes=obstacles,
        camera=camera or CameraIntrinsics(),
        rng_seed=seed,
        depth_noise_sigma=depth_noise_sigma,
        robot_start=np.array([start_xy[0], start_xy[1], start_yaw]),
        target_id="box0",
    )


def make_scene(seed: int, variant: str, **kwargs) -> WorldConfig:
    if variant == "short":
        return make_short_scene(seed, **kwargs)
    if variant == "long":
        return make_long_scene(seed, **kwargs)
    raise ValueError(f"unknown variant {variant!r}")


# ----------------------------------------------------------------------
# dict and text serialization


def config_to_dict(config: WorldConfig) -> dict:
    return {
        "dt": config.dt,
        "rng_seed": int(config.rng_seed),
        "depth_noise_sigma": config.depth_noise_sigma,
        "table_center": config.table_center.tolist(),
        "table_size": config.table_size.tolist(),
        "camera": {
            "width": config.camera.width,
            "height": config.camera.height,
            "focal_px": config.camera.focal_px,
            "baseline_m": config.camera.baseline_m,
            "height_m": config.camera.height_m,
            "pitch_rad": config.camera.pitch_rad,
        },
        "robot_start": config.robot_start.tolist(),
        "robot_joints": config.robot_joints.tolist(),
        "target_id": config.target_id,
        "objects": [
            {"id": o.id, "center": o.center.tolist(),
             "half_extents": o.half_extents.tolist(), "color": o.color.tolist()}
            for o in config.objects
        ],
        "obstacle_boxes": [
            {"center": b.center.tolist(), "half_extents": b.half_extents.tolist()}
            for b in config.obstacle_boxes
        ],
    }


def config_from_dict(d: dict) -> WorldConfig:
    cam = d["camera"]
    return WorldConfig(
        table_center=np.array(d["table_center"]),
        table_size=np.array(d["table_size"]),
        objects=[
            ObjectSpec(o["id"], np.array(o["center"]), np.array(o["half_extents"]),
                       np.array(o["color"]))
            for o in d["objects"]
        ],
        obstacle_boxes=[
            Box(np.array(b["center"]), np.array(b["half_extents"]))
            for b in d["obstacle_boxes"]
        ],
        camera=CameraIntrinsics(
            width=int(cam["width"]), height=int(cam["height"]),
            focal_px=float(cam["focal_px"]), baseline_m=float(cam["baseline_m"]),
            height_m=float(cam["height_m"]), pitch_rad=float(cam["pitch_rad"]),
        ),
        rng_seed=int(d["rng_seed"]),
        dt=float(d["dt"]),
        depth_noise_sigma=float(d["depth_noise_sigma"]),
        robot_start=np.array(d["robot_start"]),
        robot_joints=np.array(d["robot_joints"]),
        target_id=d["target_id"],
    )


def _fmt(value) -> str:
    if isinstance(value, (list, tuple, np.ndarray)):
        return " ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_to_text(config: WorldConfig) -> str:
    lines = ["# skillsim scene"]
    lines.append(f"dt = {_fmt(config.dt)}")
    lines.append(f"rng_seed = {int(config.rng_seed)}")
    lines.append(f"depth_noise_sigma = {_fmt(config.depth_noise_sigma)}")
    lines.append(f"table.center = {_fmt(config.table_center)}")
    lines.append(f"table.size = {_fmt(config.table_size)}")
    cam = config.camera
    lines.append(f"camera.width = {cam.width}")
    lines.append(f"camera.height = {cam.height}")
    lines.append(f"camera.focal_px = {_fmt(cam.focal_px)}")
    lines.append(f"camera.baseline_m = {_fmt(cam.baseline_m)}")
    lines.append(f"camera.height_m = {_fmt(cam.height_m)}")
    lines.append(f"camera.pitch_rad = {_fmt(cam.pitch_rad)}")
    lines.append(f"robot.start = {_fmt(config.robot_start)}")
    lines.append(f"robot.joints = {_fmt(config.robot_joints)}")
    if config.target_id is not None:
        lines.append(f"target = {config.target_id}")
    for o in config.objects:
        lines.append(f"object.{o.id}.center = {_fmt(o.center)}")
        lines.append(f"object.{o.id}.half_extents = {_fmt(o.half_extents)}")
        lines.append(f"object.{o.id}.color = {_fmt(o.color)}")
    for i, b in enumerate(config.obstacle_boxes):
        lines.append(f"obstacle.{i}.center = {_fmt(b.center)}")
        lines.append(f"obstacle.{i}.half_extents = {_fmt(b.half_extents)}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> WorldConfig:
    scalars: dict[str, str] = {}
    objects: dict[str, dict] = {}
    obstacles: dict[int, dict] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"scene line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key.startswith("object."):
            _, obj_id, attr = key.split(".", 2)
            objects.setdefault(obj_id, {})[attr] = value
        elif key.startswith("obstacle."):
            _, idx, attr = key.split(".", 2)
            obstacles.setdefault(int(idx), {})[attr] = value
        else:
            scalars[key] = value

    def vec(s: str) -> np.ndarray:
        return np.array([float(v) for v in s.split()])

    known = {
        "dt", "rng_seed", "depth_noise_sigma", "table.center", "table.size",
        "camera.width", "camera.height", "camera.focal_px", "camera.baseline_m",
        "camera.height_m", "camera.pitch_rad", "robot.start", "robot.joints", "target",
    }
    unknown = set(scalars) - known
    if unknown:
        raise ValueError(f"scene: unknown keys {sorted(unknown)}")

    obj_specs = []
    for obj_id, attrs in objects.items():
        missing = {"center", "half_extents", "color"} - set(attrs)
        if missing:
            raise ValueError(f"scene object {obj_id!r}: missing {sorted(missing)}")
        obj_specs.append(ObjectSpec(obj_id, vec(attrs["center"]),
                                    vec(attrs["half_extents"]), vec(attrs["color"])))
    boxes = [Box(vec(obstacles[i]["center"]), vec(obstacles[i]["half_extents"]))
             for i in sorted(obstacles)]

    return WorldConfig(
        table_center=vec(scalars["table.center"]),
        table_size=vec(scalars["table.size"]),
        objects=obj_specs,
        obstacle_boxes=boxes,
        camera=CameraIntrinsics(
            width=int(scalars["camera.width"]),
            height=int(scalars["camera.height"]),
            focal_px=float(scalars["camera.focal_px"]),
            baseline_m=float(scalars["camera.baseline_m"]),
            height_m=float(scalars["camera.height_m"]),
            pitch_rad=float(scalars["camera.pitch_rad"]),
        ),
        rng_seed=int(scalars["rng_seed"]),
        dt=float(scalars["dt"]),
        depth_noise_sigma=float(scalars["depth_noise_sigma"]),
        robot_start=vec(scalars["robot.start"]),
        robot_joints=vec(scalars["robot.joints"]),
        target_id=scalars.get("target"),
    )


def save_scene(path, config: WorldConfig) -> None:
    FsPath(path).write_text(config_to_text(config))


def load_scene(path) -> WorldConfig:
    config = config_from_text(FsPath(path).read_text())
    config.validate()
    return config
