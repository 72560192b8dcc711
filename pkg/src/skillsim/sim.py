"""Deterministic kinematic tabletop world.

A differential-drive base carries a lift-plus-three-pitch arm and a gripper.
Colored box objects sit on a table; a down-pitched pinhole camera on the base
renders RGB, depth, disparity and a world-frame point cloud by ray casting
against axis-aligned boxes. Everything is kinematic and seed-deterministic.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import kinematics
from .perception import PointCloud

ROBOT_RADIUS = 0.3
BASE_HEIGHT = 0.3           # z-slab the base occupies for collision purposes
TOUCH_MARGIN = 0.02         # AABB inflation for the touch predicate
GRASP_APERTURE = 0.3        # gripper aperture threshold for attaching
MIN_COLOR_SEPARATION = 0.3

FLOOR_COLOR = (0.45, 0.45, 0.45)
TABLE_COLOR = (0.55, 0.36, 0.20)
OBSTACLE_COLOR = (0.25, 0.25, 0.30)
SKY_COLOR = (0.08, 0.08, 0.10)

HIT_NONE = -1
HIT_FLOOR = 0
HIT_TABLE = 1
HIT_OBJECT_BASE = 10
HIT_OBSTACLE_BASE = 1000

_FLOOR_LO = np.array([-50.0, -50.0, -1.0])
_FLOOR_HI = np.array([50.0, 50.0, 0.0])


@dataclass
class ObjectSpec:
    """A colored axis-aligned box resting in the scene."""

    id: str
    center: np.ndarray
    half_extents: np.ndarray
    color: np.ndarray

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.half_extents = np.asarray(self.half_extents, dtype=float)
        self.color = np.asarray(self.color, dtype=float)


@dataclass
class Box:
    """Plain axis-aligned obstacle box."""

    center: np.ndarray
    half_extents: np.ndarray

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.half_extents = np.asarray(self.half_extents, dtype=float)


@dataclass
class CameraIntrinsics:
    width: int = 64
    height: int = 64
    focal_px: float = 60.0
    baseline_m: float = 0.08
    height_m: float = 1.1    # camera center above the base origin
    pitch_rad: float = 0.6   # downward pitch of the optical axis

    def validate(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("camera resolution must be positive")
        if self.focal_px <= 0 or self.baseline_m <= 0:
            raise ValueError("focal length and stereo baseline must be positive")


@dataclass
class BaseCommand:
    """Differential-drive command; clamped to bounds when applied."""

    v: float = 0.0
    omega: float = 0.0

    V_MAX = 0.5
    OMEGA_MAX = 1.0

    def clamped(self) -> "BaseCommand":
        return BaseCommand(
            float(np.clip(self.v, -self.V_MAX, self.V_MAX)),
            float(np.clip(self.omega, -self.OMEGA_MAX, self.OMEGA_MAX)),
        )


@dataclass
class RobotState:
    base: np.ndarray                   # (x, y, yaw)
    joints: np.ndarray                 # (lift, q1, q2, q3, gripper)
    attached_object: str | None = None

    def copy(self) -> "RobotState":
        return RobotState(self.base.copy(), self.joints.copy(), self.attached_object)


@dataclass
class WorldConfig:
    table_center: np.ndarray = field(default_factory=lambda: np.array([1.2, 0.0, 0.2]))
    table_size: np.ndarray = field(default_factory=lambda: np.array([0.6, 1.2, 0.4]))
    objects: list = field(default_factory=list)
    obstacle_boxes: list = field(default_factory=list)
    camera: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    rng_seed: int = 0
    dt: float = 0.1
    depth_noise_sigma: float = 0.002
    robot_start: np.ndarray = field(default_factory=lambda: np.zeros(3))
    robot_joints: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.9, -1.4, 0.0, 1.0]))
    target_id: str | None = None

    def __post_init__(self):
        self.table_center = np.asarray(self.table_center, dtype=float)
        self.table_size = np.asarray(self.table_size, dtype=float)
        self.robot_start = np.asarray(self.robot_start, dtype=float)
        self.robot_joints = np.asarray(self.robot_joints, dtype=float)

    def validate(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not np.all(self.table_size > 0):
            raise ValueError("table size must be positive")
        if not self.objects:
            raise ValueError("at least one object is required")
        for obj in self.objects:
            if not np.all(obj.half_extents > 0):
                raise ValueError(f"object {obj.id!r} has non-positive extents")
        for box in self.obstacle_boxes:
            if not np.all(box.half_extents > 0):
                raise ValueError("obstacle box has non-positive extents")
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique")
        for i, a in enumerate(self.objects):
            for b in self.objects[i + 1:]:
                if np.linalg.norm(a.color - b.color) < MIN_COLOR_SEPARATION:
                    raise ValueError(
                        f"objects {a.id!r} and {b.id!r} have colors closer than "
                        f"{MIN_COLOR_SEPARATION}"
                    )
        if np.any(self.robot_joints < kinematics.JOINT_LOW) or np.any(
            self.robot_joints > kinematics.JOINT_HIGH
        ):
            raise ValueError("initial joints outside limits")
        if self.target_id is not None and self.target_id not in ids:
            raise ValueError(f"target object {self.target_id!r} not in scene")
        self.camera.validate()

    def object(self, object_id: str) -> ObjectSpec:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise KeyError(object_id)


@dataclass
class SensorFrame:
    """One rendered observation.

    depth is the hit distance along the optical axis in meters with 0
    encoding "no hit"; disparity = focal_px * baseline_m / depth on the
    same pixels (0 elsewhere); cloud holds one world-frame point per
    finite-depth pixel. hit_ids labels each pixel with the id of the
    surface it hit (see HIT_* constants), -1 for no hit.
    """

    rgb: np.ndarray          # (H, W, 3) uint8
    depth: np.ndarray        # (H, W) float32, 0 = no hit
    disparity: np.ndarray    # (H, W) float32
    cloud: PointCloud
    hit_ids: np.ndarray      # (H, W) int32


def wrap_angle(a: float) -> float:
    """Wrap into (-pi, pi]; values already in range pass through unchanged."""
    if a > np.pi:
        a -= 2.0 * np.pi
    elif a <= -np.pi:
        a += 2.0 * np.pi
    return a


def _ray_aabb(origin: np.ndarray, dirs: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Entry distance of each ray into an AABB, +inf where the ray misses.

    Distances are in units of the (unnormalized) direction vectors.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        ta = (lo[None, :] - origin[None, :]) * inv
        tb = (hi[None, :] - origin[None, :]) * inv
    tlo = np.fmin(ta, tb)
    thi = np.fmax(ta, tb)
    tlo = np.nan_to_num(tlo, nan=-np.inf)
    thi = np.nan_to_num(thi, nan=np.inf)
    tmin = tlo.max(axis=1)
    tmax = thi.min(axis=1)
    hit = (tmax >= tmin) & (tmax > 0.0)
    return np.where(hit, np.maximum(tmin, 0.0), np.inf)


class World:
    """Mutable simulation state for one scene; owns its RNG stream."""

    def __init__(self, config: WorldConfig):
        config.validate()
        self.config = config
        self.state = RobotState(
            base=config.robot_start.astype(float).copy(),
            joints=config.robot_joints.astype(float).copy(),
        )
        self.object_centers = {o.id: o.center.copy() for o in config.objects}
        self._attach_offset = None
        self._rng = np.random.default_rng(config.rng_seed)
        self._pixel_dirs = self._make_pixel_dirs(config.camera)

    # ------------------------------------------------------------------
    # kinematics helpers

    def gripper_tip(self) -> np.ndarray:
        return kinematics.fk(self.state.joints, self.state.base)

    def target_object(self) -> ObjectSpec:
        if self.config.target_id is None:
            raise ValueError("no target object designated")
        return self.config.object(self.config.target_id)

    def target_center(self) -> np.ndarray:
        return self.object_centers[self.target_object().id]

    # ------------------------------------------------------------------
    # dynamics

    def step(self, base_cmd: BaseCommand, joint_target: np.ndarray) -> RobotState:
        """Advance one tick of duration config.dt.

        The base integrates a unicycle model unless the motion would put it
        in collision, in which case base motion freezes for the tick. Joints
        move toward joint_target under per-joint rate limits. An attached
        object follows the gripper tip; closing the gripper while touching
        the target attaches it.
        """
        cmd = base_cmd.clamped()
        dt = self.config.dt
        x, y, yaw = self.state.base
        nx = x + cmd.v * np.cos(yaw) * dt
        ny = y + cmd.v * np.sin(yaw) * dt
        nyaw = wrap_angle(yaw + cmd.omega * dt)
        if not self._base_collides(nx, ny):
            self.state.base = np.array([nx, ny, nyaw])

        target = kinematics.clamp_joints(np.asarray(joint_target, dtype=float))
        max_delta = kinematics.JOINT_RATES * dt
        delta = np.clip(target - self.state.joints, -max_delta, max_delta)
        self.state.joints = kinematics.clamp_joints(self.state.joints + delta)

        if self.state.attached_object is not None:
            self.object_centers[self.state.attached_object] = (
                self.gripper_tip() + self._attach_offset
            )
        elif self.config.target_id is not None:
            self.attach_if_grasping()
        return self.state.copy()

    def _base_collides(self, x: float, y: float) -> bool:
        """Disc-vs-box test against the table and obstacle boxes."""
        p = np.array([x, y])
        for lo, hi in self._solid_boxes():
            if hi[2] <= 0.0 or lo[2] >= BASE_HEIGHT:
                continue
            closest = np.clip(p, lo[:2], hi[:2])
            if np.hypot(*(p - closest)) < ROBOT_RADIUS:
                return True
        return False

    def _solid_boxes(self):
        half = self.config.table_size / 2.0
        yield self.config.table_center - half, self.config.table_center + half
        for box in self.config.obstacle_boxes:
            yield box.center - box.half_extents, box.center + box.half_extents

    # ------------------------------------------------------------------
    # predicates

    def touching(self, object_id: str | None = None) -> bool:
        """True iff the gripper tip is inside the object AABB inflated by TOUCH_MARGIN."""
        obj = self.config.object(object_id) if object_id else self.target_object()
        tip = self.gripper_tip()
        center = self.object_centers[obj.id]
        return bool(np.all(np.abs(tip - center) <= obj.half_extents + TOUCH_MARGIN))

    def attach_if_grasping(self) -> bool:
        """Attach the target to the gripper tip if closed enough while touching."""
        if self.state.attached_object is not None:
            return True
        if self.state.joints[4] < GRASP_APERTURE and self.touching():
            obj_id = self.target_object().id
            self.state.attached_object = obj_id
            self._attach_offset = self.object_centers[obj_id] - self.gripper_tip()
            return True
        return False

    # ------------------------------------------------------------------
    # rendering

    @staticmethod
    def _make_pixel_dirs(cam: CameraIntrinsics) -> np.ndarray:
        """Camera-frame ray directions (z normalized to 1), one per pixel."""
        us = (np.arange(cam.width) + 0.5 - cam.width / 2.0) / cam.focal_px
        vs = (np.arange(cam.height) + 0.5 - cam.height / 2.0) / cam.focal_px
        uu, vv = np.meshgrid(us, vs)
        dirs = np.stack([uu, vv, np.ones_like(uu)], axis=-1)
        return dirs.reshape(-1, 3)

    def camera_pose(self):
        """Camera origin and world-from-camera rotation (x right, y down, z forward)."""
        cam = self.config.camera
        x, y, yaw = self.state.base
        origin = np.array([x, y, cam.height_m])
        fwd = np.array([np.cos(yaw), np.sin(yaw), 0.0])
        right = np.array([np.sin(yaw), -np.cos(yaw), 0.0])
        optical = np.cos(cam.pitch_rad) * fwd + np.sin(cam.pitch_rad) * np.array([0.0, 0.0, -1.0])
        down = np.cross(optical, right)
        return origin, np.stack([right, down, optical], axis=1)

    def _render_boxes(self):
        boxes = [(_FLOOR_LO, _FLOOR_HI, np.array(FLOOR_COLOR), HIT_FLOOR)]
        half = self.config.table_size / 2.0
        boxes.append(
            (self.config.table_center - half, self.config.table_center + half,
             np.array(TABLE_COLOR), HIT_TABLE)
        )
        for i, obj in enumerate(self.config.objects):
            c = self.object_centers[obj.id]
            boxes.append((c - obj.half_extents, c + obj.half_extents, obj.color,
                          HIT_OBJECT_BASE + i))
        for i, box in enumerate(self.config.obstacle_boxes):
            boxes.append((box.center - box.half_extents, box.center + box.half_extents,
                          np.array(OBSTACLE_COLOR), HIT_OBSTACLE_BASE + i))
        return boxes

    def hit_id(self, object_id: str) -> int:
        for i, obj in enumerate(self.config.objects):
            if obj.id == object_id:
                return HIT_OBJECT_BASE + i
        raise KeyError(object_id)

    def render(self, depth_noise_sigma: float | None = None) -> SensorFrame:
        """Ray-cast one sensor frame from the current base pose.

        Gaussian depth noise (std depth_noise_sigma, default from config) is
        applied before disparity and cloud derivation so the disparity-depth
        identity holds on the values actually reported.
        """
        cam = self.config.camera
        sigma = self.config.depth_noise_sigma if depth_noise_sigma is None else depth_noise_sigma
        origin, rot = self.camera_pose()
        dirs = self._pixel_dirs @ rot.T

        n = dirs.shape[0]
        t_best = np.full(n, np.inf)
        id_best = np.full(n, HIT_NONE, dtype=np.int32)
        rgb_f = np.tile(np.array(SKY_COLOR), (n, 1))
        for lo, hi, color, hid in self._render_boxes():
            t = _ray_aabb(origin, dirs, lo, hi)
            closer = t < t_best
            t_best = np.where(closer, t, t_best)
            id_best[closer] = hid
            rgb_f[closer] = color

        depth = np.where(np.isfinite(t_best), t_best, 0.0)
        if sigma > 0.0:
            noise = self._rng.normal(0.0, sigma, size=n)
            depth = np.where(depth > 0.0, depth + noise, 0.0)
        depth32 = depth.astype(np.float32)

        fb = np.float32(cam.focal_px * cam.baseline_m)
        with np.errstate(divide="ignore"):
            disparity = np.where(depth32 > 0.0, fb / depth32, np.float32(0.0))

        rgb = np.rint(rgb_f * 255.0).astype(np.uint8)

        mask = depth32 > 0.0
        pts = origin[None, :] + depth32[mask, None].astype(float) * dirs[mask]
        cloud = PointCloud(pts, rgb_f[mask].copy())

        h, w = cam.height, cam.width
        return SensorFrame(
            rgb=rgb.reshape(h, w, 3),
            depth=depth32.reshape(h, w),
            disparity=disparity.astype(np.float32).reshape(h, w),
            cloud=cloud,
            hit_ids=id_best.reshape(h, w),
        )


def config_copy(config: WorldConfig) -> WorldConfig:
    """Deep copy so replays cannot alias mutable arrays."""
    return WorldConfig(
        table_center=config.table_center.copy(),
        table_size=config.table_size.copy(),
        objects=[ObjectSpec(o.id, o.center.copy(), o.half_extents.copy(), o.color.copy())
                 for o in config.objects],
        obstacle_boxes=[Box(b.center.copy(), b.half_extents.copy())
                        for b in config.obstacle_boxes],
        camera=dataclasses.replace(config.camera),
        rng_seed=config.rng_seed,
        dt=config.dt,
        depth_noise_sigma=config.depth_noise_sigma,
        robot_start=config.robot_start.copy(),
        robot_joints=config.robot_joints.copy(),
        target_id=config.target_id,
    )
