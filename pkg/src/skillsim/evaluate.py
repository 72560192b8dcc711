"""Closed-loop policy rollouts in the simulator and aggregate metrics.

Each tick renders a frame, encodes it, runs the recurrent predictor one step,
denormalizes the predicted next state, and applies it as the joint position
target (plus the base command for the long variant). Reports per scenario:
whether the target was touched/grasped, ticks to first touch, final distance
from the gripper tip to the object, and the steps executed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import DatasetError, denormalize_state
from .models import PolicyBundle, predict_next, normalized_state_input
from .sim import BaseCommand, World

WORKSPACE_XY = 6.0
WORKSPACE_Z = (-0.5, 3.0)

CSV_HEADER = "scenario,seed,touched,grasped,ticks_to_touch,final_tip_distance_m,steps"


@dataclass
class Scenario:
    label: str
    config: object            # WorldConfig
    variant: str

    @property
    def seed(self) -> int:
        return int(self.config.rng_seed)


@dataclass
class RolloutReport:
    scenario: str
    seed: int
    touched: bool
    grasped: bool
    ticks_to_touch: int | None
    final_tip_distance: float
    steps_executed: int

    def csv_row(self) -> str:
        ticks = "" if self.ticks_to_touch is None else str(self.ticks_to_touch)
        return (f"{self.scenario},{self.seed},{str(self.touched).lower()},"
                f"{str(self.grasped).lower()},{ticks},"
                f"{self.final_tip_distance:.6f},{self.steps_executed}")


def rollout(bundle: PolicyBundle, scenario: Scenario, max_steps: int = 300,
            frame_sink=None) -> RolloutReport:
    """Run the policy closed loop on one scenario until grasp, divergence, or max_steps.

    frame_sink, when given, receives (tick, SensorFrame) for every rendered
    frame; useful for dumping rollouts to disk.
    """
    if scenario.variant != bundle.variant:
        raise DatasetError(
            f"state dimension mismatch: model is {bundle.variant}-variant "
            f"(d={bundle.d_state}), scenario is {scenario.variant}-variant")
    world = World(scenario.config)
    hidden = bundle.predictor.zero_state(1)
    cmd = np.zeros(2) if scenario.variant == "long" else None

    touched_tick = None
    grasped = False
    steps = 0
    for t in range(max_steps):
        frame = world.render()
        if frame_sink is not None:
            frame_sink(t, frame)
        state_norm = normalized_state_input(world.state.joints, cmd, bundle.stats)
        pred_norm, hidden = predict_next(bundle, frame, state_norm, hidden)
        pred = denormalize_state(pred_norm, bundle.stats)
        joint_target = pred[:5]
        base_cmd = BaseCommand()
        if scenario.variant == "long":
            cmd = pred[5:7]
            base_cmd = BaseCommand(float(cmd[0]), float(cmd[1]))
        world.step(base_cmd, joint_target)
        steps = t + 1
        if touched_tick is None and world.touching():
            touched_tick = t
        if world.state.attached_object is not None:
            grasped = True
        tip = world.gripper_tip()
        if touched_tick is not None and grasped:
            break
        if (abs(tip[0]) > WORKSPACE_XY or abs(tip[1]) > WORKSPACE_XY
                or not WORKSPACE_Z[0] <= tip[2] <= WORKSPACE_Z[1]):
            break

    tip = world.gripper_tip()
    target_center = world.object_centers[scenario.config.target_id]
    return RolloutReport(
        scenario=scenario.label,
        seed=scenario.seed,
        touched=touched_tick is not None,
        grasped=grasped,
        ticks_to_touch=touched_tick,
        final_tip_distance=float(np.linalg.norm(tip - target_center)),
        steps_executed=steps,
    )


def evaluate_suite(bundle: PolicyBundle, scenarios: list, max_steps: int = 300,
                   frame_sink_for=None):
    """Roll out every scenario; returns (reports, aggregates).

    frame_sink_for, when given, maps a scenario label to a per-frame sink
    (or None) so individual rollouts can be dumped.
    """
    if not scenarios:
        raise ValueError("need at least one scenario")
    reports = [rollout(bundle, sc, max_steps,
                       frame_sink_for(sc.label) if frame_sink_for else None)
               for sc in scenarios]
    touched = [r for r in reports if r.touched]
    aggregates = {
        "touch_rate": len(touched) / len(reports),
        "grasp_rate": sum(r.grasped for r in reports) / len(reports),
        "mean_ticks_to_touch": (
            float(np.mean([r.ticks_to_touch for r in touched])) if touched else None),
        "mean_final_tip_distance_m": float(np.mean([r.final_tip_distance for r in reports])),
    }
    return reports, aggregates


def reports_to_csv(reports: list) -> str:
    return "\n".join([CSV_HEADER] + [r.csv_row() for r in reports]) + "\n"
