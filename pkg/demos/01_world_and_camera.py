"""Drive the simulated robot around a tabletop scene and dump camera frames.

Creates a seeded scene, advances the world with a few hand-written commands,
and writes the final RGB frame as PPM and the disparity image as 16-bit PGM
into demos_out/.
"""

from pathlib import Path

import numpy as np

from skillsim import BaseCommand, World
from skillsim.imaging import write_pgm16, write_ppm
from skillsim.scene import make_short_scene

out_dir = Path(__file__).resolve().parent / "demos_out"
out_dir.mkdir(exist_ok=True)

config = make_short_scene(seed=7)
world = World(config)
print(f"scene: {len(config.objects)} objects on the table, target {config.target_id!r}")
print(f"robot starts at ({config.robot_start[0]:+.2f}, {config.robot_start[1]:+.2f}), "
      f"heading {config.robot_start[2]:+.2f} rad")

# creep forward half a tick-speed for one second, then raise the torso
for _ in range(10):
    world.step(BaseCommand(v=0.25, omega=0.0), world.state.joints)
lifted = world.state.joints.copy()
lifted[0] = 0.2
for _ in range(20):
    world.step(BaseCommand(), lifted)

frame = world.render()
print(f"rendered {frame.rgb.shape[1]}x{frame.rgb.shape[0]} frame; "
      f"{len(frame.cloud)} cloud points")
finite = frame.depth[frame.depth > 0]
print(f"depth range [{finite.min():.2f}, {finite.max():.2f}] m, "
      f"disparity max {frame.disparity.max():.2f} px")

target_px = int(np.count_nonzero(frame.hit_ids == world.hit_id(config.target_id)))
print(f"target occupies {target_px} pixels")

write_ppm(out_dir / "frame.ppm", frame.rgb)
write_pgm16(out_dir / "frame.pgm", frame.disparity)
print(f"wrote {out_dir / 'frame.ppm'} and {out_dir / 'frame.pgm'}")
