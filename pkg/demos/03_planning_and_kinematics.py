"""Global planning and arm kinematics in isolation.

Plans an A* route across the long-variant occupancy grid (printed as ASCII),
then solves inverse kinematics for a grasp target and verifies it with
forward kinematics.
"""

import numpy as np

from skillsim.kinematics import fk, ik
from skillsim.nav import OccupancyGrid, astar, path_cost
from skillsim.scene import make_long_scene

config = make_long_scene(seed=1)
grid = OccupancyGrid.from_world(config)
start = config.robot_start[:2]
goal = config.object(config.target_id).center[:2] + np.array([-0.65, 0.0])
path = astar(grid, start, goal)
print(f"grid {grid.cells.shape[0]}x{grid.cells.shape[1]} at "
      f"{grid.resolution} m/cell, {int(grid.cells.sum())} occupied cells")
print(f"path: {len(path)} waypoints, cost {path_cost(path, grid.resolution):.1f} cells")

cells = np.where(grid.cells, "#", ".").astype(object)
for w in path.waypoints:
    ix, iy = grid.to_cell(w)
    cells[ix, iy] = "o"
for p, mark in ((start, "S"), (goal, "G")):
    ix, iy = grid.to_cell(p)
    cells[ix, iy] = mark
stride = 2  # halve the raster so it fits a terminal
for iy in range(cells.shape[1] - 1, -1, -stride):
    print("".join(cells[ix, iy] for ix in range(0, cells.shape[0], stride)))

# reach for a point above the table from the standoff pose
base = (goal[0], goal[1], 0.0)
seed_joints = np.array([0.0, 0.9, -1.4, 0.0, 1.0])
target = config.object(config.target_id).center + np.array([0.0, 0.0, 0.10])
solution = ik(target, seed_joints, base)
tip = fk(solution, base)
print(f"ik target   ({target[0]:+.3f}, {target[1]:+.3f}, {target[2]:+.3f})")
print(f"fk(ik)      ({tip[0]:+.3f}, {tip[1]:+.3f}, {tip[2]:+.3f})")
print(f"residual    {np.linalg.norm(tip - target) * 1000:.3f} mm")
print(f"joints      {np.round(solution, 3)}")
