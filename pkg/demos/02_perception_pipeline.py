"""Walk the object-localization pipeline stage by stage.

Renders a noisy frame, then shows how voxel downsampling, statistical
outlier removal, color segmentation, and the centroid turn 4096 raw points
into one object position, compared against the renderer's ground truth.
"""

import numpy as np

from skillsim import World
from skillsim.perception import (
    PerceptionParams,
    centroid,
    color_segment,
    statistical_outlier_removal,
    voxel_grid_filter,
)
from skillsim.scene import make_short_scene

config = make_short_scene(seed=3)
world = World(config)

# ground truth: centroid of the target's visible surface, rendered noise-free
clean = world.render(depth_noise_sigma=0.0)
labels = (clean.hit_ids.ravel() == world.hit_id(config.target_id))
truth = clean.cloud.positions[labels[clean.depth.ravel() > 0]].mean(axis=0)

frame = World(config).render()  # depth noise sigma 0.002 from the scene family
params = PerceptionParams()
print(f"raw cloud: {len(frame.cloud)} points (depth noise 2 mm)")

voxeled = voxel_grid_filter(frame.cloud, params.leaf)
print(f"after voxel grid (leaf {params.leaf} m): {len(voxeled)} points")

cleaned = statistical_outlier_removal(voxeled, params.k_neighbors, params.alpha)
print(f"after outlier removal (k={params.k_neighbors}, alpha={params.alpha}): "
      f"{len(cleaned)} points")

target_color = config.object(config.target_id).color
segment = color_segment(cleaned, target_color, params.color_threshold)
print(f"after color segmentation (threshold {params.color_threshold}): "
      f"{len(segment)} points")

estimate = centroid(segment)
err = np.linalg.norm(estimate - truth)
print(f"estimate  ({estimate[0]:+.3f}, {estimate[1]:+.3f}, {estimate[2]:+.3f})")
print(f"truth     ({truth[0]:+.3f}, {truth[1]:+.3f}, {truth[2]:+.3f})")
print(f"error     {err * 1000:.1f} mm")
