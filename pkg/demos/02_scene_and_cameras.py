# %% [markdown]
# # Ground truth: an analytic scene seen from a helix
#
# The synthetic data source ray-traces flat-shaded spheres and boxes, so
# every image is exact. Cameras look along +z with y pointing down the image.

# %%
import sys
import tempfile
from pathlib import Path

import numpy as np

from streamnerf.camera import image_rays, look_at, pixel_to_ray
from streamnerf.dataset import load_dataset, write_ppm
from streamnerf.publisher import default_camera, synthesize_to_disk
from streamnerf.scene import default_scene, render_ground_truth_array
from streamnerf.trajectory import HelicalSpec, trajectory_poses

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
cam = default_camera(64, 64, 64.0)
scene = default_scene()

# %% a single camera and its rays
pose = look_at([0.0, -1.2, 0.3], [0.0, 0.0, 0.0])
ray = pixel_to_ray(cam, pose, 31.5, 31.5)  # the principal point
print("optical axis", np.round(ray.direction, 4), "from", ray.origin)
origins, dirs = image_rays(cam, pose)
print(dirs.shape, "rays, all unit:", np.allclose(np.linalg.norm(dirs, axis=1), 1))

img = render_ground_truth_array(scene, cam, pose)
write_ppm(out / "front.ppm", img)
print("centre pixel", img[32, 32], "(the red sphere)")

# %% the helix used for streaming
spec = HelicalSpec(count=300)
stamps, poses = zip(*trajectory_poses(spec))
heights = [p.translation[2] for p in poses]
print(f"{len(poses)} poses over {stamps[-1]:.2f} s, z from {heights[0]:.2f} to {heights[-1]:.2f}")

ds = synthesize_to_disk(scene, spec, cam, out / "helix")
print("dataset at", out / "helix", "frames:", len(load_dataset(out / "helix")))
