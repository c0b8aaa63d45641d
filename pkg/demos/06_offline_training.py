# %% [markdown]
# # Offline training on a synthetic helix
#
# Loads every frame up front, trains for a few hundred steps and tracks
# held-out PSNR against the best constant-color image.

# %%
import sys
import tempfile
from pathlib import Path

from streamnerf.config import TrainerConfig
from streamnerf.publisher import default_camera, synthesize
from streamnerf.render import RenderConfig
from streamnerf.scene import default_scene
from streamnerf.trainer import run_offline_training
from streamnerf.trajectory import HelicalSpec

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 300
out = Path(tempfile.mkdtemp())
scene = default_scene()
# 60 frames: 54 for training, every 10th held out
ds = synthesize(scene, HelicalSpec(count=60), default_camera(64, 64, 64.0))

cfg = TrainerConfig(
    out_dir=str(out),
    render=RenderConfig(background_color=scene.background),
    max_steps=steps,
    eval_interval=50,
)
report = run_offline_training(ds, cfg)

# %%
for rec in report.records:
    print(f"step {rec.step:5d}  loss {rec.loss:.5f}  psnr {rec.psnr_mean:6.2f} dB")
print(f"baseline {report.baseline_psnr:.2f} dB; snapshots and metrics.csv in {out}")
