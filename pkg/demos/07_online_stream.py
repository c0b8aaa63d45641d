# %% [markdown]
# # Training while the data streams in
#
# The publisher replays a helix at 20 Hz over TCP. The trainer pairs poses
# with images, keeps one image every 0.5 s and trains from the first image
# on. Everything runs in one process here; the CLI equivalents are
#
#     streamnerf synth --frames 300 --out data/helix
#     streamnerf train-online --listen 127.0.0.1:7011 --holdout-dataset data/helix --out run
#     streamnerf publish --dataset data/helix --rate 20 --dest 127.0.0.1:7011

# %%
import tempfile
import threading
import warnings
from pathlib import Path

from streamnerf.config import TrainerConfig
from streamnerf.publisher import default_camera, replay, synthesize_to_disk
from streamnerf.render import RenderConfig
from streamnerf.scene import default_scene
from streamnerf.trainer import OnlineSession, StreamClosedEarly
from streamnerf.trajectory import HelicalSpec

root = Path(tempfile.mkdtemp())
scene = default_scene()
synthesize_to_disk(scene, HelicalSpec(count=300), default_camera(64, 64, 64.0), root / "helix")

cfg = TrainerConfig(
    listen="127.0.0.1:0",
    out_dir=str(root / "run"),
    render=RenderConfig(background_color=scene.background),
    holdout_dataset=str(root / "helix"),
    max_wall_s=90.0,
    eval_interval=50,
)
session = OnlineSession(cfg)
sender = threading.Thread(target=replay, args=(root / "helix", 20.0, session.address), kwargs={"holdout_every": 10})
sender.start()
with warnings.catch_warnings():
    # 15 s of stream at 2 Hz is ~30 images, fewer than the 300 slots
    warnings.simplefilter("ignore", StreamClosedEarly)
    report = session.run()
sender.join()

# %%
for rec in report.records:
    print(f"step {rec.step:5d}  images {rec.n_images:3d}  psnr {rec.psnr_mean:6.2f} dB")
s = report.stats
print(f"pairs {s['pairs']}, skipped by rate gate {s['skipped_rate']}, ingest p99 {s['ingest_latency_p99_ms']:.2f} ms")
print("outputs in", root / "run")
