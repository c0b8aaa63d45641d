# %% [markdown]
# # Rate-gated, freeze-on-full training buffer
#
# A 20 Hz stream is thinned to 2 Hz by timestamp. Once the buffer is full it
# stops accepting images and training carries on over the frozen set.

# %%
import numpy as np

from streamnerf.buffer import InsertStatus, TrainBuffer
from streamnerf.wire import CameraInfoMessage, ImageMessage, PosedImage, PoseMessage, Timestamp

info = CameraInfoMessage(8.0, 8.0, 4.0, 4.0, 8, 8)


def frame(t, k):
    stamp = Timestamp.from_float(t)
    img = ImageMessage(stamp, k, 8, 8, bytes([k % 256]) * 192)
    return PosedImage(img, PoseMessage(stamp, k, (0.0, 0.0, float(k)), (1.0, 0.0, 0.0, 0.0)), 0.0)


buf = TrainBuffer(capacity=300, target_rate=2.0, camera_info=info)
outcomes = [buf.maybe_insert(frame(k / 20, k)).status for k in range(300)]
print({s.name: outcomes.count(s) for s in InsertStatus})  # 15 s of stamps -> 30 kept

# %% fill it up: 150 s of 20 Hz frames
for k in range(300, 3000):
    buf.maybe_insert(frame(k / 20, k))
print("valid", buf.valid_count, "full", buf.is_full, "rejected after full", buf.rejected_full)

# %% sampling: uniform image, then uniform pixel
batch = buf.sample_pixel_batch(np.random.default_rng(0), 1024)
print("images hit", len(np.unique(batch.image_index)), "rgb range", batch.rgb.min(), batch.rgb.max())
print("one sample:", batch[0].image_index, batch[0].u, batch[0].v, batch[0].rgb)
