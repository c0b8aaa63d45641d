# %% [markdown]
# # Framed messages and approximate-time pairing
#
# Every message on the socket is `[tag u8][len u32 LE][body]`. Poses and
# images arrive on separate "topics" and get matched by timestamp.

# %%
import numpy as np

from streamnerf.wire import (
    CameraInfoMessage, FrameDecoder, ImageMessage, Pairer, PoseMessage, Timestamp,
    decode_message, encode_message,
)

cam = CameraInfoMessage(64.0, 64.0, 32.0, 32.0, 64, 64)
frame = encode_message(cam)
print(len(frame), "bytes:", frame[:5].hex(), "...")  # tag 3, body length 60
assert decode_message(frame) == cam

# %% the decoder copes with arbitrary chunking
stamp = Timestamp.from_float(1.25)
img = ImageMessage.from_array(stamp, 7, np.zeros((64, 64, 3), np.uint8))
blob = encode_message(cam) + encode_message(img)
dec = FrameDecoder()
got = []
for i in range(0, len(blob), 1000):
    got += dec.feed(blob[i:i + 1000])
print([type(m).__name__ for m in got], "leftover", dec.pending_bytes)

# %% pairing: nearest pose within 10 ms, each pose used once
p = Pairer(0.010)
p.push_pose(PoseMessage(Timestamp.from_float(1.000), 0, (0, 0, 0), (1, 0, 0, 0)))
p.push_pose(PoseMessage(Timestamp.from_float(1.006), 1, (0, 0, 0), (1, 0, 0, 0)))
(pair,) = p.push_image(ImageMessage(Timestamp.from_float(1.005), 0, 1, 1, b"abc"))
print("image at 1.005 took pose", pair.pose.seq, "skew", round(pair.pair_skew * 1e3, 3), "ms")

# An image whose pose never shows up is dropped once newer poses pass it by.
p.push_image(ImageMessage(Timestamp.from_float(1.100), 1, 1, 1, b"abc"))
p.push_pose(PoseMessage(Timestamp.from_float(1.200), 2, (0, 0, 0), (1, 0, 0, 0)))
print("pushed", p.images_pushed, "paired", p.pairs_emitted, "dropped", p.images_dropped, "queued", p.images_queued)
