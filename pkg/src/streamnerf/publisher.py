"""Synthetic data source: render posed frames and replay them over TCP."""

from __future__ import annotations

import hashlib
import logging
import socket
import time
from dataclasses import dataclass, field
from pathlib import Path

from .camera import CameraIntrinsics
from .dataset import Dataset, Frame, load_dataset, write_dataset
from .scene import AnalyticScene, render_ground_truth_array
from .trajectory import HelicalSpec, RasterSpec, trajectory_poses
from .wire import (
    CameraInfoMessage,
    ImageMessage,
    PoseMessage,
    Timestamp,
    encode_message,
)

log = logging.getLogger(__name__)


class ConnectionLost(ConnectionError):
    def __init__(self, msg: str, frames_sent: int):
        super().__init__(f"{msg} (after {frames_sent} frames)")
        self.frames_sent = frames_sent


def synthesize(
    scene: AnalyticScene, spec: HelicalSpec | RasterSpec, camera: CameraIntrinsics
) -> Dataset:
    frames, images = [], []
    for k, (stamp, pose) in enumerate(trajectory_poses(spec)):
        images.append(render_ground_truth_array(scene, camera, pose))
        frames.append(
            Frame(
                f"frames/{k:06d}.ppm",
                round(stamp, 9),
                tuple(float(v) for v in pose.translation),
                tuple(float(v) for v in pose.quaternion()),
            )
        )
    return Dataset(camera, frames, images)


def synthesize_to_disk(scene, spec, camera, out) -> Dataset:
    ds = synthesize(scene, spec, camera)
    write_dataset(out, ds.camera, ds.frames, ds.images)
    return ds


def frame_messages(ds: Dataset, k: int) -> tuple[PoseMessage, ImageMessage]:
    fr = ds.frames[k]
    stamp = Timestamp.from_float(fr.stamp)
    return PoseMessage(stamp, k, fr.t, fr.q), ImageMessage.from_array(stamp, k, ds.images[k])


def camera_message(ds: Dataset) -> CameraInfoMessage:
    c = ds.camera
    return CameraInfoMessage(c.fx, c.fy, c.cx, c.cy, c.width, c.height)


@dataclass
class ReplaySummary:
    frames_sent: int = 0
    messages_sent: int = 0
    bytes_sent: int = 0
    wall_s: float = 0.0
    sent: list = field(default_factory=list)  # (stamp_ns, tag, sha256 of payload)


def schedule(ds: Dataset, rate_hz: float, jitter_ms: float = 0.0, stall_after: int | None = None, stall_s: float = 0.0):
    """(send offset in seconds, frame index, message) in send order.

    Frame k's pose goes out at k / rate_hz; its image ``jitter_ms`` later
    (negative jitter sends the image first). Frames after ``stall_after``
    are delayed by ``stall_s``.
    """
    events = [(0.0, -1, 0, camera_message(ds))]
    lead = max(0.0, -jitter_ms / 1000.0)  # keeps camera info ahead of an early first image
    for k in range(len(ds)):
        base = lead + k / rate_hz
        if stall_after is not None and k > stall_after:
            base += stall_s
        pose, image = frame_messages(ds, k)
        events.append((base, k, 0, pose))
        events.append((base + jitter_ms / 1000.0, k, 1, image))
    events.sort(key=lambda e: (e[0], e[1], e[2]))
    return [(t, k, msg) for t, k, _, msg in events]


def replay(
    ds: Dataset | str | Path,
    rate_hz: float,
    dest: tuple[str, int],
    jitter_ms: float = 0.0,
    stall_after: int | None = None,
    stall_s: float = 0.0,
    holdout_every: int = 0,
    connect_timeout: float = 10.0,
) -> ReplaySummary:
    """Stream a dataset to ``dest``: camera info first, then pose/image per frame.

    With ``holdout_every > 0`` every n-th frame is withheld (kept for evaluation).
    """
    if not isinstance(ds, Dataset):
        ds = load_dataset(ds)
    ds = ds.split(holdout_every)[0]
    if not rate_hz > 0:
        raise ValueError("rate_hz must be positive")
    events = schedule(ds, rate_hz, jitter_ms, stall_after, stall_s)
    summary = ReplaySummary()
    sock = _connect(dest, connect_timeout)
    per_frame: dict[int, int] = {}
    try:
        start = time.perf_counter()
        for offset, k, msg in events:
            delay = start + offset - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
            frame = encode_message(msg)
            try:
                sock.sendall(frame)
            except OSError as exc:
                raise ConnectionLost(str(exc), summary.frames_sent) from exc
            summary.messages_sent += 1
            summary.bytes_sent += len(frame)
            summary.sent.append((msg.stamp.to_ns(), frame[0], hashlib.sha256(frame[5:]).hexdigest()))
            if k >= 0:
                # A frame counts once both its pose and image are out.
                per_frame[k] = per_frame.get(k, 0) + 1
                if per_frame[k] == 2:
                    summary.frames_sent += 1
        summary.wall_s = time.perf_counter() - start
    finally:
        try:
            sock.shutdown(socket.SHUT_WR)
        except OSError:
            pass
        sock.close()
    log.info("replayed %d frames in %.2f s", summary.frames_sent, summary.wall_s)
    return summary


def _connect(dest, timeout) -> socket.socket:
    deadline = time.monotonic() + timeout
    while True:
        try:
            sock = socket.create_connection(dest, timeout=timeout)
        except OSError:
            if time.monotonic() > deadline:
                raise
            time.sleep(0.05)
            continue
        sock.settimeout(None)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        return sock


def parse_hostport(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"expected HOST:PORT, got {text!r}")
    return host, int(port)


def default_camera(width: int = 64, height: int = 64, focal: float = 64.0) -> CameraIntrinsics:
    return CameraIntrinsics(focal, focal, width / 2.0, height / 2.0, width, height)

