"""Binary wire format for the pose / image / camera-info streams.

Every frame is ``[tag:u8][payload_length:u32 LE][payload]``. All payloads
start with a stamp (u64 seconds, u32 nanoseconds) and a u64 sequence
number, followed by type-specific fields. Floats are IEEE-754 doubles,
everything little-endian.
"""

from __future__ import annotations

import math
import socket
import struct
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, Union

import numpy as np

TAG_POSE = 0x01
TAG_IMAGE = 0x02
TAG_CAMERA_INFO = 0x03

FRAME_HEADER = struct.Struct("<BI")
_POSE_BODY = struct.Struct("<QIQ3d4d")
_IMAGE_HEADER = struct.Struct("<QIQIII")
_CAMERA_BODY = struct.Struct("<QIQ4dII")

NS_PER_S = 1_000_000_000
DEFAULT_PAIR_TOLERANCE = 0.010


class WireError(Exception):
    """Base class for frame decoding failures."""


class TruncatedFrame(WireError):
    pass


class UnknownTopicTag(WireError):
    pass


class MalformedBody(WireError):
    pass


@dataclass(frozen=True, order=True)
class Timestamp:
    seconds: int
    nanoseconds: int = 0

    def __post_init__(self):
        if not 0 <= self.seconds < 2**64:
            raise ValueError(f"seconds out of u64 range: {self.seconds}")
        if not 0 <= self.nanoseconds < NS_PER_S:
            raise ValueError(f"nanoseconds must be in [0, 1e9): {self.nanoseconds}")

    @classmethod
    def from_ns(cls, ns: int) -> "Timestamp":
        return cls(*divmod(int(ns), NS_PER_S))

    @classmethod
    def from_float(cls, seconds: float) -> "Timestamp":
        # Rounded to the nearest nanosecond so 0.05 * k lands on exact grid values.
        return cls.from_ns(round(seconds * NS_PER_S))

    def to_ns(self) -> int:
        return self.seconds * NS_PER_S + self.nanoseconds

    def to_float(self) -> float:
        return self.seconds + self.nanoseconds / NS_PER_S


@dataclass(frozen=True)
class PoseMessage:
    stamp: Timestamp
    seq: int
    translation: tuple[float, float, float]
    orientation: tuple[float, float, float, float]  # (w, x, y, z), camera-to-world

    def __post_init__(self):
        object.__setattr__(self, "translation", tuple(float(v) for v in self.translation))
        object.__setattr__(self, "orientation", tuple(float(v) for v in self.orientation))
        if len(self.translation) != 3 or len(self.orientation) != 4:
            raise ValueError("translation needs 3 components, orientation 4")
        if not all(math.isfinite(v) for v in self.translation + self.orientation):
            raise ValueError("pose components must be finite")
        norm = math.sqrt(sum(v * v for v in self.orientation))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"orientation is not a unit quaternion (|q| = {norm})")
        _check_u64(self.seq)


@dataclass(frozen=True)
class ImageMessage:
    stamp: Timestamp
    seq: int
    width: int
    height: int
    pixel_data: bytes = field(repr=False)
    channels: int = 3

    def __post_init__(self):
        _check_u64(self.seq)
        if self.channels != 3:
            raise ValueError("only 3-channel RGB images are supported")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"bad image size {self.width}x{self.height}")
        if len(self.pixel_data) != self.width * self.height * 3:
            raise ValueError(
                f"pixel_data has {len(self.pixel_data)} bytes, "
                f"expected {self.width * self.height * 3}"
            )

    @classmethod
    def from_array(cls, stamp: Timestamp, seq: int, rgb: np.ndarray) -> "ImageMessage":
        rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
        height, width, _ = rgb.shape
        return cls(stamp, seq, width, height, rgb.tobytes())

    def to_array(self) -> np.ndarray:
        """Read-only (height, width, 3) uint8 view of the pixels."""
        return np.frombuffer(self.pixel_data, dtype=np.uint8).reshape(self.height, self.width, 3)


@dataclass(frozen=True)
class CameraInfoMessage:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    stamp: Timestamp = Timestamp(0, 0)
    seq: int = 0

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"bad image size {self.width}x{self.height}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        _check_u64(self.seq)


Message = Union[PoseMessage, ImageMessage, CameraInfoMessage]


@dataclass(frozen=True)
class PosedImage:
    image: ImageMessage
    pose: PoseMessage
    pair_skew: float  # image stamp minus pose stamp, seconds


def _check_u64(value: int) -> None:
    if not 0 <= value < 2**64:
        raise ValueError(f"value out of u64 range: {value}")


def encode_message(msg: Message) -> bytes:
    """Serialize one message into a complete frame."""
    s = msg.stamp
    if isinstance(msg, PoseMessage):
        tag = TAG_POSE
        body = _POSE_BODY.pack(s.seconds, s.nanoseconds, msg.seq, *msg.translation, *msg.orientation)
    elif isinstance(msg, ImageMessage):
        tag = TAG_IMAGE
        body = (
            _IMAGE_HEADER.pack(s.seconds, s.nanoseconds, msg.seq, msg.width, msg.height, msg.channels)
            + msg.pixel_data
        )
    elif isinstance(msg, CameraInfoMessage):
        tag = TAG_CAMERA_INFO
        body = _CAMERA_BODY.pack(
            s.seconds, s.nanoseconds, msg.seq, msg.fx, msg.fy, msg.cx, msg.cy, msg.width, msg.height
        )
    else:
        raise TypeError(f"cannot encode {type(msg).__name__}")
    return FRAME_HEADER.pack(tag, len(body)) + body


def _decode_body(tag: int, body: bytes) -> Message:
    try:
        if tag == TAG_POSE:
            if len(body) != _POSE_BODY.size:
                raise MalformedBody(f"pose body is {len(body)} bytes, expected {_POSE_BODY.size}")
            sec, ns, seq, *vals = _POSE_BODY.unpack(body)
            return PoseMessage(Timestamp(sec, ns), seq, tuple(vals[:3]), tuple(vals[3:]))
        if tag == TAG_IMAGE:
            if len(body) < _IMAGE_HEADER.size:
                raise MalformedBody("image body shorter than its header")
            sec, ns, seq, width, height, channels = _IMAGE_HEADER.unpack_from(body)
            return ImageMessage(
                Timestamp(sec, ns), seq, width, height, bytes(body[_IMAGE_HEADER.size:]), channels
            )
        if tag == TAG_CAMERA_INFO:
            if len(body) != _CAMERA_BODY.size:
                raise MalformedBody(f"camera body is {len(body)} bytes, expected {_CAMERA_BODY.size}")
            sec, ns, seq, fx, fy, cx, cy, width, height = _CAMERA_BODY.unpack(body)
            return CameraInfoMessage(fx, fy, cx, cy, width, height, Timestamp(sec, ns), seq)
    except ValueError as exc:
        raise MalformedBody(str(exc)) from exc
    raise UnknownTopicTag(f"unknown topic tag 0x{tag:02x}")


def decode_message(frame: bytes) -> Message:
    """Decode exactly one complete frame."""
    if len(frame) < FRAME_HEADER.size:
        raise TruncatedFrame("frame shorter than its 5-byte header")
    tag, length = FRAME_HEADER.unpack_from(frame)
    if tag not in (TAG_POSE, TAG_IMAGE, TAG_CAMERA_INFO):
        raise UnknownTopicTag(f"unknown topic tag 0x{tag:02x}")
    end = FRAME_HEADER.size + length
    if end > len(frame):
        raise TruncatedFrame(f"length prefix {length} exceeds {len(frame) - FRAME_HEADER.size} available bytes")
    if end < len(frame):
        raise MalformedBody(f"{len(frame) - end} trailing bytes after frame")
    return _decode_body(tag, frame[FRAME_HEADER.size:end])


class FrameDecoder:
    """Incremental decoder: feed arbitrary chunks, get whole messages back."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, chunk: bytes) -> list[Message]:
        self._buf += chunk
        out = []
        while len(self._buf) >= FRAME_HEADER.size:
            tag, length = FRAME_HEADER.unpack_from(self._buf)
            if tag not in (TAG_POSE, TAG_IMAGE, TAG_CAMERA_INFO):
                raise UnknownTopicTag(f"unknown topic tag 0x{tag:02x}")
            end = FRAME_HEADER.size + length
            if len(self._buf) < end:
                break
            out.append(_decode_body(tag, bytes(self._buf[FRAME_HEADER.size:end])))
            del self._buf[:end]
        return out

    @property
    def pending_bytes(self) -> int:
        return len(self._buf)


def send_message(sock: socket.socket, msg: Message) -> None:
    sock.sendall(encode_message(msg))


def iter_socket_messages(sock: socket.socket, chunk_size: int = 1 << 16) -> Iterator[Message]:
    """Yield messages until the peer closes. A partial trailing frame raises."""
    decoder = FrameDecoder()
    while True:
        chunk = sock.recv(chunk_size)
        if not chunk:
            if decoder.pending_bytes:
                raise TruncatedFrame(f"stream closed with {decoder.pending_bytes} bytes of a partial frame")
            return
        yield from decoder.feed(chunk)


class Pairer:
    """Approximate-time pairing of pose and image streams.

    An image pairs with the nearest queued pose within ``tolerance``. If no
    pose is close enough it waits until a pose newer than
    ``image_stamp + tolerance`` arrives, at which point it is dropped.
    Each pose is used at most once.
    """

    def __init__(self, tolerance: float = DEFAULT_PAIR_TOLERANCE):
        if tolerance < 0:
            raise ValueError("tolerance must be non-negative")
        self.tolerance = tolerance
        self._tol_ns = round(tolerance * NS_PER_S)
        self.poses: deque[PoseMessage] = deque()
        self.images: deque[ImageMessage] = deque()
        self.images_pushed = 0
        self.poses_pushed = 0
        self.pairs_emitted = 0
        self.images_dropped = 0
        self._last_image_ns: int | None = None

    def push_pose(self, pose: PoseMessage) -> list[PosedImage]:
        if self.poses and pose.stamp < self.poses[-1].stamp:
            raise ValueError("pose stamps must be non-decreasing")
        self.poses.append(pose)
        self.poses_pushed += 1
        return self.process()

    def push_image(self, image: ImageMessage) -> list[PosedImage]:
        if self.images and image.stamp < self.images[-1].stamp:
            raise ValueError("image stamps must be non-decreasing")
        self.images.append(image)
        self.images_pushed += 1
        self._last_image_ns = image.stamp.to_ns()
        return self.process()

    @property
    def images_queued(self) -> int:
        return len(self.images)

    def process(self) -> list[PosedImage]:
        out = []
        newest_pose_ns = self.poses[-1].stamp.to_ns() if self.poses else None
        pending = deque()
        while self.images:
            image = self.images.popleft()
            img_ns = image.stamp.to_ns()
            best, best_gap = None, None
            for i, pose in enumerate(self.poses):
                gap = abs(img_ns - pose.stamp.to_ns())
                # Strict < keeps the earlier pose on ties.
                if gap <= self._tol_ns and (best_gap is None or gap < best_gap):
                    best, best_gap = i, gap
            if best is not None:
                pose = self.poses[best]
                del self.poses[best]
                skew = (img_ns - pose.stamp.to_ns()) / NS_PER_S
                out.append(PosedImage(image, pose, skew))
                self.pairs_emitted += 1
            elif newest_pose_ns is not None and newest_pose_ns > img_ns + self._tol_ns:
                self.images_dropped += 1
            else:
                pending.append(image)
        self.images = pending
        self._prune_poses()
        return out

    def _prune_poses(self):
        # Future images are no older than the oldest pending one (or the last seen).
        if self.images:
            floor_ns = self.images[0].stamp.to_ns()
        elif self._last_image_ns is not None:
            floor_ns = self._last_image_ns
        else:
            return
        while self.poses and self.poses[0].stamp.to_ns() < floor_ns - self._tol_ns:
            self.poses.popleft()
