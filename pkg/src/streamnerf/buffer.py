"""Pre-allocated training store fed by the posed-image stream.

One ingest thread writes, any number of trainer/eval threads read. A slot
is fully written before ``valid_count`` is advanced, and readers only ever
touch slots below the count they observed, so pixel reads need no lock.
Once all slots are filled the buffer is frozen for good.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass

import numpy as np

from .camera import quaternion_to_rotation
from .wire import NS_PER_S, CameraInfoMessage, PosedImage, PoseMessage

DEFAULT_CAPACITY = 300
DEFAULT_TARGET_RATE_HZ = 2.0


class InvalidConfig(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class EmptyBuffer(RuntimeError):
    pass


class InsertStatus(enum.Enum):
    INSERTED = "inserted"
    SKIPPED_RATE = "skipped_rate"
    REJECTED_FULL = "rejected_full"


@dataclass(frozen=True)
class InsertOutcome:
    status: InsertStatus
    slot: int | None = None

    @property
    def inserted(self) -> bool:
        return self.status is InsertStatus.INSERTED


@dataclass(frozen=True)
class PixelSample:
    image_index: int
    u: int
    v: int
    rgb: np.ndarray
    pose: PoseMessage


@dataclass(frozen=True)
class PixelBatch:
    """Column-oriented batch of pixel samples; index it to get PixelSample rows."""

    image_index: np.ndarray
    u: np.ndarray
    v: np.ndarray
    rgb: np.ndarray
    rotations: np.ndarray
    translations: np.ndarray
    poses: tuple

    def __len__(self):
        return len(self.image_index)

    def __getitem__(self, i) -> PixelSample:
        return PixelSample(
            int(self.image_index[i]), int(self.u[i]), int(self.v[i]), self.rgb[i],
            self.poses[self.image_index[i]],
        )


class TrainBuffer:
    def __init__(self, capacity: int, target_rate: float, camera_info: CameraInfoMessage):
        if capacity < 1:
            raise InvalidConfig(f"capacity must be >= 1, got {capacity}")
        if not target_rate > 0:
            raise InvalidConfig(f"target_rate must be > 0, got {target_rate}")
        self.capacity = int(capacity)
        self.target_rate = float(target_rate)
        self.camera_info = camera_info
        self.width = camera_info.width
        self.height = camera_info.height
        self._min_interval_ns = round(NS_PER_S / self.target_rate)

        self.images = np.zeros((self.capacity, self.height, self.width, 3), dtype=np.uint8)
        self.rotations = np.zeros((self.capacity, 3, 3))
        self.translations = np.zeros((self.capacity, 3))
        self.stamps_ns = np.zeros(self.capacity, dtype=np.int64)
        self.poses: list[PoseMessage | None] = [None] * self.capacity
        self._valid_count = 0
        self.last_accept_stamp = None
        self.skipped_rate = 0
        self.rejected_full = 0
        self._write_lock = threading.Lock()

    @property
    def valid_count(self) -> int:
        return self._valid_count

    @property
    def is_full(self) -> bool:
        return self._valid_count >= self.capacity

    def snapshot(self) -> tuple[int, bool]:
        n = self._valid_count
        return n, n >= self.capacity

    def maybe_insert(self, pi: PosedImage, *, ignore_rate: bool = False) -> InsertOutcome:
        img = pi.image
        if (img.width, img.height) != (self.width, self.height):
            raise DimensionMismatch(
                f"image is {img.width}x{img.height}, buffer expects {self.width}x{self.height}"
            )
        with self._write_lock:
            n = self._valid_count
            if n >= self.capacity:
                self.rejected_full += 1
                return InsertOutcome(InsertStatus.REJECTED_FULL)
            stamp_ns = img.stamp.to_ns()
            if (
                not ignore_rate
                and self.last_accept_stamp is not None
                and stamp_ns - self.last_accept_stamp.to_ns() < self._min_interval_ns
            ):
                self.skipped_rate += 1
                return InsertOutcome(InsertStatus.SKIPPED_RATE)

            self.images[n] = img.to_array()
            self.rotations[n] = quaternion_to_rotation(pi.pose.orientation)
            self.translations[n] = pi.pose.translation
            self.stamps_ns[n] = stamp_ns
            self.poses[n] = pi.pose
            self.last_accept_stamp = img.stamp
            # Publish only after the slot is complete.
            self._valid_count = n + 1
            return InsertOutcome(InsertStatus.INSERTED, n)

    def sample_pixel_batch(self, rng: np.random.Generator, batch_size: int) -> PixelBatch:
        n = self._valid_count
        if n == 0:
            raise EmptyBuffer("no images buffered yet")
        idx = rng.integers(0, n, size=batch_size)
        u = rng.integers(0, self.width, size=batch_size)
        v = rng.integers(0, self.height, size=batch_size)
        rgb = self.images[idx, v, u].astype(np.float64) / 255.0
        return PixelBatch(
            idx, u, v, rgb, self.rotations[idx], self.translations[idx], tuple(self.poses[:n])
        )
