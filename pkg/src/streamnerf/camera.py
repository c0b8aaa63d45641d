"""Pinhole camera model and rigid poses.

Camera frame convention is x-right, y-down, z-forward. Pixel (u, v) is
sampled at its center, i.e. ``u + 0.5``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def from_message(cls, info) -> "CameraIntrinsics":
        return cls(info.fx, info.fy, info.cx, info.cy, info.width, info.height)

    def as_dict(self) -> dict:
        return dict(fx=self.fx, fy=self.fy, cx=self.cx, cy=self.cy, width=self.width, height=self.height)


@dataclass(frozen=True)
class PoseSE3:
    """Camera-to-world transform; ``translation`` is the camera center."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-6, rtol=0):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise ValueError("rotation has det != +1")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "PoseSE3":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_quaternion(cls, q_wxyz, translation) -> "PoseSE3":
        return cls(quaternion_to_rotation(q_wxyz), translation)

    @classmethod
    def from_message(cls, pose_msg) -> "PoseSE3":
        return cls.from_quaternion(pose_msg.orientation, pose_msg.translation)

    def quaternion(self) -> np.ndarray:
        return rotation_to_quaternion(self.rotation)


def quaternion_to_rotation(q_wxyz) -> np.ndarray:
    w, x, y, z = np.asarray(q_wxyz, dtype=np.float64) / np.linalg.norm(q_wxyz)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotation_to_quaternion(r: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) with w >= 0 (Shepperd's method)."""
    r = np.asarray(r, dtype=np.float64)
    trace = np.trace(r)
    if trace > 0:
        s = 2.0 * np.sqrt(trace + 1.0)
        q = [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = 2.0 * np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2])
        q = [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
    elif r[1, 1] > r[2, 2]:
        s = 2.0 * np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2])
        q = [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1])
        q = [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    return -q if q[0] < 0 else q


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray


def camera_directions(intr: CameraIntrinsics, u, v) -> np.ndarray:
    """Unit camera-frame directions for pixel coordinates (broadcasting)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    d = np.stack(
        [(u + 0.5 - intr.cx) / intr.fx, (v + 0.5 - intr.cy) / intr.fy, np.ones(np.broadcast(u, v).shape)],
        axis=-1,
    )
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def pixel_to_ray(intr: CameraIntrinsics, pose: PoseSE3, u: float, v: float) -> Ray:
    if not (0 <= u < intr.width and 0 <= v < intr.height):
        raise ValueError(f"pixel ({u}, {v}) outside {intr.width}x{intr.height} image")
    d = pose.rotation @ camera_directions(intr, u, v)
    return Ray(pose.translation.copy(), d / np.linalg.norm(d))


def image_rays(intr: CameraIntrinsics, pose: PoseSE3) -> tuple[np.ndarray, np.ndarray]:
    """Origins and directions for every pixel, row-major, shape (H*W, 3)."""
    v, u = np.mgrid[0:intr.height, 0:intr.width]
    dirs = camera_directions(intr, u.ravel(), v.ravel()) @ pose.rotation.T
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    origins = np.broadcast_to(pose.translation, dirs.shape).copy()
    return origins, dirs


def batch_rays(intr: CameraIntrinsics, rotations, translations, u, v) -> tuple[np.ndarray, np.ndarray]:
    """Rays for pixel batches with per-sample poses: rotations (N,3,3), translations (N,3)."""
    dc = camera_directions(intr, u, v)
    dirs = np.einsum("nij,nj->ni", rotations, dc)
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    return np.array(translations, dtype=np.float64), dirs


class DegenerateLookAt(ValueError):
    pass


def look_at(position, target, world_up=(0.0, 0.0, 1.0)) -> PoseSE3:
    """Camera pose at ``position`` whose z-axis points at ``target``.

    x = z cross up (y-down convention), y = z cross x. Falls back to a
    (0, 1, 0) up vector when the view is nearly vertical.
    """
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    dist = np.linalg.norm(forward)
    if dist < 1e-12:
        raise DegenerateLookAt("camera position coincides with look-at target")
    z = forward / dist
    up = np.asarray(world_up, dtype=np.float64)
    if abs(z @ np.array([0.0, 0.0, 1.0])) > 0.999:
        up = np.array([0.0, 1.0, 0.0])
    x = np.cross(z, up)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return PoseSE3(np.stack([x, y, z], axis=1), position)
