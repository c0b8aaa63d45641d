"""Flat-shaded analytic scenes and their exact ground-truth renders."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .camera import CameraIntrinsics, PoseSE3, image_rays
from .wire import ImageMessage, Timestamp


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float
    rgb: tuple

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("sphere radius must be positive")
        _check_rgb(self.rgb)

    def intersect(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        """Nearest positive hit distance per ray, inf on a miss."""
        oc = origins - np.asarray(self.center, dtype=np.float64)
        b = np.einsum("ij,ij->i", oc, dirs)
        c = np.einsum("ij,ij->i", oc, oc) - self.radius**2
        disc = b * b - c
        hit = disc >= 0
        root = np.sqrt(np.where(hit, disc, 0.0))
        t0 = -b - root
        t1 = -b + root
        t = np.where(t0 > 0, t0, t1)
        return np.where(hit & (t > 0), t, np.inf)

    def contains(self, x: np.ndarray) -> np.ndarray:
        return np.sum((x - np.asarray(self.center)) ** 2, axis=-1) <= self.radius**2


@dataclass(frozen=True)
class Box:
    min: tuple
    max: tuple
    rgb: tuple

    def __post_init__(self):
        if not np.all(np.asarray(self.min) < np.asarray(self.max)):
            raise ValueError("box min must be < max componentwise")
        _check_rgb(self.rgb)

    def intersect(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.min, dtype=np.float64)
        hi = np.asarray(self.max, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
            ta = (lo - origins) * inv
            tb = (hi - origins) * inv
        # Axis-parallel rays: NaN means the origin sits on a slab face.
        ta = np.where(np.isnan(ta), -np.inf, ta)
        tb = np.where(np.isnan(tb), np.inf, tb)
        t_near = np.minimum(ta, tb).max(axis=1)
        t_far = np.maximum(ta, tb).min(axis=1)
        hit = (t_near <= t_far) & (t_far > 0)
        t = np.where(t_near > 0, t_near, t_far)
        return np.where(hit, t, np.inf)

    def contains(self, x: np.ndarray) -> np.ndarray:
        return np.all((x >= np.asarray(self.min)) & (x <= np.asarray(self.max)), axis=-1)


def _check_rgb(rgb):
    if len(rgb) != 3 or not all(0.0 <= c <= 1.0 for c in rgb):
        raise ValueError(f"colors must be 3 values in [0, 1], got {rgb}")


@dataclass(frozen=True)
class AnalyticScene:
    primitives: tuple = ()
    background: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        _check_rgb(self.background)
        object.__setattr__(self, "primitives", tuple(self.primitives))

    def trace(self, origins: np.ndarray, dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Flat color (R, 3) of the nearest primitive per ray, and a hit mask."""
        rgb = np.broadcast_to(np.asarray(self.background, dtype=np.float64), origins.shape).copy()
        best = np.full(origins.shape[0], np.inf)
        for prim in self.primitives:
            t = prim.intersect(origins, dirs)
            closer = t < best
            best[closer] = t[closer]
            rgb[closer] = prim.rgb
        return rgb, np.isfinite(best)

    def to_dict(self) -> dict:
        prims = []
        for p in self.primitives:
            if isinstance(p, Sphere):
                prims.append({"type": "sphere", "center": list(p.center), "radius": p.radius, "rgb": list(p.rgb)})
            else:
                prims.append({"type": "box", "min": list(p.min), "max": list(p.max), "rgb": list(p.rgb)})
        return {"background": list(self.background), "primitives": prims}

    @classmethod
    def from_dict(cls, d: dict) -> "AnalyticScene":
        prims = []
        for p in d.get("primitives", []):
            kind = p.get("type")
            if kind == "sphere":
                prims.append(Sphere(tuple(p["center"]), float(p["radius"]), tuple(p["rgb"])))
            elif kind == "box":
                prims.append(Box(tuple(p["min"]), tuple(p["max"]), tuple(p["rgb"])))
            else:
                raise ValueError(f"unknown primitive type {kind!r}")
        return cls(tuple(prims), tuple(d.get("background", (1.0, 1.0, 1.0))))

    @classmethod
    def load(cls, path) -> "AnalyticScene":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def default_scene() -> AnalyticScene:
    """Red sphere with two green pipes over a grey floor, inside [-1, 1]^3."""
    return AnalyticScene(
        primitives=(
            Sphere((0.0, 0.0, 0.0), 0.3, (0.9, 0.15, 0.1)),
            Box((0.42, 0.14, -0.8), (0.5, 0.22, 0.7), (0.15, 0.75, 0.2)),
            Box((-0.45, -0.48, -0.8), (-0.37, -0.4, 0.5), (0.1, 0.55, 0.15)),
            Box((-1.0, -1.0, -1.0), (1.0, 1.0, -0.8), (0.55, 0.55, 0.5)),
        ),
        background=(0.8, 0.88, 1.0),
    )


def render_ground_truth_array(scene: AnalyticScene, intr: CameraIntrinsics, pose: PoseSE3) -> np.ndarray:
    """Exact 8-bit render, shape (H, W, 3)."""
    origins, dirs = image_rays(intr, pose)
    rgb, _ = scene.trace(origins, dirs)
    img = np.round(255.0 * np.clip(rgb, 0.0, 1.0)).astype(np.uint8)
    return img.reshape(intr.height, intr.width, 3)


def render_ground_truth(
    scene: AnalyticScene, intr: CameraIntrinsics, pose: PoseSE3, stamp: Timestamp = Timestamp(0), seq: int = 0
) -> ImageMessage:
    return ImageMessage.from_array(stamp, seq, render_ground_truth_array(scene, intr, pose))


def hit_mask(scene: AnalyticScene, intr: CameraIntrinsics, pose: PoseSE3) -> np.ndarray:
    origins, dirs = image_rays(intr, pose)
    return scene.trace(origins, dirs)[1].reshape(intr.height, intr.width)
