"""On-disk datasets: a JSON manifest plus one binary PPM per frame.

Manifest layout::

    {"camera": {"fx", "fy", "cx", "cy", "width", "height"},
     "frames": [{"file": str, "stamp": float, "t": [x, y, z], "q": [w, x, y, z]}, ...]}
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import CameraIntrinsics, PoseSE3

MANIFEST_NAME = "manifest.json"


class MissingFile(FileNotFoundError):
    pass


class SchemaViolation(ValueError):
    pass


@dataclass(frozen=True)
class Frame:
    file: str
    stamp: float
    t: tuple
    q: tuple

    def pose(self) -> PoseSE3:
        return PoseSE3.from_quaternion(self.q, self.t)


@dataclass
class Dataset:
    camera: CameraIntrinsics
    frames: list[Frame]
    images: list[np.ndarray]

    def __len__(self):
        return len(self.frames)

    def split(self, holdout_every: int) -> tuple["Dataset", "Dataset"]:
        """(stream, holdout): every ``holdout_every``-th frame goes to holdout; 0 disables."""
        if holdout_every <= 0:
            return self, Dataset(self.camera, [], [])
        keep = [i for i in range(len(self)) if i % holdout_every != 0]
        held = [i for i in range(len(self)) if i % holdout_every == 0]
        pick = lambda idx: Dataset(self.camera, [self.frames[i] for i in idx], [self.images[i] for i in idx])
        return pick(keep), pick(held)


def write_ppm(path, img: np.ndarray) -> None:
    img = np.ascontiguousarray(img, dtype=np.uint8)
    h, w, c = img.shape
    if c != 3:
        raise ValueError("PPM images must be RGB")
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise SchemaViolation(f"{path}: truncated PPM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte before the raster
    if tokens[0] != b"P6" or tokens[3] != b"255":
        raise SchemaViolation(f"{path}: only binary P6 with maxval 255 is supported")
    w, h = int(tokens[1]), int(tokens[2])
    raster = data[pos:pos + w * h * 3]
    if len(raster) != w * h * 3:
        raise SchemaViolation(f"{path}: raster has {len(raster)} bytes, expected {w * h * 3}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w, 3).copy()


def write_dataset(path, camera: CameraIntrinsics, frames: list[Frame], images: list[np.ndarray]) -> Path:
    path = Path(path)
    (path / "frames").mkdir(parents=True, exist_ok=True)
    if len(frames) != len(images):
        raise ValueError("frames and images differ in length")
    for fr, img in zip(frames, images):
        write_ppm(path / fr.file, img)
    manifest = {
        "camera": camera.as_dict(),
        "frames": [{"file": f.file, "stamp": f.stamp, "t": list(f.t), "q": list(f.q)} for f in frames],
    }
    with open(path / MANIFEST_NAME, "w") as f:
        json.dump(manifest, f, indent=1)
    return path


def _require(cond, msg):
    if not cond:
        raise SchemaViolation(msg)


def _vector(value, n, what):
    _require(isinstance(value, list) and len(value) == n, f"{what} must be a list of {n} numbers")
    _require(all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value), f"{what} must be numeric")
    return tuple(float(v) for v in value)


def parse_manifest(doc: dict) -> tuple[CameraIntrinsics, list[Frame]]:
    _require(isinstance(doc, dict), "manifest must be a JSON object")
    cam = doc.get("camera")
    _require(isinstance(cam, dict), "missing 'camera' object")
    for key in ("fx", "fy", "cx", "cy", "width", "height"):
        _require(key in cam, f"camera is missing '{key}'")
    _require(isinstance(cam["width"], int) and isinstance(cam["height"], int), "width/height must be integers")
    try:
        camera = CameraIntrinsics(
            float(cam["fx"]), float(cam["fy"]), float(cam["cx"]), float(cam["cy"]), cam["width"], cam["height"]
        )
    except (TypeError, ValueError) as exc:
        raise SchemaViolation(f"bad camera block: {exc}") from exc
    raw_frames = doc.get("frames")
    _require(isinstance(raw_frames, list), "missing 'frames' list")
    frames = []
    for i, fr in enumerate(raw_frames):
        _require(isinstance(fr, dict), f"frame {i} is not an object")
        _require(isinstance(fr.get("file"), str), f"frame {i}: 'file' must be a string")
        stamp = fr.get("stamp")
        _require(isinstance(stamp, (int, float)) and not isinstance(stamp, bool), f"frame {i}: bad stamp")
        q = _vector(fr.get("q"), 4, f"frame {i} q")
        _require(abs(np.linalg.norm(q) - 1.0) <= 1e-6, f"frame {i}: q is not a unit quaternion")
        frames.append(Frame(fr["file"], float(stamp), _vector(fr.get("t"), 3, f"frame {i} t"), q))
    for a, b in zip(frames, frames[1:]):
        _require(b.stamp > a.stamp, f"stamps must be strictly increasing ({a.stamp} then {b.stamp})")
    return camera, frames


def load_dataset(path) -> Dataset:
    path = Path(path)
    manifest = path / MANIFEST_NAME
    if not manifest.is_file():
        raise MissingFile(f"no manifest at {manifest}")
    with open(manifest) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"manifest is not valid JSON: {exc}") from exc
    camera, frames = parse_manifest(doc)
    images = []
    for fr in frames:
        fp = path / fr.file
        if not os.path.isfile(fp):
            raise MissingFile(f"frame file {fp} does not exist")
        img = read_ppm(fp)
        _require(img.shape == (camera.height, camera.width, 3), f"{fp}: size does not match camera")
        images.append(img)
    return Dataset(camera, frames, images)
