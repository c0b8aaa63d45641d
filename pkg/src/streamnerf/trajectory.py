"""Camera trajectories: a helix around a target and a serpentine raster."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import DegenerateLookAt, PoseSE3, look_at  # noqa: F401  (re-exported)


@dataclass(frozen=True)
class HelicalSpec:
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 1.2
    z_start: float = -0.2
    z_end: float = 0.6
    turns: float = 1.0
    count: int = 300
    target: tuple = (0.0, 0.0, 0.0)
    period: float = 0.05  # seconds between consecutive frames
    start_stamp: float = 0.0

    def __post_init__(self):
        if self.count < 2:
            raise ValueError("count must be >= 2")
        if not self.radius > 0:
            raise ValueError("radius must be positive")


@dataclass(frozen=True)
class RasterSpec:
    """Grid of positions ``origin + c*row_dir + r*col_dir + standoff*n``.

    ``n`` is the unit normal row_dir x col_dir. With ``target=None`` every
    camera looks straight back along ``-n`` at the plane.
    """

    origin: tuple = (-0.6, -1.3, -0.5)
    row_dir: tuple = (0.3, 0.0, 0.0)
    col_dir: tuple = (0.0, 0.0, 0.25)
    rows: int = 5
    cols: int = 5
    standoff: float = 0.0
    target: tuple | None = (0.0, 0.0, 0.0)
    period: float = 0.05
    start_stamp: float = 0.0

    def __post_init__(self):
        if self.rows * self.cols < 2:
            raise ValueError("raster needs at least 2 positions")

    @property
    def count(self) -> int:
        return self.rows * self.cols


def helix_angles(spec: HelicalSpec) -> np.ndarray:
    return 2.0 * np.pi * spec.turns * np.arange(spec.count) / (spec.count - 1)


def trajectory_poses(spec: HelicalSpec | RasterSpec) -> list[tuple[float, PoseSE3]]:
    """(stamp, pose) pairs, stamps spaced by ``spec.period``."""
    if isinstance(spec, HelicalSpec):
        theta = helix_angles(spec)
        z = np.linspace(spec.z_start, spec.z_end, spec.count)
        c = np.asarray(spec.center, dtype=np.float64)
        positions = np.stack(
            [c[0] + spec.radius * np.cos(theta), c[1] + spec.radius * np.sin(theta), c[2] + z], axis=1
        )
        targets = [spec.target] * spec.count
    elif isinstance(spec, RasterSpec):
        row = np.asarray(spec.row_dir, dtype=np.float64)
        col = np.asarray(spec.col_dir, dtype=np.float64)
        normal = np.cross(row, col)
        normal /= np.linalg.norm(normal)
        base = np.asarray(spec.origin, dtype=np.float64) + spec.standoff * normal
        positions = []
        for r in range(spec.rows):
            order = range(spec.cols) if r % 2 == 0 else reversed(range(spec.cols))
            positions.extend(base + c * row + r * col for c in order)
        positions = np.array(positions)
        if spec.target is None:
            targets = [p - normal for p in positions]
        else:
            targets = [spec.target] * len(positions)
    else:
        raise TypeError(f"unknown trajectory spec {type(spec).__name__}")
    return [
        (spec.start_stamp + k * spec.period, look_at(p, t)) for k, (p, t) in enumerate(zip(positions, targets))
    ]
