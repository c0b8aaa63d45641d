"""Image quality metrics."""

import math

import numpy as np


class DimensionMismatch(ValueError):
    pass


def _as_unit(img) -> np.ndarray:
    a = np.asarray(img)
    if a.dtype == np.uint8:
        return a.astype(np.float64) / 255.0
    return a.astype(np.float64)


def mse(a, b) -> float:
    a, b = _as_unit(a), _as_unit(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def psnr_from_mse(value: float) -> float:
    return math.inf if value == 0 else -10.0 * math.log10(value)


def psnr(a, b) -> float:
    """PSNR in dB for images in [0, 1] (uint8 inputs are scaled by 1/255).

    Identical images give ``math.inf``.
    """
    return psnr_from_mse(mse(a, b))


def constant_color_baseline(images) -> float:
    """Mean PSNR of each image against its own best constant (mean-color) image."""
    values = []
    for im in images:
        a = _as_unit(im)
        values.append(psnr_from_mse(float(np.mean((a - a.reshape(-1, 3).mean(axis=0)) ** 2))))
    return float(np.mean(values))
