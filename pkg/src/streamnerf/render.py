"""Stratified volume rendering, photometric loss and its exact gradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraIntrinsics, PoseSE3, Ray, image_rays
from .model import NerfModel, sigmoid, softplus


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass(frozen=True)
class RenderConfig:
    near: float = 0.1
    far: float = 3.0
    samples_per_ray: int = 64
    background_color: tuple = (1.0, 1.0, 1.0)
    stratified: bool = True

    def __post_init__(self):
        if not 0 < self.near < self.far:
            raise ValueError("need 0 < near < far")
        if self.samples_per_ray < 1:
            raise ValueError("samples_per_ray must be >= 1")

    def replace(self, **kw) -> "RenderConfig":
        d = dict(self.__dict__)
        d.update(kw)
        return RenderConfig(**d)


def sample_depths(n_rays: int, cfg: RenderConfig, rng=None) -> tuple[np.ndarray, np.ndarray]:
    """Depths (R, S) and interval lengths (R, S).

    Bins split [near, far] evenly; stratified picks a uniform point in each
    bin, otherwise the bin midpoint. The last interval is one bin width.
    """
    S = cfg.samples_per_ray
    width = (cfg.far - cfg.near) / S
    lower = cfg.near + width * np.arange(S)
    if cfg.stratified:
        if rng is None:
            raise ValueError("stratified sampling needs an rng")
        t = lower + width * rng.random((n_rays, S))
    else:
        t = np.broadcast_to(lower + 0.5 * width, (n_rays, S)).copy()
    deltas = np.empty_like(t)
    deltas[:, :-1] = np.diff(t, axis=1)
    deltas[:, -1] = width
    return t, deltas


@dataclass
class Composite:
    rgb: np.ndarray  # (R, 3)
    opacity: np.ndarray  # (R,)
    weights: np.ndarray  # (R, S)
    transmittance: np.ndarray  # (R, S+1); last column is what leaks through


def composite(sigma: np.ndarray, color: np.ndarray, deltas: np.ndarray, background) -> Composite:
    tau = sigma * deltas
    optical = np.concatenate([np.zeros((tau.shape[0], 1)), np.cumsum(tau, axis=1)], axis=1)
    trans = np.exp(-optical)
    alpha = -np.expm1(-tau)
    w = trans[:, :-1] * alpha
    opacity = w.sum(axis=1)
    bg = np.asarray(background, dtype=np.float64)
    rgb = np.einsum("rs,rsc->rc", w, color) + (1.0 - opacity)[:, None] * bg
    return Composite(rgb, opacity, w, trans)


def _points(origins, dirs, t):
    return origins[:, None, :] + t[..., None] * dirs[:, None, :]


def render_rays_field(field, origins, dirs, cfg: RenderConfig, rng=None, t=None, deltas=None) -> Composite:
    """Render with any object exposing ``inside(x)`` and ``query(x, d)``."""
    R = origins.shape[0]
    if t is None:
        t, deltas = sample_depths(R, cfg, rng)
    S = t.shape[1]
    pts = _points(origins, dirs, t).reshape(-1, 3)
    d_rep = np.repeat(dirs, S, axis=0)
    mask = field.inside(pts)
    sigma = np.zeros(R * S)
    color = np.zeros((R * S, 3))
    if mask.any():
        s_in, c_in = field.query(pts[mask], d_rep[mask])
        sigma[mask] = s_in
        color[mask] = c_in
    return composite(sigma.reshape(R, S), color.reshape(R, S, 3), deltas, cfg.background_color)


def render_rays(model: NerfModel, origins, dirs, cfg: RenderConfig, rng=None, chunk: int = 4096):
    """rgb (R, 3) and opacity (R,) for a batch of rays."""
    rgb = np.empty((origins.shape[0], 3))
    opacity = np.empty(origins.shape[0])
    for s in range(0, origins.shape[0], chunk):
        out = render_rays_field(model, origins[s:s + chunk], dirs[s:s + chunk], cfg, rng)
        rgb[s:s + chunk] = out.rgb
        opacity[s:s + chunk] = out.opacity
    return rgb, opacity


def render_ray(model: NerfModel, ray: Ray, cfg: RenderConfig, rng=None) -> tuple[np.ndarray, float]:
    rgb, opacity = render_rays(model, ray.origin[None], ray.direction[None], cfg, rng)
    return rgb[0], float(opacity[0])


def photometric_loss(pred, gt) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.size == 0:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    return float(np.mean((pred - gt) ** 2))


def loss_and_gradients(model: NerfModel, origins, dirs, gt_rgb, cfg: RenderConfig, rng=None, t=None, deltas=None):
    """Mean squared photometric loss and its gradient w.r.t. ``model.params``.

    Sample depths are drawn once and held fixed; pass ``t``/``deltas`` to
    reuse a specific draw.
    """
    R = origins.shape[0]
    if R == 0:
        raise ValueError("empty batch")
    if t is None:
        t, deltas = sample_depths(R, cfg, rng)
    S = t.shape[1]
    pts = _points(origins, dirs, t).reshape(-1, 3)
    mask = model.inside(pts)
    sigma = np.zeros(R * S)
    color = np.zeros((R * S, 3))
    cache = None
    if mask.any():
        d_rep = np.repeat(dirs, S, axis=0)
        raw, cache = model.forward_raw(pts[mask], d_rep[mask], want_cache=True)
        sigma[mask] = softplus(raw[:, 0])
        color[mask] = sigmoid(raw[:, 1:])
    sigma = sigma.reshape(R, S)
    color = color.reshape(R, S, 3)
    comp = composite(sigma, color, deltas, cfg.background_color)
    gt_rgb = np.asarray(gt_rgb, dtype=np.float64)
    loss = photometric_loss(comp.rgb, gt_rgb)
    if cache is None:
        return loss, np.zeros(model.n_params)

    # rgb = bg + sum_i w_i (c_i - bg)
    g = 2.0 * (comp.rgb - gt_rgb) / (3 * R)  # (R, 3)
    bg = np.asarray(cfg.background_color, dtype=np.float64)
    w = comp.weights
    e = np.einsum("rc,rsc->rs", g, color - bg)
    # dL/dtau_k = e_k T_{k+1} - sum_{i>k} e_i w_i
    ew = e * w
    later = np.cumsum(ew[:, ::-1], axis=1)[:, ::-1] - ew
    d_tau = e * comp.transmittance[:, 1:] - later
    d_sigma = (d_tau * deltas).reshape(-1)[mask]
    d_color = (w[..., None] * g[:, None, :]).reshape(-1, 3)[mask]

    c_in = color.reshape(-1, 3)[mask]
    grad_raw = np.empty((c_in.shape[0], 4))
    grad_raw[:, 0] = d_sigma * sigmoid(cache.raw[:, 0])
    grad_raw[:, 1:] = d_color * c_in * (1.0 - c_in)
    grad = model.backward(cache, grad_raw)
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradient("gradient contains NaN or Inf")
    return loss, grad


def loss_gradients(model, origins, dirs, gt_rgb, cfg, rng=None, **kw) -> np.ndarray:
    return loss_and_gradients(model, origins, dirs, gt_rgb, cfg, rng, **kw)[1]


def render_image(model: NerfModel, intr: CameraIntrinsics, pose: PoseSE3, cfg: RenderConfig) -> np.ndarray:
    """Deterministic (midpoint-sampled) 8-bit render, shape (H, W, 3)."""
    origins, dirs = image_rays(intr, pose)
    rgb, _ = render_rays(model, origins, dirs, cfg.replace(stratified=False))
    img = np.round(255.0 * np.clip(rgb, 0.0, 1.0)).astype(np.uint8)
    return img.reshape(intr.height, intr.width, 3)
