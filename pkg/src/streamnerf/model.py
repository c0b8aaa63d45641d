"""Hash-grid radiance field: encoding + 2-hidden-layer ReLU MLP.

All learnable values live in one flat float64 vector (``model.params``);
the hash tables and layer weights are views into it, in declaration
order: tables, W1, b1, W2, b2, W3, b3. Gradients use the same layout.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import hashgrid
from .hashgrid import HashGridConfig

CHECKPOINT_MAGIC = b"NRFB"
CHECKPOINT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sIQ")


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    grid: HashGridConfig = field(default_factory=HashGridConfig)
    hidden_width: int = 64
    use_view_dirs: bool = True
    aabb_min: tuple = (-1.0, -1.0, -1.0)
    aabb_max: tuple = (1.0, 1.0, 1.0)
    table_init_range: float = 1e-4
    compiled_encoding: bool = True  # numba kernels; False uses the pure-numpy path

    def __post_init__(self):
        if not np.all(np.asarray(self.aabb_min) < np.asarray(self.aabb_max)):
            raise ValueError("aabb_min must be < aabb_max componentwise")

    @property
    def input_dim(self) -> int:
        return self.grid.output_dim + (3 if self.use_view_dirs else 0)

    def param_shapes(self) -> list[tuple[str, tuple]]:
        g, h = self.grid, self.hidden_width
        return [
            ("tables", (g.levels, g.table_size, g.features_per_level)),
            ("w1", (self.input_dim, h)),
            ("b1", (h,)),
            ("w2", (h, h)),
            ("b2", (h,)),
            ("w3", (h, 4)),
            ("b3", (4,)),
        ]


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    # Split by sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class FieldCache:
    enc: hashgrid.EncodingCache
    h0: np.ndarray
    z1: np.ndarray
    a1: np.ndarray
    z2: np.ndarray
    a2: np.ndarray
    raw: np.ndarray


class NerfModel:
    def __init__(self, cfg: ModelConfig | None = None, seed: int = 0, params: np.ndarray | None = None):
        self.cfg = cfg or ModelConfig()
        self._layout = []
        offset = 0
        for name, shape in self.cfg.param_shapes():
            size = int(np.prod(shape))
            self._layout.append((name, shape, offset, offset + size))
            offset += size
        self.n_params = offset
        if params is None:
            self.params = self._init_params(np.random.default_rng(seed))
        else:
            params = np.asarray(params, dtype=np.float64)
            if params.shape != (self.n_params,):
                raise ValueError(f"expected {self.n_params} parameters, got {params.shape}")
            self.params = params.copy()
        self.aabb_min = np.asarray(self.cfg.aabb_min, dtype=np.float64)
        self.aabb_max = np.asarray(self.cfg.aabb_max, dtype=np.float64)
        if self.cfg.compiled_encoding:
            self._encode, self._encode_backward = hashgrid.encode_fast, hashgrid.encode_backward_fast
        else:
            self._encode, self._encode_backward = hashgrid.encode, hashgrid.encode_backward

    def _init_params(self, rng) -> np.ndarray:
        p = np.empty(self.n_params)
        for name, shape, a, b in self._layout:
            if name == "tables":
                r = self.cfg.table_init_range
                p[a:b] = rng.uniform(-r, r, size=b - a)
            elif name.startswith("w"):
                bound = np.sqrt(6.0 / shape[0])  # He-uniform for ReLU inputs
                p[a:b] = rng.uniform(-bound, bound, size=b - a)
            else:
                p[a:b] = 0.0
        return p

    def views(self, vec: np.ndarray | None = None) -> dict[str, np.ndarray]:
        vec = self.params if vec is None else vec
        return {name: vec[a:b].reshape(shape) for name, shape, a, b in self._layout}

    def param_slice(self, name: str) -> slice:
        for n, _, a, b in self._layout:
            if n == name:
                return slice(a, b)
        raise KeyError(name)

    def copy(self) -> "NerfModel":
        return NerfModel(self.cfg, params=self.params)

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.aabb_min) / (self.aabb_max - self.aabb_min)

    def inside(self, x: np.ndarray) -> np.ndarray:
        return np.all((x >= self.aabb_min) & (x <= self.aabb_max), axis=-1)

    def encode_position(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return self._encode(self.cfg.grid, self.views()["tables"], self.normalize(x))

    def forward_raw(self, x: np.ndarray, d: np.ndarray, want_cache: bool = False):
        """Raw MLP outputs (n, 4): density logit, then 3 color logits."""
        v = self.views()
        xn = np.clip(self.normalize(x), 0.0, 1.0)
        if want_cache:
            feats, enc_cache = self._encode(self.cfg.grid, v["tables"], xn, want_cache=True)
        else:
            feats = self._encode(self.cfg.grid, v["tables"], xn)
        h0 = np.concatenate([feats, d], axis=1) if self.cfg.use_view_dirs else feats
        z1 = h0 @ v["w1"] + v["b1"]
        a1 = np.maximum(z1, 0.0)
        z2 = a1 @ v["w2"] + v["b2"]
        a2 = np.maximum(z2, 0.0)
        raw = a2 @ v["w3"] + v["b3"]
        if want_cache:
            return raw, FieldCache(enc_cache, h0, z1, a1, z2, a2, raw)
        return raw

    def query(self, x: np.ndarray, d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Density >= 0 and color in (0, 1) for points x (n, 3), unit dirs d (n, 3)."""
        raw = self.forward_raw(np.atleast_2d(x), np.atleast_2d(d))
        return softplus(raw[:, 0]), sigmoid(raw[:, 1:])

    def backward(self, cache: FieldCache, grad_raw: np.ndarray) -> np.ndarray:
        """Flat parameter gradient given dLoss/d(raw outputs) of shape (n, 4)."""
        v = self.views()
        grad = np.zeros(self.n_params)
        gv = self.views(grad)
        gv["w3"][...] = cache.a2.T @ grad_raw
        gv["b3"][...] = grad_raw.sum(axis=0)
        dz2 = (grad_raw @ v["w3"].T) * (cache.z2 > 0)
        gv["w2"][...] = cache.a1.T @ dz2
        gv["b2"][...] = dz2.sum(axis=0)
        dz1 = (dz2 @ v["w2"].T) * (cache.z1 > 0)
        gv["w1"][...] = cache.h0.T @ dz1
        gv["b1"][...] = dz1.sum(axis=0)
        n_feat = self.cfg.grid.output_dim
        dfeat = dz1 @ v["w1"][:n_feat].T
        gv["tables"][...] = self._encode_backward(self.cfg.grid, cache.enc, dfeat)
        return grad

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(_CKPT_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, self.n_params))
            f.write(self.params.astype("<f8").tobytes())

    @classmethod
    def load(cls, path, cfg: ModelConfig) -> "NerfModel":
        with open(path, "rb") as f:
            blob = f.read()
        if len(blob) < _CKPT_HEADER.size:
            raise CheckpointError("checkpoint shorter than header")
        magic, version, count = _CKPT_HEADER.unpack_from(blob)
        if magic != CHECKPOINT_MAGIC or version != CHECKPOINT_VERSION:
            raise CheckpointError(f"bad checkpoint header {magic!r} v{version}")
        body = blob[_CKPT_HEADER.size:]
        if len(body) != 8 * count:
            raise CheckpointError(f"header says {count} params, file holds {len(body) / 8}")
        return cls(cfg, params=np.frombuffer(body, dtype="<f8"))
