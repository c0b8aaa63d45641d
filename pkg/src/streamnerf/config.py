"""Trainer configuration, loaded from a sectioned JSON document.

Example::

    {"listen": "0.0.0.0:7011",
     "buffer": {"capacity": 300, "target_rate_hz": 2.0},
     "pairing": {"tolerance_s": 0.01},
     "model": {"levels": 8, "table_size": 16384, "hidden_width": 64, ...},
     "render": {"near": 0.1, "far": 3.0, "samples_per_ray": 64, ...},
     "train": {"rays_per_step": 1024, "max_steps": 5000, ...},
     "eval": {"interval": 100, "holdout_dataset": "data/helix", "holdout_every": 10}}

Unknown keys are rejected so typos do not silently fall back to defaults.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .hashgrid import HashGridConfig
from .model import ModelConfig
from .render import RenderConfig


@dataclass
class TrainerConfig:
    listen: str = "0.0.0.0:7011"
    out_dir: str = "run"
    seed: int = 0

    buffer_capacity: int = 300
    buffer_rate_hz: float = 2.0
    pair_tolerance_s: float = 0.010

    model: ModelConfig = field(default_factory=ModelConfig)
    render: RenderConfig = field(default_factory=RenderConfig)

    rays_per_step: int = 1024
    lr_start: float = 1e-2
    lr_end: float = 1e-3
    max_steps: int = 5000
    max_wall_s: float | None = None
    convergence_window: int = 200
    convergence_tol: float = 0.01

    eval_interval: int = 100
    eval_views: int = 6
    holdout_dataset: str | None = None
    holdout_every: int = 10
    write_snapshots: bool = True

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.convergence_window < 2:
            raise ValueError("convergence_window must be >= 2")
        if self.rays_per_step < 1 or self.eval_interval < 1:
            raise ValueError("rays_per_step and eval_interval must be >= 1")

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainerConfig":
        doc = dict(doc)
        kw = {}
        for key in ("listen", "out_dir", "seed"):
            if key in doc:
                kw[key] = doc.pop(key)
        sections = {
            "buffer": {"capacity": "buffer_capacity", "target_rate_hz": "buffer_rate_hz"},
            "pairing": {"tolerance_s": "pair_tolerance_s"},
            "train": {
                "rays_per_step": "rays_per_step",
                "lr_start": "lr_start",
                "lr_end": "lr_end",
                "max_steps": "max_steps",
                "max_wall_s": "max_wall_s",
                "convergence_window": "convergence_window",
                "convergence_tol": "convergence_tol",
            },
            "eval": {
                "interval": "eval_interval",
                "views": "eval_views",
                "holdout_dataset": "holdout_dataset",
                "holdout_every": "holdout_every",
                "write_snapshots": "write_snapshots",
            },
        }
        for section, mapping in sections.items():
            body = dict(doc.pop(section, {}))
            for src, dst in mapping.items():
                if src in body:
                    kw[dst] = body.pop(src)
            _reject_unknown(section, body)
        if "model" in doc:
            kw["model"] = _model_from_dict(doc.pop("model"))
        if "render" in doc:
            r = dict(doc.pop("render"))
            if "background_color" in r:
                r["background_color"] = tuple(r["background_color"])
            _reject_unknown("render", {k: v for k, v in r.items() if k not in _field_names(RenderConfig)})
            kw["render"] = RenderConfig(**r)
        _reject_unknown("top level", doc)
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "TrainerConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> dict:
        m, g = self.model, self.model.grid
        return {
            "listen": self.listen,
            "out_dir": self.out_dir,
            "seed": self.seed,
            "buffer": {"capacity": self.buffer_capacity, "target_rate_hz": self.buffer_rate_hz},
            "pairing": {"tolerance_s": self.pair_tolerance_s},
            "model": {
                "levels": g.levels,
                "table_size": g.table_size,
                "features_per_level": g.features_per_level,
                "base_resolution": g.base_resolution,
                "growth_factor": g.growth_factor,
                "hidden_width": m.hidden_width,
                "use_view_dirs": m.use_view_dirs,
                "aabb_min": list(m.aabb_min),
                "aabb_max": list(m.aabb_max),
                "table_init_range": m.table_init_range,
                "compiled_encoding": m.compiled_encoding,
            },
            "render": {
                "near": self.render.near,
                "far": self.render.far,
                "samples_per_ray": self.render.samples_per_ray,
                "background_color": list(self.render.background_color),
                "stratified": self.render.stratified,
            },
            "train": {
                "rays_per_step": self.rays_per_step,
                "lr_start": self.lr_start,
                "lr_end": self.lr_end,
                "max_steps": self.max_steps,
                "max_wall_s": self.max_wall_s,
                "convergence_window": self.convergence_window,
                "convergence_tol": self.convergence_tol,
            },
            "eval": {
                "interval": self.eval_interval,
                "views": self.eval_views,
                "holdout_dataset": self.holdout_dataset,
                "holdout_every": self.holdout_every,
                "write_snapshots": self.write_snapshots,
            },
        }

    def replace(self, **kw) -> "TrainerConfig":
        return dataclasses.replace(self, **kw)


_GRID_KEYS = ("levels", "table_size", "features_per_level", "base_resolution", "growth_factor")


def _model_from_dict(d: dict) -> ModelConfig:
    d = dict(d)
    grid = HashGridConfig(**{k: d.pop(k) for k in _GRID_KEYS if k in d})
    for key in ("aabb_min", "aabb_max"):
        if key in d:
            d[key] = tuple(d[key])
    _reject_unknown("model", {k: v for k, v in d.items() if k not in _field_names(ModelConfig)})
    return ModelConfig(grid=grid, **d)


def _field_names(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def _reject_unknown(where: str, leftover: dict) -> None:
    if leftover:
        raise ValueError(f"unknown config keys in {where}: {sorted(leftover)}")
