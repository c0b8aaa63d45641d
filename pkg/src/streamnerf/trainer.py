"""Online and offline training drivers.

Online mode runs two activities: an ingest thread that owns the socket,
the pairer and all buffer writes, and the training loop (caller's thread)
that samples the buffer, steps the optimizer and periodically evaluates a
parameter snapshot on held-out views.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import socket
import threading
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .buffer import TrainBuffer
from .camera import CameraIntrinsics, PoseSE3, batch_rays
from .config import TrainerConfig
from .dataset import Dataset, load_dataset, write_ppm
from .metrics import constant_color_baseline, psnr
from .model import NerfModel
from .optim import AdamState, adam_step, exponential_lr
from .publisher import frame_messages, parse_hostport
from .render import RenderConfig, loss_and_gradients, render_image
from .wire import (
    CameraInfoMessage,
    FrameDecoder,
    ImageMessage,
    Pairer,
    PosedImage,
    PoseMessage,
    WireError,
)

log = logging.getLogger(__name__)


class NoCameraInfo(RuntimeError):
    """The stream carried poses/images but never the camera intrinsics."""


class StreamClosedEarly(UserWarning):
    """The publisher disconnected before the training buffer filled up."""


def check_convergence(losses, window: int, tol: float) -> bool:
    """True when the latest window improved on the one before by less than ``tol`` (relative)."""
    if len(losses) < 2 * window:
        return False
    prev = float(np.mean(losses[-2 * window:-window]))
    last = float(np.mean(losses[-window:]))
    if prev <= 0.0:
        return True
    return (prev - last) / prev < tol


@dataclass
class HoldoutViews:
    camera: CameraIntrinsics
    poses: list[PoseSE3]
    images: list[np.ndarray]

    @classmethod
    def from_dataset(cls, ds: Dataset, max_views: int | None = None) -> "HoldoutViews":
        idx = np.arange(len(ds))
        if max_views is not None and len(idx) > max_views:
            idx = np.round(np.linspace(0, len(ds) - 1, max_views)).astype(int)
        return cls(ds.camera, [ds.frames[i].pose() for i in idx], [ds.images[i] for i in idx])

    def __len__(self):
        return len(self.poses)


def evaluate_holdout(model: NerfModel, views: HoldoutViews, render_cfg: RenderConfig, return_renders=False):
    """PSNR per held-out view from deterministic (midpoint) renders."""
    renders = [render_image(model, views.camera, pose, render_cfg) for pose in views.poses]
    scores = [psnr(r, gt) for r, gt in zip(renders, views.images)]
    return (scores, renders) if return_renders else scores


@dataclass
class MetricsRecord:
    wall_s: float
    step: int
    n_images: int
    loss: float
    psnr: list[float]

    @property
    def psnr_mean(self) -> float:
        return float(np.mean(self.psnr)) if self.psnr else math.nan


@dataclass
class TrainingReport:
    status: str
    steps: int
    records: list[MetricsRecord] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    final_valid_count: int = 0
    baseline_psnr: float | None = None
    frozen_at_step: int | None = None
    stats: dict = field(default_factory=dict)
    out_dir: Path | None = None

    @property
    def final_psnr(self) -> float:
        return self.records[-1].psnr_mean if self.records else math.nan


class MetricsWriter:
    def __init__(self, out_dir: Path, n_views: int, record_wall_clock: bool):
        self.out_dir = out_dir
        self.record_wall_clock = record_wall_clock
        out_dir.mkdir(parents=True, exist_ok=True)
        self._f = open(out_dir / "metrics.csv", "w", newline="")
        self._csv = csv.writer(self._f, lineterminator="\n")
        self._csv.writerow(
            ["wall_s", "step", "n_images", "loss", "psnr_mean"] + [f"psnr_view{i}" for i in range(n_views)]
        )
        self._timing = open(out_dir / "timings.csv", "w", newline="")
        self._timing.write("step,wall_s\n")

    def write(self, rec: MetricsRecord) -> None:
        wall = rec.wall_s if self.record_wall_clock else 0.0
        self._csv.writerow(
            [f"{wall:.3f}", rec.step, rec.n_images, _fmt(rec.loss), _fmt(rec.psnr_mean)] + [_fmt(p) for p in rec.psnr]
        )
        self._f.flush()
        self._timing.write(f"{rec.step},{rec.wall_s:.3f}\n")
        self._timing.flush()

    def close(self):
        self._f.close()
        self._timing.close()


def _fmt(x: float) -> str:
    return "inf" if x == math.inf else ("nan" if x != x else f"{x:.9g}")


class TrainingLoop:
    """Model, optimizer and evaluation state shared by both modes."""

    def __init__(self, cfg: TrainerConfig, camera: CameraIntrinsics, holdout: HoldoutViews | None,
                 out_dir: Path, record_wall_clock: bool = True):
        self.cfg = cfg
        self.camera = camera
        self.holdout = holdout
        self.out_dir = out_dir
        self.model = NerfModel(cfg.model, seed=cfg.seed)
        self.adam = AdamState.zeros(self.model.n_params, lr=cfg.lr_start)
        self.rng = np.random.default_rng(cfg.seed)
        self.step = 0
        self.losses: list[float] = []
        self.records: list[MetricsRecord] = []
        self._last_record_step = 0
        self.writer = MetricsWriter(out_dir, len(holdout) if holdout else 0, record_wall_clock)
        self.t0 = time.perf_counter()

    def train_step(self, buffer: TrainBuffer) -> float:
        batch = buffer.sample_pixel_batch(self.rng, self.cfg.rays_per_step)
        origins, dirs = batch_rays(self.camera, batch.rotations, batch.translations, batch.u, batch.v)
        loss, grad = loss_and_gradients(self.model, origins, dirs, batch.rgb, self.cfg.render, self.rng)
        lr = exponential_lr(self.step, self.cfg.max_steps, self.cfg.lr_start, self.cfg.lr_end)
        adam_step(self.model.params, grad, self.adam, lr)
        self.step += 1
        self.losses.append(loss)
        return loss

    def evaluate(self, n_images: int) -> MetricsRecord:
        snapshot = self.model.copy()
        window = self.losses[self._last_record_step:self.step]
        loss = float(np.mean(window)) if window else math.nan
        scores = []
        if self.holdout:
            scores, renders = evaluate_holdout(snapshot, self.holdout, self.cfg.render, return_renders=True)
            if self.cfg.write_snapshots:
                write_ppm(self.out_dir / f"snap_{self.step:06d}.ppm", renders[0])
        rec = MetricsRecord(time.perf_counter() - self.t0, self.step, n_images, loss, scores)
        self.records.append(rec)
        self._last_record_step = self.step
        self.writer.write(rec)
        log.info("step %d images %d loss %.5f psnr %.2f", rec.step, n_images, loss, rec.psnr_mean)
        return rec

    def finish(self, report: TrainingReport) -> TrainingReport:
        self.writer.close()
        self.model.save(self.out_dir / "model.ckpt")
        with open(self.out_dir / "run_config.json", "w") as f:
            json.dump(self.cfg.to_dict(), f, indent=2)
        report.records = self.records
        report.losses = self.losses
        report.steps = self.step
        if self.holdout:
            report.baseline_psnr = constant_color_baseline(self.holdout.images)
        report.out_dir = self.out_dir
        summary = {
            "status": report.status,
            "steps": report.steps,
            "final_valid_count": report.final_valid_count,
            "frozen_at_step": report.frozen_at_step,
            "final_psnr_mean": _json_float(report.final_psnr),
            "baseline_psnr": _json_float(report.baseline_psnr),
            "stats": report.stats,
        }
        with open(self.out_dir / "summary.json", "w") as f:
            json.dump(summary, f, indent=2)
        return report


def _json_float(x):
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return None
    return x


def _run_loop(loop: TrainingLoop, buffer: TrainBuffer, stream_done, report: TrainingReport) -> None:
    """Train until convergence (after the buffer freezes), max steps or the wall-clock cap."""
    cfg = loop.cfg
    frozen_at = None
    loop.evaluate(buffer.valid_count)
    while loop.step < cfg.max_steps:
        n, full = buffer.snapshot()
        if frozen_at is None and (full or stream_done()):
            frozen_at = loop.step
            report.frozen_at_step = frozen_at
        loop.train_step(buffer)
        if loop.step % cfg.eval_interval == 0:
            loop.evaluate(buffer.valid_count)
        if frozen_at is not None and check_convergence(
            loop.losses[frozen_at:], cfg.convergence_window, cfg.convergence_tol
        ):
            report.status = "converged"
            break
        if cfg.max_wall_s is not None and time.perf_counter() - loop.t0 > cfg.max_wall_s:
            report.status = "max_wall_s"
            break
    else:
        report.status = "max_steps"
    if loop.records[-1].step != loop.step:
        loop.evaluate(buffer.valid_count)
    report.final_valid_count = buffer.valid_count


def load_holdout(cfg: TrainerConfig) -> HoldoutViews | None:
    if not cfg.holdout_dataset:
        return None
    ds = load_dataset(cfg.holdout_dataset)
    held = ds.split(cfg.holdout_every)[1] if cfg.holdout_every > 0 else ds
    return HoldoutViews.from_dataset(held, cfg.eval_views)


def run_offline_training(dataset: Dataset | str | Path, cfg: TrainerConfig) -> TrainingReport:
    """Load every frame up front (no rate gate) and train; deterministic for a fixed seed."""
    ds = dataset if isinstance(dataset, Dataset) else load_dataset(dataset)
    if cfg.holdout_every > 0:
        train_ds, held_ds = ds.split(cfg.holdout_every)
    else:
        train_ds, held_ds = ds, None
    if cfg.holdout_dataset:
        holdout = load_holdout(cfg)
    elif held_ds is not None and len(held_ds):
        holdout = HoldoutViews.from_dataset(held_ds, cfg.eval_views)
    else:
        holdout = None
    if len(train_ds) == 0:
        train_ds = ds
    c = ds.camera
    info = CameraInfoMessage(c.fx, c.fy, c.cx, c.cy, c.width, c.height)
    buffer = TrainBuffer(max(len(train_ds), 1), cfg.buffer_rate_hz, info)
    for k in range(len(train_ds)):
        pose, image = frame_messages(train_ds, k)
        buffer.maybe_insert(PosedImage(image, pose, 0.0), ignore_rate=True)
    out_dir = Path(cfg.out_dir)
    loop = TrainingLoop(cfg, c, holdout, out_dir, record_wall_clock=False)
    report = TrainingReport(status="running", steps=0)
    _run_loop(loop, buffer, lambda: True, report)
    report.stats = {"mode": "offline", "frames": len(train_ds)}
    return loop.finish(report)


class Ingestor(threading.Thread):
    """Owns the listening socket, the pairer and every write to the buffer."""

    def __init__(self, listen: str, capacity: int, rate_hz: float, tolerance: float):
        super().__init__(name="ingest", daemon=True)
        host, port = parse_hostport(listen)
        self._server = socket.create_server((host, port))
        self.address = self._server.getsockname()[:2]
        self.capacity = capacity
        self.rate_hz = rate_hz
        self.pairer = Pairer(tolerance)
        self.camera_info: CameraInfoMessage | None = None
        self.buffer: TrainBuffer | None = None
        self.held_back: list[PosedImage] = []
        self.latencies: list[float] = []
        self.messages = 0
        self.data_messages = 0
        self.error: BaseException | None = None
        self.buffer_ready = threading.Event()
        self.done = threading.Event()
        self._halt = threading.Event()
        self._conn: socket.socket | None = None

    def stop(self):
        self._halt.set()
        for s in (self._server, self._conn):
            if s is not None:
                try:
                    s.close()
                except OSError:
                    pass

    def run(self):
        try:
            self._server.settimeout(0.2)
            while not self._halt.is_set():
                try:
                    conn, _ = self._server.accept()
                    break
                except socket.timeout:
                    continue
            else:
                return
            self._conn = conn
            conn.settimeout(None)
            self._read_loop(conn)
        except (WireError, OSError, ValueError) as exc:
            if not self._halt.is_set():
                log.error("ingest stopped: %s", exc)
                self.error = exc
        finally:
            self.done.set()
            self.buffer_ready.set()
            try:
                self._server.close()
            except OSError:
                pass

    def _read_loop(self, conn: socket.socket):
        decoder = FrameDecoder()
        while not self._halt.is_set():
            chunk = conn.recv(1 << 16)
            if not chunk:
                return
            t_recv = time.perf_counter()
            for msg in decoder.feed(chunk):
                self.handle(msg)
                self.latencies.append(time.perf_counter() - t_recv)

    def handle(self, msg) -> None:
        self.messages += 1
        if isinstance(msg, CameraInfoMessage):
            if self.camera_info is None:
                self.camera_info = msg
                self.buffer = TrainBuffer(self.capacity, self.rate_hz, msg)
                held, self.held_back = self.held_back, []
                for pi in held:
                    self.buffer.maybe_insert(pi)
            return
        self.data_messages += 1
        if isinstance(msg, PoseMessage):
            pairs = self.pairer.push_pose(msg)
        elif isinstance(msg, ImageMessage):
            pairs = self.pairer.push_image(msg)
        else:
            return
        for pi in pairs:
            if self.buffer is None:
                self.held_back.append(pi)
            else:
                self.buffer.maybe_insert(pi)
                if self.buffer.valid_count >= 1:
                    self.buffer_ready.set()

    def stats(self) -> dict:
        lat = np.array(self.latencies) if self.latencies else np.zeros(1)
        b = self.buffer
        return {
            "mode": "online",
            "messages": self.messages,
            "pairs": self.pairer.pairs_emitted,
            "images_dropped_unpaired": self.pairer.images_dropped,
            "images_pending": self.pairer.images_queued,
            "skipped_rate": b.skipped_rate if b else 0,
            "rejected_full": b.rejected_full if b else 0,
            "ingest_latency_p50_ms": float(np.percentile(lat, 50) * 1e3),
            "ingest_latency_p99_ms": float(np.percentile(lat, 99) * 1e3),
            "ingest_latency_max_ms": float(lat.max() * 1e3),
        }


class OnlineSession:
    """One online run. ``run()`` blocks; ``step`` and ``ingest`` can be watched from other threads."""

    def __init__(self, cfg: TrainerConfig):
        self.cfg = cfg
        self.ingest = Ingestor(cfg.listen, cfg.buffer_capacity, cfg.buffer_rate_hz, cfg.pair_tolerance_s)
        self.holdout = load_holdout(cfg)
        self.loop: TrainingLoop | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self.ingest.address

    @property
    def step(self) -> int:
        return self.loop.step if self.loop else 0

    def run(self) -> TrainingReport:
        cfg = self.cfg
        out_dir = Path(cfg.out_dir)
        self.ingest.start()
        try:
            while True:
                self.ingest.buffer_ready.wait(0.1)
                buf = self.ingest.buffer
                if buf is not None and buf.valid_count >= 1:
                    break
                if self.ingest.done.is_set():
                    return self._closed_without_data(out_dir)
            camera = CameraIntrinsics.from_message(self.ingest.camera_info)
            self.loop = TrainingLoop(cfg, camera, self.holdout, out_dir)
            report = TrainingReport(status="running", steps=0)
            _run_loop(self.loop, buf, self._stream_finished, report)
            if self.ingest.done.is_set() and not buf.is_full:
                report.stats["stream_closed_early"] = True
            report.stats.update(self.ingest.stats())
            return self.loop.finish(report)
        finally:
            self.ingest.stop()
            self.ingest.join(timeout=5.0)

    def _stream_finished(self) -> bool:
        if self.ingest.done.is_set():
            buf = self.ingest.buffer
            if buf is not None and not buf.is_full:
                warnings.warn(
                    f"stream closed with {buf.valid_count}/{buf.capacity} images buffered; "
                    "training continues on what was received",
                    StreamClosedEarly,
                    stacklevel=2,
                )
            return True
        return False

    def _closed_without_data(self, out_dir: Path) -> TrainingReport:
        if self.ingest.error is not None:
            raise self.ingest.error
        if self.ingest.camera_info is None and self.ingest.data_messages > 0:
            raise NoCameraInfo("stream delivered poses/images but no camera info")
        warnings.warn("stream closed before any image was buffered", StreamClosedEarly, stacklevel=2)
        out_dir.mkdir(parents=True, exist_ok=True)
        report = TrainingReport(status="stream_closed_early", steps=0, stats=self.ingest.stats(), out_dir=out_dir)
        with open(out_dir / "summary.json", "w") as f:
            json.dump({"status": report.status, "steps": 0, "stats": report.stats}, f, indent=2)
        return report


def run_online_training(cfg: TrainerConfig) -> TrainingReport:
    return OnlineSession(cfg).run()
