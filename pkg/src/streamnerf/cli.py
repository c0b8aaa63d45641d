"""Command line entry points: synth, publish, train-online, train-offline."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys

from .config import TrainerConfig
from .publisher import ConnectionLost, default_camera, parse_hostport, replay, synthesize_to_disk
from .scene import AnalyticScene, default_scene
from .trajectory import HelicalSpec, RasterSpec


def _raster_shape(n: int) -> tuple[int, int]:
    rows = max(d for d in range(1, math.isqrt(n) + 1) if n % d == 0)
    return rows, n // rows


def cmd_synth(args) -> int:
    scene = AnalyticScene.load(args.scene) if args.scene else default_scene()
    period = 1.0 / args.stamp_rate
    if args.trajectory == "helical":
        spec = HelicalSpec(count=args.frames, period=period)
    else:
        rows, cols = _raster_shape(args.frames)
        spec = RasterSpec(rows=rows, cols=cols, period=period)
    camera = default_camera(args.width, args.height, args.focal)
    ds = synthesize_to_disk(scene, spec, camera, args.out)
    print(f"wrote {len(ds)} frames to {args.out}")
    return 0


def cmd_publish(args) -> int:
    try:
        summary = replay(
            args.dataset,
            args.rate,
            parse_hostport(args.dest),
            jitter_ms=args.jitter_ms,
            stall_after=args.stall_after,
            stall_s=args.stall_s,
            holdout_every=args.holdout_every,
        )
    except ConnectionLost as exc:
        print(f"connection lost: {exc}", file=sys.stderr)
        return 1
    print(f"sent {summary.frames_sent} frames ({summary.bytes_sent} bytes) in {summary.wall_s:.2f} s")
    return 0


def _trainer_config(args) -> TrainerConfig:
    cfg = TrainerConfig.load(args.config) if args.config else TrainerConfig()
    overrides = {"out_dir": args.out}
    if getattr(args, "listen", None):
        overrides["listen"] = args.listen
    for name in ("holdout_dataset", "max_steps", "max_wall_s", "seed"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    return cfg.replace(**overrides)


def _report(report) -> int:
    print(json.dumps({
        "status": report.status,
        "steps": report.steps,
        "buffered_images": report.final_valid_count,
        "final_psnr_mean": report.final_psnr,
        "baseline_psnr": report.baseline_psnr,
        "out_dir": str(report.out_dir),
    }, indent=2))
    return 0


def cmd_train_online(args) -> int:
    from .trainer import run_online_training

    return _report(run_online_training(_trainer_config(args)))


def cmd_train_offline(args) -> int:
    from .trainer import run_offline_training

    return _report(run_offline_training(args.dataset, _trainer_config(args)))


def _add_training_options(p):
    p.add_argument("--config", help="trainer JSON config (defaults used when omitted)")
    p.add_argument("--out", required=True, help="output directory for metrics, snapshots and checkpoint")
    p.add_argument("--holdout-dataset", help="dataset whose every n-th frame is used for evaluation")
    p.add_argument("--max-steps", type=int)
    p.add_argument("--max-wall-s", type=float)
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="streamnerf", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a posed dataset of an analytic scene")
    p.add_argument("--scene", help="scene JSON (built-in sphere-and-pipes scene when omitted)")
    p.add_argument("--trajectory", choices=("helical", "raster"), default="helical")
    p.add_argument("--frames", type=int, default=300)
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--focal", type=float, default=64.0)
    p.add_argument("--stamp-rate", type=float, default=20.0, help="frame rate used for the stamps")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("publish", help="stream a dataset over TCP")
    p.add_argument("--dataset", required=True)
    p.add_argument("--rate", type=float, default=20.0, help="frames per second")
    p.add_argument("--dest", required=True, help="HOST:PORT")
    p.add_argument("--jitter-ms", type=float, default=0.0, help="image send offset relative to its pose")
    p.add_argument("--holdout-every", type=int, default=10, help="withhold every n-th frame (0 sends all)")
    p.add_argument("--stall-after", type=int, help="pause after this frame index")
    p.add_argument("--stall-s", type=float, default=0.0)
    p.set_defaults(func=cmd_publish)

    p = sub.add_parser("train-online", help="train while receiving a stream")
    p.add_argument("--listen", default=None, help="HOST:PORT (default 0.0.0.0:7011)")
    _add_training_options(p)
    p.set_defaults(func=cmd_train_online)

    p = sub.add_parser("train-offline", help="train on a dataset loaded up front")
    p.add_argument("--dataset", required=True)
    _add_training_options(p)
    p.set_defaults(func=cmd_train_offline)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
