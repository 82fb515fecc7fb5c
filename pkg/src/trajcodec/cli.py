"""Command line interface: init, encode, decode, train, metrics, bdrate, sweep."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import bitstream
from .config import ModelConfig, parse_key_values
from .model import TrajectoryCodecModel, build_model

log = logging.getLogger("trajcodec")

SCHEDULE_KEYS = {"epochs", "lr", "beta1", "beta2", "gamma", "milestones", "steps_per_epoch", "batch_size",
                 "checkpoint_every", "seed"}
LOSS_KEYS = {"lambda_per", "lambda_l1", "lambda_bg"}
OTHER_KEYS = {"backend", "vgg_weights", "matting_threshold", "synthetic_clips", "synthetic_frames"}


def _adapter(args):
    if args.keyframe_codec == "lossless":
        return bitstream.LosslessAdapter()
    return bitstream.make_adapter(bitstream.ExternalCommandAdapter.codec_id, args.kf_encode_cmd, args.kf_decode_cmd)


def _resize_video(video, size):
    from PIL import Image

    from .video_io import Video

    if video.height == size and video.width == size:
        return video
    frames = np.stack([np.asarray(Image.fromarray(f).resize((size, size), Image.LANCZOS)) for f in video.frames])
    return Video(frames, video.fps)


def cmd_init(args):
    cfg = ModelConfig.from_header(parse_key_values(Path(args.config).read_text())) if args.config else ModelConfig()
    build_model(cfg, seed=args.seed).save(args.checkpoint)
    print(f"wrote {args.checkpoint}")


def cmd_encode(args):
    from .pipeline import encode_video
    from .video_io import read_video

    model = TrajectoryCodecModel.load(args.checkpoint)
    video = read_video(args.input)
    if args.resolution_index is not None:
        video = _resize_video(video, model.config.max_resolution >> args.resolution_index)
    stream, stats, _ = encode_video(model, video, qp=args.qp, delta=args.delta, adapter=_adapter(args))
    Path(args.output).write_bytes(stream)
    report = stats.as_dict()
    print(json.dumps({k: v for k, v in report.items() if k != "nonzero_symbols_per_frame"}, indent=2))


def cmd_decode(args):
    from .pipeline import decode_stream
    from .video_io import write_raw_video

    model = TrajectoryCodecModel.load(args.checkpoint)
    video, stats, _ = decode_stream(model, Path(args.input).read_bytes(), adapter=_adapter(args))
    write_raw_video(args.output, video.frames, video.fps)
    report = json.dumps(stats.as_dict(), indent=2)
    if args.stats:
        Path(args.stats).write_text(report + "\n")
    print(report)


def load_train_config(path):
    from .training import LossWeights, Schedule

    values = parse_key_values(Path(path).read_text()) if path else {}
    unknown = set(values) - SCHEDULE_KEYS - LOSS_KEYS - OTHER_KEYS - set(ModelConfig().to_header())
    if unknown:
        raise ValueError(f"unknown training config keys: {sorted(unknown)}")
    model_cfg = ModelConfig.from_header({k: v for k, v in values.items() if k in ModelConfig().to_header()})
    sched = Schedule(
        epochs=int(values.get("epochs", 100)),
        lr=float(values.get("lr", 2e-4)),
        betas=(float(values.get("beta1", 0.5)), float(values.get("beta2", 0.999))),
        gamma=float(values.get("gamma", 0.1)),
        milestones=tuple(int(m) for m in values.get("milestones", "60,90").split(",") if m),
        steps_per_epoch=int(values["steps_per_epoch"]) if "steps_per_epoch" in values else None,
        batch_size=int(values.get("batch_size", 4)),
        checkpoint_every=int(values.get("checkpoint_every", 10)),
        seed=int(values.get("seed", 0)),
    )
    weights = LossWeights(
        float(values.get("lambda_per", 10)), float(values.get("lambda_l1", 10)), float(values.get("lambda_bg", 10))
    )
    return model_cfg, sched, weights, values


def cmd_train(args):
    from .synthetic import moving_disc_clip
    from .training import FramePairDataset, LuminanceThresholdMatting, RandomFeatureBackend, VGG19Backend, train
    from .video_io import read_video

    model_cfg, sched, weights, values = load_train_config(args.config)
    if args.seed is not None:
        sched.seed = args.seed
    clips = []
    for path in args.data or []:
        clips.append(_resize_video(read_video(path), model_cfg.max_resolution).frames)
    if not args.data:
        n = int(values.get("synthetic_clips", 4))
        t = int(values.get("synthetic_frames", 8))
        clips = [moving_disc_clip(t, model_cfg.max_resolution, velocity=(1 + s % 3, 1 + s % 2), seed=s) for s in range(n)]
    if values.get("backend", "random") == "vgg19":
        backend = VGG19Backend(values.get("vgg_weights"))
    else:
        backend = RandomFeatureBackend(seed=sched.seed)
    matting = LuminanceThresholdMatting(float(values.get("matting_threshold", 0.5)))
    model = build_model(model_cfg, seed=sched.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = train(model, FramePairDataset(clips), sched, backend, matting, weights, out_dir=out,
                 log_path=out / "train_log.csv")
    model.save(out / "final.ckpt", steps=len(rows))
    print(f"trained {len(rows)} steps; final loss {rows[-1]['total']:.4f}; checkpoint {out / 'final.ckpt'}")


def cmd_metrics(args):
    from .metrics import metric_adapter
    from .video_io import read_video

    ref, dist = read_video(args.reference), read_video(args.distorted)
    commands = dict(c.split("=", 1) for c in args.metric_cmd or [])
    result = {}
    for mid in args.metric:
        adapter = metric_adapter(mid, commands.get(mid))
        if not adapter.available:
            result[mid] = None
            continue
        value = adapter.compute(ref.frames, dist.frames)
        result[mid] = value if np.isfinite(value) else "inf"
    print(json.dumps(result, indent=2))


def cmd_bdrate(args):
    from .metrics import bd_rate, read_rd_csv

    value = bd_rate(read_rd_csv(args.anchor), read_rd_csv(args.test), method=args.method)
    print(f"{value:.4f} %")


def cmd_sweep(args):
    from .metrics import metric_adapter, rd_sweep

    model = TrajectoryCodecModel.load(args.checkpoint)
    commands = dict(c.split("=", 1) for c in args.metric_cmd or [])
    metrics = [metric_adapter(m, commands.get(m)) for m in args.metric]
    rows = rd_sweep(model, args.sequences, args.qps, args.deltas, metrics, args.out, adapter=_adapter(args))
    print(f"wrote {len(rows)} rows to {Path(args.out) / 'rd.csv'}")


def _keyframe_flags(p):
    p.add_argument("--keyframe-codec", choices=["lossless", "external"], default="lossless")
    p.add_argument("--kf-encode-cmd", help="template with {input} {output} {qp} {width} {height}")
    p.add_argument("--kf-decode-cmd", help="template with {input} {output} {width} {height}")


def build_parser():
    parser = argparse.ArgumentParser(prog="trajcodec", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="write a randomly initialized checkpoint")
    p.add_argument("--config")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("encode")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="raw .rgb (with .json sidecar) or .y4m")
    p.add_argument("--output", required=True)
    p.add_argument("--qp", type=int, default=32)
    p.add_argument("--delta", type=Fraction, default=Fraction(1, 50))
    p.add_argument("--resolution-index", type=int)
    _keyframe_flags(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--stats")
    _keyframe_flags(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("train")
    p.add_argument("--config")
    p.add_argument("--data", nargs="*")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("metrics")
    p.add_argument("--reference", required=True)
    p.add_argument("--distorted", required=True)
    p.add_argument("--metric", nargs="+", default=["psnr"], choices=["psnr", "dists", "lpips", "fvd"])
    p.add_argument("--metric-cmd", action="append", help="id=command template")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("bdrate")
    p.add_argument("--anchor", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--method", choices=["pchip", "cubic"], default="pchip")
    p.set_defaults(func=cmd_bdrate)

    p = sub.add_parser("sweep")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sequences", nargs="*", default=[])
    p.add_argument("--qps", type=int, nargs="+", default=[22, 32, 42, 52])
    p.add_argument("--deltas", type=Fraction, nargs="+", default=[Fraction(1, 50)])
    p.add_argument("--metric", nargs="+", default=["psnr"], choices=["psnr", "dists", "lpips", "fvd"])
    p.add_argument("--metric-cmd", action="append", help="id=command template")
    p.add_argument("--out", required=True)
    _keyframe_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except Exception as exc:
        if args.verbose:
            raise
        module = type(exc).__module__.rsplit(".", 1)[-1]
        print(f"error [{module}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
