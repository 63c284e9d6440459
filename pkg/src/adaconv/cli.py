"""Command-line entry point: ``adaconv <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import data as dio
from .checkpoint import CheckpointError, save_checkpoint
from .estimators import BilateralRefiner, DepthCompleter, DepthSuperResolver, RgbdPipeline
from .gradcheck import grad_check
from .losses import LossWeights
from .metrics import error_colormap, masked_errors
from .networks import CompletionConfig, SRConfig
from .ops import DepthGateConfig
from .runtime import compute_context
from .training import TrainConfig, prepare_completion, prepare_sr, train_completion, train_sr


class CliError(Exception):
    """A user-facing failure; the message is printed and the exit code is 1."""


def _pair(value: str) -> tuple[Path, Path]:
    parts = value.split(",")
    if len(parts) != 2 or not all(parts):
        raise argparse.ArgumentTypeError("expected two comma-separated paths: rgb.png,depth.png")
    return Path(parts[0]), Path(parts[1])


def _positive(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {value}")
    return n


def _emit(line: str) -> None:
    print(line, flush=True)


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise CliError(f"{what} not found: {path}")
    return path


def _load_pair(paths: tuple[Path, Path], intrinsics: Path | None) -> dio.RgbdImage:
    rgb_path, depth_path = paths
    _require(rgb_path, "rgb image")
    _require(depth_path, "depth image")
    k = dio.Intrinsics.load(_require(intrinsics, "intrinsics file")) if intrinsics else None
    return dio.load_rgbd(rgb_path, depth_path, k)


def _completer(path: Path, args) -> DepthCompleter:
    _require(path, "checkpoint")
    return DepthCompleter.from_checkpoint(path, deterministic=args.deterministic, threads=args.threads)


def _superresolver(path: Path, args) -> DepthSuperResolver:
    _require(path, "checkpoint")
    est = DepthSuperResolver.from_checkpoint(path, args.gate_orientation, deterministic=args.deterministic, threads=args.threads)
    if getattr(args, "r", None) is not None and args.r != est.network_.cfg.ratio:
        raise CliError(f"--r {args.r} does not match the checkpoint's ratio {est.network_.cfg.ratio}: {path}")
    return est


def _timing(stages: dict[str, float]) -> str:
    parts = " ".join(f"{k}={v:.1f}" for k, v in stages.items())
    return f"timing_ms {parts} total={sum(stages.values()):.1f}"


def _report_against(gt_path: Path, pred: np.ndarray, error_map: Path | None) -> None:
    gt = dio.load_depth_png(_require(gt_path, "ground truth"))
    if gt.shape != pred.shape:
        raise CliError(f"ground truth {gt.shape} and prediction {pred.shape} differ in size")
    _report(gt, pred, (gt > 0).astype(np.uint8), error_map)


def _report(gt: np.ndarray, pred: np.ndarray, m: np.ndarray, error_map: Path | None) -> None:
    gt_n, bounds = dio.normalize_depth(gt, m)
    lo, hi = bounds
    span = hi - lo if hi > lo else 1.0
    pred_n = (pred.astype(np.float64) - lo) / span
    report = masked_errors(gt_n, pred_n, m)
    _emit(report.format_record())
    if error_map is not None:
        dio.save_rgb_png(error_map, error_colormap(report))


# --------------------------------------------------------------------------
# Inference commands


def cmd_complete(args) -> int:
    image = _load_pair(args.inputs, args.intrinsics)
    est = _completer(args.ckpt, args)
    t = time.perf_counter()
    out = est.predict(image.depth, image.rgb)[0]
    _emit(_timing({"complete": (time.perf_counter() - t) * 1e3}))
    dio.save_depth_png(args.out, out)
    if args.pointcloud:
        n = dio.export_pointcloud(dio.RgbdImage(image.rgb, out, image.intrinsics), args.pointcloud)
        _emit(f"points={n}")
    if args.gt:
        _report_against(args.gt, out, args.error_map)
    return 0


def cmd_refine(args) -> int:
    image = _load_pair(args.inputs, None)
    t = time.perf_counter()
    with compute_context(args.deterministic, args.threads):
        out = BilateralRefiner(args.window, args.sigma_spatial, args.sigma_range).transform(image.depth, image.rgb)[0]
    _emit(_timing({"refine": (time.perf_counter() - t) * 1e3}))
    dio.save_depth_png(args.out, out)
    return 0


def cmd_superres(args) -> int:
    image = _load_pair(args.inputs, args.intrinsics)
    if not image.valid_map().all():
        raise CliError("super-resolution needs complete depth; run 'complete' first")
    est = _superresolver(args.ckpt, args)
    t = time.perf_counter()
    out = est.predict(image.depth, image.rgb)[0]
    _emit(_timing({"superres": (time.perf_counter() - t) * 1e3}))
    dio.save_depth_png(args.out, out)
    if args.gt:
        _report_against(args.gt, out, args.error_map)
    return 0


def cmd_pipeline(args) -> int:
    image = _load_pair(args.inputs, args.intrinsics)
    pipe = RgbdPipeline(
        _completer(args.ckpt_completion, args),
        BilateralRefiner(),
        _superresolver(args.ckpt_sr, args),
    )
    result = pipe.run(image)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dio.save_depth_png(out / "depth_hr.png", result.image.depth)
    dio.save_rgb_png(out / "rgb_hr.png", result.image.rgb)
    h, w = image.shape
    _emit(f"frame={w}x{h} output={result.image.depth.shape[1]}x{result.image.depth.shape[0]}")
    _emit(result.format_timings())
    if args.pointcloud:
        n = dio.export_pointcloud(result.image, out / "points.ply")
        _emit(f"points={n}")
    if args.gt:
        _report_against(args.gt, result.image.depth, args.error_map)
    return 0


# --------------------------------------------------------------------------
# Training and data


def _load_manifest(path: Path) -> dio.DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.jsonl"
    return dio.DatasetManifest.load(_require(path, "manifest"))


def _stack(manifest: dio.DatasetManifest, split: str):
    rows = [manifest.load_entry(e) for e in manifest.split(split)]
    return [list(col) for col in zip(*rows)] if rows else None


def _epoch_line(epoch: int, train: float, val: float, wall: float) -> None:
    _emit(json.dumps({"epoch": epoch, "train_loss": train, "val_loss": val, "wall_s": round(wall, 3)}))


def _train_config(args, batch_size: int) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs, lr=args.lr, batch_size=args.batch_size or batch_size, seed=args.seed,
        deterministic=args.deterministic, threads=args.threads, max_steps=args.max_steps,
    )


def cmd_train_completion(args) -> int:
    manifest = _load_manifest(args.data)
    train = _stack(manifest, "train")
    if train is None:
        raise CliError(f"no training entries in {args.data}")
    val = _stack(manifest, "val")
    net_cfg = CompletionConfig(use_rgb=args.use_rgb)
    ds = prepare_completion(*train, use_rgb=args.use_rgb)
    val_ds = prepare_completion(*val, use_rgb=args.use_rgb) if val else None
    ckpt, _ = train_completion(
        ds, _train_config(args, 4), net_cfg, LossWeights(args.valid_weight, args.invalid_weight), val=val_ds, on_epoch=_epoch_line
    )
    save_checkpoint(args.out, ckpt)
    _emit(f"saved={args.out} best_epoch={ckpt.metadata['epoch']}")
    return 0


def cmd_train_sr(args) -> int:
    manifest = _load_manifest(args.data)
    train = _stack(manifest, "train")
    if train is None:
        raise CliError(f"no training entries in {args.data}")
    val = _stack(manifest, "val")
    # super-resolution trains on the complete targets
    ds = prepare_sr(train[0], train[2], args.r)
    val_ds = prepare_sr(val[0], val[2], args.r) if val else None
    net_cfg = SRConfig(ratio=args.r, gate=DepthGateConfig(orientation=args.gate_orientation or "similarity"))
    ckpt, _ = train_sr(ds, _train_config(args, 8), net_cfg, val=val_ds, on_epoch=_epoch_line)
    save_checkpoint(args.out, ckpt)
    _emit(f"saved={args.out} best_epoch={ckpt.metadata['epoch']}")
    return 0


def cmd_synth_data(args) -> int:
    manifest = dio.write_synthetic_dataset(args.out, args.count, args.size, args.seed, args.val_fraction)
    _emit(f"images={len(manifest.entries)} manifest={Path(args.out) / 'manifest.jsonl'}")
    return 0


def cmd_eval(args) -> int:
    gt = dio.load_depth_png(_require(args.gt, "ground truth"))
    pred = dio.load_depth_png(_require(args.pred, "prediction"))
    if gt.shape != pred.shape:
        raise CliError(f"ground truth {gt.shape} and prediction {pred.shape} differ in size")
    m = dio.load_mask_png(_require(args.mask, "mask")) if args.mask else (gt > 0).astype(np.uint8)
    if m.shape != gt.shape:
        raise CliError(f"mask {m.shape} and ground truth {gt.shape} differ in size")
    _report(gt, pred, m, args.error_map)
    return 0


def cmd_gradcheck(args) -> int:
    reports = grad_check(args.op, args.trials, args.seed, args.tolerance)
    for rep in reports:
        _emit(rep.format())
    worst = max(r.max_error for r in reports)
    failed = sum(not r.passed for r in reports)
    _emit(f"op={args.op} trials={args.trials} max_rel_err={worst:.3e} failed={failed}")
    return 1 if failed else 0


# --------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--deterministic", action="store_true", help="single-threaded, reproducible arithmetic")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=_positive, default=None)
    common.add_argument("--gate-orientation", choices=["similarity", "literal"], default=None,
                        help="depth-gate orientation; inference defaults to the checkpoint's")

    parser = argparse.ArgumentParser(prog="adaconv", description="Adaptive-convolution RGB-D completion and super-resolution.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=fn)
        return p

    def add_eval_opts(p):
        p.add_argument("--gt", type=Path, help="ground-truth depth PNG for an error report")
        p.add_argument("--error-map", type=Path, help="write a colour error map PNG (needs --gt)")

    p = add("complete", cmd_complete, "fill missing depth")
    p.add_argument("--in", dest="inputs", type=_pair, required=True, metavar="RGB,DEPTH")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--intrinsics", type=Path)
    p.add_argument("--pointcloud", type=Path, help="also write the completed frame as a PLY point cloud")
    add_eval_opts(p)

    p = add("refine", cmd_refine, "RGB-guided bilateral refinement")
    p.add_argument("--in", dest="inputs", type=_pair, required=True, metavar="RGB,DEPTH")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--window", type=int, default=9)
    p.add_argument("--sigma-spatial", type=float, default=7.0)
    p.add_argument("--sigma-range", type=float, default=5.0)

    p = add("superres", cmd_superres, "up-sample complete depth")
    p.add_argument("--in", dest="inputs", type=_pair, required=True, metavar="RGB,DEPTH")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--r", type=int, choices=[2, 4])
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--intrinsics", type=Path)
    add_eval_opts(p)

    p = add("pipeline", cmd_pipeline, "completion, refinement and super-resolution")
    p.add_argument("--in", dest="inputs", type=_pair, required=True, metavar="RGB,DEPTH")
    p.add_argument("--ckpt-completion", type=Path, required=True)
    p.add_argument("--ckpt-sr", type=Path, required=True)
    p.add_argument("--r", type=int, choices=[2, 4])
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--intrinsics", type=Path)
    p.add_argument("--pointcloud", action="store_true", help="write points.ply in the output directory")
    add_eval_opts(p)

    for name, fn, default_lr in (("train-completion", cmd_train_completion, 1e-4), ("train-sr", cmd_train_sr, 1e-4)):
        p = add(name, fn, f"train the {name.split('-', 1)[1]} network")
        p.add_argument("--data", type=Path, required=True, help="dataset directory or manifest.jsonl")
        p.add_argument("--out", type=Path, required=True, help="checkpoint path")
        p.add_argument("--epochs", type=_positive, default=100)
        p.add_argument("--lr", type=float, default=default_lr)
        p.add_argument("--batch-size", type=_positive, default=None)
        p.add_argument("--max-steps", type=_positive, default=None)
        if name == "train-completion":
            p.add_argument("--use-rgb", action="store_true")
            p.add_argument("--valid-weight", type=float, default=1.0)
            p.add_argument("--invalid-weight", type=float, default=6.0)
        else:
            p.add_argument("--r", type=int, choices=[2, 4], default=4)

    p = add("synth-data", cmd_synth_data, "write a synthetic RGB-D dataset")
    p.add_argument("--count", type=_positive, required=True)
    p.add_argument("--size", type=_positive, default=64)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--out", type=Path, required=True)

    p = add("eval", cmd_eval, "masked RMSE/PSNR between two depth PNGs")
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--mask", type=Path)
    p.add_argument("--error-map", type=Path)

    p = add("gradcheck", cmd_gradcheck, "finite-difference gradient checks")
    p.add_argument("--op", required=True, help="region-conv, depth-conv, conv1x1, batch-norm, leaky-relu, "
                   "pixel-shuffle, losses, completion-net or superres-net")
    p.add_argument("--trials", type=_positive, default=1)
    p.add_argument("--tolerance", type=float, default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "error_map", None) and not getattr(args, "gt", None) and args.command != "eval":
        print("error: --error-map needs --gt", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (CliError, FileNotFoundError, CheckpointError, dio.RgbdFormatError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
