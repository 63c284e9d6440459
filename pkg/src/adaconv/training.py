"""Adam, training loops and dataset preparation for both trainable networks."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import data as dio
from .checkpoint import Checkpoint
from .losses import LossWeights, loss_completion, loss_sr
from .networks import CompletionConfig, CompletionNet, ModelWeights, SRConfig, SuperResolutionNet, init_weights
from .runtime import compute_context

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """A loss or gradient became non-finite."""


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 1e-4
    batch_size: int = 4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    deterministic: bool = False
    threads: int | None = None
    val_fraction: float = 0.1
    max_steps: int | None = None

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch size and epochs must be at least 1")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must lie in [0, 1)")


class Adam:
    """Bias-corrected Adam over a dict of named arrays, updated in place."""

    def __init__(self, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            if params[name].shape != g.shape:
                raise ValueError(f"{name}: gradient shape {g.shape} does not match parameter {params[name].shape}")
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            p = params[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= (self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)).astype(p.dtype)


def adam_step(params, grads, state: Adam) -> None:
    state.step(params, grads)


@dataclass
class History:
    train: list[float] = field(default_factory=list)
    val: list[float] = field(default_factory=list)
    wall: list[float] = field(default_factory=list)
    best_epoch: int = -1

    def record(self) -> dict:
        # wall times stay out: checkpoints must be byte-identical across runs
        return {"train": self.train, "val": self.val, "best_epoch": self.best_epoch}


def _check_finite(value: float, grads: dict[str, np.ndarray], step: int) -> None:
    if not math.isfinite(value):
        raise TrainingDiverged(f"non-finite loss {value} at step {step}")
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise TrainingDiverged(f"non-finite gradient in {name} at step {step}")


def _split(n: int, val_fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    order = rng.permutation(n)
    n_val = int(round(n * val_fraction)) if n > 1 else 0
    return np.sort(order[n_val:]), np.sort(order[:n_val])


# --------------------------------------------------------------------------
# Completion


@dataclass
class CompletionData:
    """Network-ready arrays: corrupted input, valid map and normalized target."""

    inputs: np.ndarray  # (N, C, H, W)
    maps: np.ndarray  # (N, H, W) uint8
    targets: np.ndarray  # (N, 1, H, W)

    def __len__(self):
        return self.inputs.shape[0]

    def subset(self, idx) -> CompletionData:
        return CompletionData(self.inputs[idx], self.maps[idx], self.targets[idx])


def prepare_completion(rgbs, corrupted, targets, maps, use_rgb: bool = False) -> CompletionData:
    """Normalize each pair by the depth range of its complete target.

    Inference only sees the corrupted frame and normalizes by its valid
    range instead; the two agree unless a hole removes the extreme depths.
    """
    xs, ys, ms = [], [], []
    for rgb, c, t, m in zip(rgbs, corrupted, targets, maps):
        y, (lo, hi) = dio.normalize_depth(t)
        span = hi - lo if hi > lo else 1.0
        m = np.asarray(m, dtype=np.uint8)
        x = np.where(m > 0, (np.asarray(c, dtype=np.float64) - lo) / span, 0.0).astype(np.float32)[None]
        if use_rgb:
            x = np.concatenate([x, np.transpose(rgb, (2, 0, 1)).astype(np.float32) / 255.0])
        xs.append(x)
        ys.append(y[None])
        ms.append(m)
    return CompletionData(np.stack(xs), np.stack(ms), np.stack(ys))


def synthetic_completion_data(count: int, size: int = 64, seed: int = 0, use_rgb: bool = False) -> CompletionData:
    samples = dio.make_completion_samples(count, size, seed)
    return prepare_completion(
        [s.rgb for s, _, _ in samples],
        [c for _, c, _ in samples],
        [s.depth for s, _, _ in samples],
        [m for _, _, m in samples],
        use_rgb,
    )


def evaluate_completion(net: CompletionNet, weights: ModelWeights, ds: CompletionData, loss_weights=LossWeights(), batch_size: int = 8) -> float:
    """Mean per-image completion loss of the unclamped inference output."""
    total = 0.0
    for start in range(0, len(ds), batch_size):
        part = ds.subset(slice(start, start + batch_size))
        out, _, _ = net.forward(weights, part.inputs, part.maps, training=False)
        for i in range(len(part)):
            total += loss_completion(part.targets[i], out[i], part.maps[i][None], loss_weights)[0]
    return total / len(ds)


def train_completion(
    ds: CompletionData,
    cfg: TrainConfig = TrainConfig(),
    net_cfg: CompletionConfig = CompletionConfig(),
    loss_weights: LossWeights = LossWeights(),
    val: CompletionData | None = None,
    weights: ModelWeights | None = None,
    on_epoch: Callable[[int, float, float, float], None] | None = None,
) -> tuple[Checkpoint, History]:
    """Train the completion network; the returned checkpoint holds the
    weights with the lowest validation loss (or the last ones without a
    validation split)."""
    if len(ds) == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(cfg.seed)
    if val is None:
        train_idx, val_idx = _split(len(ds), cfg.val_fraction, rng)
        val = ds.subset(val_idx) if len(val_idx) else None
        ds = ds.subset(train_idx)
    net = CompletionNet(net_cfg)
    if weights is None:
        weights = init_weights(net.spec, rng)
    weights.check_against(net.spec)
    params = weights.trainable()
    opt = Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    hist = History()
    best, best_val = weights.copy(), math.inf
    step = 0
    start = time.perf_counter()
    with compute_context(cfg.deterministic, cfg.threads):
        for epoch in range(cfg.epochs):
            order = rng.permutation(len(ds))
            losses = []
            for b in range(0, len(ds), cfg.batch_size):
                batch = ds.subset(np.sort(order[b : b + cfg.batch_size]))
                out, _, cache = net.forward(weights, batch.inputs, batch.maps, training=True)
                loss, grad = loss_completion(batch.targets, out, batch.maps, loss_weights)
                grads, _ = net.backward(weights, grad, cache)
                _check_finite(loss, grads, step)
                opt.step(params, grads)
                losses.append(loss)
                step += 1
                if cfg.max_steps is not None and step >= cfg.max_steps:
                    break
            train_loss = float(np.mean(losses))
            val_loss = evaluate_completion(net, weights, val, loss_weights) if val is not None else train_loss
            if not math.isfinite(val_loss):
                raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}")
            hist.train.append(train_loss)
            hist.val.append(val_loss)
            hist.wall.append(time.perf_counter() - start)
            if val_loss < best_val:
                best_val, best, hist.best_epoch = val_loss, weights.copy(), epoch
            logger.info("epoch %d train %.6g val %.6g", epoch, train_loss, val_loss)
            if on_epoch is not None:
                on_epoch(epoch, train_loss, val_loss, hist.wall[-1])
            if cfg.max_steps is not None and step >= cfg.max_steps:
                break
    meta = {"network": asdict(net_cfg), "train": asdict(cfg), "epoch": hist.best_epoch, "history": hist.record(), "steps": step}
    return Checkpoint(best, meta), hist


# --------------------------------------------------------------------------
# Super-resolution


@dataclass
class SRData:
    depth_lr: np.ndarray  # (N, 1, h, w) normalized
    rgb_lr: np.ndarray  # (N, 3, h, w) 0-255
    depth_hr: np.ndarray  # (N, 1, rh, rw) normalized

    def __len__(self):
        return self.depth_lr.shape[0]

    def subset(self, idx) -> SRData:
        return SRData(self.depth_lr[idx], self.rgb_lr[idx], self.depth_hr[idx])


def prepare_sr(rgbs, depths, ratio: int) -> SRData:
    """Pair each full-resolution frame with its nearest-neighbour sub-sample."""
    lo_d, lo_c, hi_d = [], [], []
    for rgb, depth in zip(rgbs, depths):
        norm, _ = dio.normalize_depth(depth)
        h, w = norm.shape
        if h % ratio or w % ratio:
            raise ValueError(f"frame {h}x{w} not divisible by ratio {ratio}")
        hi_d.append(norm[None])
        lo_d.append(dio.downsample_nearest(norm, ratio)[None])
        lo_c.append(np.transpose(dio.downsample_nearest(rgb, ratio), (2, 0, 1)).astype(np.float32))
    return SRData(np.stack(lo_d), np.stack(lo_c), np.stack(hi_d))


def synthetic_sr_data(count: int, size: int = 64, ratio: int = 4, seed: int = 0) -> SRData:
    seeds = np.random.SeedSequence(seed).spawn(count)
    scenes = []
    for ss in seeds:
        rng = np.random.default_rng(ss)
        scenes.append(dio.synth_scene(rng, size, size, object_count=int(rng.integers(1, 6))))
    return prepare_sr([s.rgb for s in scenes], [s.depth for s in scenes], ratio)


def evaluate_sr(net: SuperResolutionNet, weights: ModelWeights, ds: SRData, batch_size: int = 8) -> float:
    total = 0.0
    for start in range(0, len(ds), batch_size):
        part = ds.subset(slice(start, start + batch_size))
        out = net.predict(weights, part.depth_lr, part.rgb_lr)
        total += loss_sr(part.depth_hr, out, net.cfg.ratio)[0] * len(part)
    return total / len(ds)


def train_sr(
    ds: SRData,
    cfg: TrainConfig = TrainConfig(batch_size=8),
    net_cfg: SRConfig = SRConfig(),
    val: SRData | None = None,
    weights: ModelWeights | None = None,
    on_epoch: Callable[[int, float, float, float], None] | None = None,
) -> tuple[Checkpoint, History]:
    if len(ds) == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(cfg.seed)
    if val is None:
        train_idx, val_idx = _split(len(ds), cfg.val_fraction, rng)
        val = ds.subset(val_idx) if len(val_idx) else None
        ds = ds.subset(train_idx)
    net = SuperResolutionNet(net_cfg)
    if weights is None:
        weights = init_weights(net.spec, rng)
    weights.check_against(net.spec)
    params = weights.trainable()
    opt = Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    hist = History()
    best, best_val = weights.copy(), math.inf
    step = 0
    start = time.perf_counter()
    with compute_context(cfg.deterministic, cfg.threads):
        for epoch in range(cfg.epochs):
            order = rng.permutation(len(ds))
            losses = []
            for b in range(0, len(ds), cfg.batch_size):
                batch = ds.subset(np.sort(order[b : b + cfg.batch_size]))
                out, cache = net.forward(weights, batch.depth_lr, batch.rgb_lr)
                loss, grad = loss_sr(batch.depth_hr, out, net_cfg.ratio)
                grads, _ = net.backward(weights, grad, cache)
                _check_finite(loss, grads, step)
                opt.step(params, grads)
                losses.append(loss)
                step += 1
                if cfg.max_steps is not None and step >= cfg.max_steps:
                    break
            train_loss = float(np.mean(losses))
            val_loss = evaluate_sr(net, weights, val) if val is not None else train_loss
            hist.train.append(train_loss)
            hist.val.append(val_loss)
            hist.wall.append(time.perf_counter() - start)
            if val_loss < best_val:
                best_val, best, hist.best_epoch = val_loss, weights.copy(), epoch
            logger.info("epoch %d train %.6g val %.6g", epoch, train_loss, val_loss)
            if on_epoch is not None:
                on_epoch(epoch, train_loss, val_loss, hist.wall[-1])
            if cfg.max_steps is not None and step >= cfg.max_steps:
                break
    net_meta = asdict(net_cfg)
    meta = {"network": net_meta, "train": asdict(cfg), "epoch": hist.best_epoch, "history": hist.record(), "steps": step}
    return Checkpoint(best, meta), hist
