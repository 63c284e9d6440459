"""Scikit-learn style wrappers around the networks and training loops.

Estimators take and return depth in millimetres (uint16, 0 = missing) so
they compose with the PNG readers; normalization to ``[0, 1]`` happens
inside, per frame.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from . import data as dio
from . import ops
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .losses import LossWeights
from .networks import BilateralConfig, CompletionConfig, CompletionNet, SRConfig, SuperResolutionNet, refine
from .runtime import compute_context
from .training import TrainConfig, prepare_completion, prepare_sr, train_completion, train_sr


# --------------------------------------------------------------------------
# Input validation


def check_depth_frames(depth, name: str = "depth") -> np.ndarray:
    """Return depth as an ``(N, H, W)`` array; a single ``(H, W)`` frame is
    promoted to a batch of one."""
    depth = np.asarray(depth)
    if depth.ndim == 2:
        depth = depth[None]
    if depth.ndim != 3:
        raise ValueError(f"{name} must be (H, W) or (N, H, W), got shape {depth.shape}")
    if depth.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.issubdtype(depth.dtype, np.number):
        raise TypeError(f"{name} must be numeric, got {depth.dtype}")
    if (depth < 0).any():
        raise ValueError(f"{name} contains negative values")
    return depth


def check_rgb_frames(rgb, depth: np.ndarray, name: str = "rgb") -> np.ndarray:
    """Return RGB as ``(N, H, W, 3)`` aligned with ``depth`` ``(N, H, W)``."""
    rgb = np.asarray(rgb)
    if rgb.ndim == 3:
        rgb = rgb[None]
    if rgb.ndim != 4 or rgb.shape[-1] != 3:
        raise ValueError(f"{name} must be (H, W, 3) or (N, H, W, 3), got shape {rgb.shape}")
    if rgb.shape[:3] != depth.shape:
        raise ValueError(f"{name} shape {rgb.shape[:3]} does not match depth {depth.shape}")
    return rgb


def _gray_rgb(depth: np.ndarray) -> np.ndarray:
    return np.zeros(depth.shape + (3,), dtype=np.uint8)


def _config_from_meta(cls, meta: dict, **overrides):
    values = dict(meta)
    values.update(overrides)
    for key, value in values.items():
        if isinstance(value, list):
            values[key] = tuple(value)
    return cls(**values)


def completion_config(meta: dict) -> CompletionConfig:
    return _config_from_meta(CompletionConfig, meta.get("network", {}))


def sr_config(meta: dict, orientation: str | None = None) -> SRConfig:
    net = dict(meta.get("network", {}))
    gate = dict(net.pop("gate", {}) or {})
    if orientation is not None:
        gate["orientation"] = orientation
    return _config_from_meta(SRConfig, net, gate=ops.DepthGateConfig(**gate))


class _CheckpointMixin:
    checkpoint_: Checkpoint

    def _check_fitted(self) -> None:
        if getattr(self, "checkpoint_", None) is None:
            raise NotFittedError(f"{type(self).__name__} is not fitted; call fit or load a checkpoint")

    def save(self, path) -> None:
        self._check_fitted()
        save_checkpoint(path, self.checkpoint_)


# --------------------------------------------------------------------------
# Completion


class DepthCompleter(_CheckpointMixin, BaseEstimator):
    """Fill missing depth with the region-adaptive encoder/decoder network.

    ``fit(X, y)`` takes corrupted depth frames ``X`` (0 = missing) and their
    complete ground truth ``y``; ``predict(X)`` returns completed frames in
    the units of ``X``.
    """

    def __init__(self, epochs=100, lr=1e-4, batch_size=4, seed=0, deterministic=False, threads=None,
                 valid_weight=1.0, invalid_weight=6.0, val_fraction=0.1, use_rgb=False):
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.seed = seed
        self.deterministic = deterministic
        self.threads = threads
        self.valid_weight = valid_weight
        self.invalid_weight = invalid_weight
        self.val_fraction = val_fraction
        self.use_rgb = use_rgb

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs, lr=self.lr, batch_size=self.batch_size, seed=self.seed,
            deterministic=self.deterministic, threads=self.threads, val_fraction=self.val_fraction,
        )

    def fit(self, X, y, rgb=None, on_epoch=None):
        X = check_depth_frames(X, "X")
        y = check_depth_frames(y, "y")
        if X.shape != y.shape:
            raise ValueError(f"X {X.shape} and y {y.shape} differ in shape")
        rgb = _gray_rgb(X) if rgb is None else check_rgb_frames(rgb, X)
        ds = prepare_completion(rgb, X, y, (X > 0).astype(np.uint8), self.use_rgb)
        net_cfg = CompletionConfig(use_rgb=self.use_rgb)
        loss_weights = LossWeights(self.valid_weight, self.invalid_weight)
        self.checkpoint_, self.history_ = train_completion(ds, self._train_config(), net_cfg, loss_weights, on_epoch=on_epoch)
        self.network_ = CompletionNet(net_cfg)
        return self

    @classmethod
    def from_checkpoint(cls, source, **params) -> DepthCompleter:
        ckpt = source if isinstance(source, Checkpoint) else load_checkpoint(source, expected_kind="completion")
        net_cfg = completion_config(ckpt.metadata)
        est = cls(use_rgb=net_cfg.use_rgb, **params)
        est.checkpoint_ = ckpt
        est.network_ = CompletionNet(net_cfg)
        ckpt.weights.check_against(est.network_.spec)
        return est

    def predict_normalized(self, depth, m, rgb=None) -> np.ndarray:
        """Complete already-normalized ``(N, 1, H, W)`` depth; returns values
        in ``[0, 1]``."""
        self._check_fitted()
        x = np.asarray(depth, dtype=np.float32)
        if self.network_.cfg.use_rgb:
            if rgb is None:
                raise ValueError("this completion network expects RGB input")
            x = np.concatenate([x, np.asarray(rgb, dtype=np.float32) / 255.0], axis=1)
        with compute_context(self.deterministic, self.threads):
            out, _ = self.network_.predict(self.checkpoint_.weights, x, m)
        return out

    def predict(self, X, rgb=None) -> np.ndarray:
        X = check_depth_frames(X, "X")
        rgb_n = None if rgb is None else np.transpose(check_rgb_frames(rgb, X), (0, 3, 1, 2))
        out = np.empty(X.shape, dtype=np.uint16)
        for i, frame in enumerate(X):
            m = (frame > 0).astype(np.uint8)
            norm, bounds = dio.normalize_depth(frame, m)
            c = None if rgb_n is None else rgb_n[i : i + 1]
            pred = self.predict_normalized(norm[None, None], m[None], c)
            out[i] = dio.denormalize_depth(pred[0, 0], bounds)
        return out


# --------------------------------------------------------------------------
# Refinement


class BilateralRefiner(TransformerMixin, BaseEstimator):
    """RGB-guided bilateral smoothing of complete depth; no learned state."""

    def __init__(self, window=9, sigma_spatial=7.0, sigma_range=5.0):
        self.window = window
        self.sigma_spatial = sigma_spatial
        self.sigma_range = sigma_range

    @property
    def config(self) -> BilateralConfig:
        return BilateralConfig(self.window, self.sigma_spatial, self.sigma_range)

    def fit(self, X=None, y=None):
        self.config  # validates the parameters
        return self

    def transform_normalized(self, depth, rgb) -> np.ndarray:
        """Filter ``(N, 1, H, W)`` depth guided by ``(N, 3, H, W)`` RGB."""
        return refine(depth, rgb, self.config)

    def transform(self, X, rgb) -> np.ndarray:
        X = check_depth_frames(X, "X")
        rgb = check_rgb_frames(rgb, X)
        out = refine(X[:, None].astype(np.float64), np.transpose(rgb, (0, 3, 1, 2)), self.config)[:, 0]
        return np.rint(out).astype(X.dtype) if np.issubdtype(X.dtype, np.integer) else out.astype(X.dtype)


# --------------------------------------------------------------------------
# Super-resolution


class DepthSuperResolver(_CheckpointMixin, BaseEstimator):
    """Up-sample complete depth by ``ratio`` with the depth-adaptive network.

    ``fit(X)`` takes full-resolution frames and trains on their
    nearest-neighbour sub-samples; ``predict(X)`` up-samples ``X``.
    """

    def __init__(self, ratio=4, features=64, blocks=5, gate_orientation="similarity", epochs=100, lr=1e-4,
                 batch_size=8, seed=0, deterministic=False, threads=None, val_fraction=0.1, tile=64):
        self.ratio = ratio
        self.features = features
        self.blocks = blocks
        self.gate_orientation = gate_orientation
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.seed = seed
        self.deterministic = deterministic
        self.threads = threads
        self.val_fraction = val_fraction
        self.tile = tile

    def _net_config(self) -> SRConfig:
        return SRConfig(self.ratio, self.features, self.blocks, gate=ops.DepthGateConfig(orientation=self.gate_orientation))

    def fit(self, X, y=None, rgb=None, on_epoch=None):
        X = check_depth_frames(X, "X")
        rgb = _gray_rgb(X) if rgb is None else check_rgb_frames(rgb, X)
        ds = prepare_sr(rgb, X, self.ratio)
        cfg = TrainConfig(
            epochs=self.epochs, lr=self.lr, batch_size=self.batch_size, seed=self.seed,
            deterministic=self.deterministic, threads=self.threads, val_fraction=self.val_fraction,
        )
        net_cfg = self._net_config()
        self.checkpoint_, self.history_ = train_sr(ds, cfg, net_cfg, on_epoch=on_epoch)
        self.network_ = SuperResolutionNet(net_cfg)
        return self

    @classmethod
    def from_checkpoint(cls, source, gate_orientation: str | None = None, **params) -> DepthSuperResolver:
        ckpt = source if isinstance(source, Checkpoint) else load_checkpoint(source, expected_kind="superres")
        net_cfg = sr_config(ckpt.metadata, gate_orientation)
        est = cls(ratio=net_cfg.ratio, features=net_cfg.features, blocks=net_cfg.blocks,
                  gate_orientation=net_cfg.gate.orientation, **params)
        est.checkpoint_ = ckpt
        est.network_ = SuperResolutionNet(net_cfg)
        ckpt.weights.check_against(est.network_.spec)
        return est

    def predict_normalized(self, depth, rgb=None) -> np.ndarray:
        self._check_fitted()
        with compute_context(self.deterministic, self.threads):
            return self.network_.predict_tiled(self.checkpoint_.weights, np.asarray(depth, np.float32), rgb, self.tile)

    def predict(self, X, rgb=None) -> np.ndarray:
        X = check_depth_frames(X, "X")
        rgb_n = None if rgb is None else np.transpose(check_rgb_frames(rgb, X), (0, 3, 1, 2))
        r = self.network_.cfg.ratio if hasattr(self, "network_") else self.ratio
        out = np.empty((X.shape[0], X.shape[1] * r, X.shape[2] * r), dtype=np.uint16)
        for i, frame in enumerate(X):
            norm, bounds = dio.normalize_depth(frame)
            c = None if rgb_n is None else rgb_n[i : i + 1]
            out[i] = dio.denormalize_depth(self.predict_normalized(norm[None, None], c)[0, 0], bounds)
        return out


# --------------------------------------------------------------------------
# Full pipeline


def upscale_rgb(rgb: np.ndarray, ratio: int) -> np.ndarray:
    """Bicubic up-scaling of an ``(H, W, 3)`` uint8 image."""
    h, w = rgb.shape[:2]
    return np.asarray(Image.fromarray(np.ascontiguousarray(rgb, dtype=np.uint8)).resize((w * ratio, h * ratio), Image.BICUBIC))


@dataclass
class PipelineResult:
    image: dio.RgbdImage  # high-resolution output
    completed: np.ndarray  # normalized, input resolution
    refined: np.ndarray  # normalized, input resolution
    bounds: tuple[float, float]
    timings_ms: dict[str, float] = field(default_factory=dict)

    def format_timings(self) -> str:
        parts = " ".join(f"{k}={v:.1f}" for k, v in self.timings_ms.items())
        return f"timing_ms {parts} total={sum(self.timings_ms.values()):.1f}"


class RgbdPipeline(BaseEstimator):
    """Completion, bilateral refinement and super-resolution of one frame.

    Depth is normalized by the range of its valid pixels, passed through the
    three stages and mapped back to millimetres; RGB is up-scaled bicubically.
    """

    def __init__(self, completer=None, refiner=None, superresolver=None):
        self.completer = completer
        self.refiner = refiner
        self.superresolver = superresolver

    def run(self, image: dio.RgbdImage) -> PipelineResult:
        if self.completer is None or self.superresolver is None:
            raise NotFittedError("pipeline needs a fitted completer and super-resolver")
        refiner = self.refiner if self.refiner is not None else BilateralRefiner()
        timings = {}

        t = time.perf_counter()
        m = image.valid_map()
        norm, bounds = dio.normalize_depth(image.depth, m)
        rgb = np.transpose(image.rgb, (2, 0, 1))[None].astype(np.float32)
        timings["normalize"] = (time.perf_counter() - t) * 1e3

        t = time.perf_counter()
        completed = self.completer.predict_normalized(norm[None, None], m[None], rgb)
        timings["complete"] = (time.perf_counter() - t) * 1e3

        t = time.perf_counter()
        refined = refiner.transform_normalized(completed, rgb).astype(np.float32)
        timings["refine"] = (time.perf_counter() - t) * 1e3

        t = time.perf_counter()
        hr = self.superresolver.predict_normalized(refined, rgb)
        timings["superres"] = (time.perf_counter() - t) * 1e3

        t = time.perf_counter()
        ratio = self.superresolver.network_.cfg.ratio
        depth_hr = dio.denormalize_depth(hr[0, 0], bounds)
        rgb_hr = upscale_rgb(image.rgb, ratio)
        k = image.intrinsics
        intr_hr = dio.Intrinsics(k.fx * ratio, k.fy * ratio, (k.cx + 0.5) * ratio - 0.5, (k.cy + 0.5) * ratio - 0.5)
        timings["denormalize"] = (time.perf_counter() - t) * 1e3

        out = dio.RgbdImage(rgb_hr, depth_hr, intr_hr)
        return PipelineResult(out, completed[0, 0], refined[0, 0], bounds, timings)

    def predict(self, rgb, depth) -> np.ndarray:
        """High-resolution depth for one ``(H, W, 3)`` / ``(H, W)`` pair."""
        return self.run(dio.RgbdImage(np.asarray(rgb, np.uint8), np.asarray(depth, np.uint16))).image.depth
