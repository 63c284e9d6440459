"""Adaptive convolution operators and the layers around them.

Every differentiable op comes as a ``*_forward`` returning ``(out, cache)``
and a ``*_backward`` consuming ``(grad_out, cache)``. Filter maps and depth
gates are binary and never receive gradients.

Both adaptive convolutions share one kernel: the input is unfolded into
columns, each column entry is multiplied by a binary gate, and the weighted
sum is renormalized by ``eps + number of open gates``. The region-adaptive
variant takes its gate from a spatial filter map; the depth-adaptive variant
compares every neighbour's guide depth with the kernel centre's.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import check_tensor

MASK_EPS = 1e-5
LEAKY_SLOPE = 0.1

Orientation = Literal["similarity", "literal"]


# --------------------------------------------------------------------------
# Parameter containers


@dataclass
class ConvParams:
    """Weights ``(out_ch, in_ch, k, k)``, bias ``(out_ch,)`` and stride."""

    weight: np.ndarray
    bias: np.ndarray
    stride: int = 1

    def __post_init__(self):
        self.weight = np.asarray(self.weight)
        self.bias = np.asarray(self.bias)
        if self.weight.ndim != 4:
            raise ValueError(f"weight must be (out, in, k, k), got {self.weight.shape}")
        o, _, kh, kw = self.weight.shape
        if kh != kw or kh % 2 == 0:
            raise ValueError(f"kernel must be square with odd size, got {kh}x{kw}")
        if self.bias.shape != (o,):
            raise ValueError(f"bias must have shape ({o},), got {self.bias.shape}")
        if self.stride < 1:
            raise ValueError(f"stride must be positive, got {self.stride}")

    @property
    def kernel(self) -> int:
        return self.weight.shape[2]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @classmethod
    def zeros(cls, out_ch: int, in_ch: int, kernel: int, stride: int = 1, dtype=np.float32) -> ConvParams:
        return cls(np.zeros((out_ch, in_ch, kernel, kernel), dtype), np.zeros(out_ch, dtype), stride)


@dataclass(frozen=True)
class DepthGateConfig:
    sigma: float = 0.0028
    tau: float = 1.0
    orientation: Orientation = "similarity"

    def __post_init__(self):
        if self.sigma <= 0 or self.tau <= 0:
            raise ValueError("sigma and tau must be positive")
        if self.orientation not in ("similarity", "literal"):
            raise ValueError(f"unknown gate orientation {self.orientation!r}")

    @property
    def threshold(self) -> float:
        """Depth difference at which the Gaussian falls to ``tau``.

        ``nan`` when the Gaussian peak is already below ``tau``.
        """
        arg = 1.0 / (self.tau * self.sigma * math.sqrt(2.0 * math.pi))
        if arg < 1.0:
            return float("nan")
        return self.sigma * math.sqrt(2.0 * math.log(arg))


@dataclass
class BatchNormState:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.9
    eps: float = 1e-5

    @classmethod
    def create(cls, channels: int, dtype=np.float32) -> BatchNormState:
        return cls(
            gamma=np.ones(channels, dtype),
            beta=np.zeros(channels, dtype),
            running_mean=np.zeros(channels, dtype),
            running_var=np.ones(channels, dtype),
        )

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]


# --------------------------------------------------------------------------
# Filter maps


def as_filter_map(m, batch: int | None = None, name: str = "map") -> np.ndarray:
    """Return ``m`` as a ``(batch, H, W)`` uint8 array of zeros and ones."""
    m = np.asarray(m)
    if m.ndim == 2:
        m = m[None]
    elif m.ndim == 4 and m.shape[1] == 1:
        m = m[:, 0]
    if m.ndim != 3:
        raise ValueError(f"{name} must be (H, W) or (batch, H, W), got shape {m.shape}")
    if m.size and not np.isin(m, (0, 1)).all():
        raise ValueError(f"{name} must be strictly binary")
    m = m.astype(np.uint8, copy=False)
    if batch is not None and m.shape[0] != batch:
        if m.shape[0] != 1:
            raise ValueError(f"{name} batch {m.shape[0]} does not match tensor batch {batch}")
        m = np.broadcast_to(m, (batch,) + m.shape[1:])
    return np.ascontiguousarray(m)


def output_size(size: int, kernel: int, stride: int) -> int:
    pad = kernel // 2
    return (size + 2 * pad - kernel) // stride + 1


def _windows(xp: np.ndarray, kernel: int, stride: int, out_h: int, out_w: int) -> np.ndarray:
    """View of shape ``(..., out_h, out_w, k, k)`` over the two trailing axes."""
    win = sliding_window_view(xp, (kernel, kernel), axis=(-2, -1))
    return win[..., ::stride, ::stride, :, :][..., :out_h, :out_w, :, :]


def _map_gate(m: np.ndarray, kernel: int, stride: int, out_h: int, out_w: int) -> np.ndarray:
    """Neighbour validity per output pixel as ``(batch, k*k, out_h*out_w)``."""
    pad = kernel // 2
    mp = np.pad(m, ((0, 0), (pad, pad), (pad, pad)))
    win = _windows(mp, kernel, stride, out_h, out_w)
    n = m.shape[0]
    return win.transpose(0, 3, 4, 1, 2).reshape(n, kernel * kernel, out_h * out_w)


def update_filter_map(m, kernel: int, stride: int) -> np.ndarray:
    """Validity dilation: an output pixel is valid iff any pixel it sees is.

    Pixels outside the image count as invalid. Shape follows the matching
    convolution output.
    """
    squeeze = np.asarray(m).ndim == 2
    m = as_filter_map(m)
    if kernel < 1 or kernel % 2 == 0 or stride < 1:
        raise ValueError("kernel must be odd and stride positive")
    n, h, w = m.shape
    oh, ow = output_size(h, kernel, stride), output_size(w, kernel, stride)
    pad = kernel // 2
    mp = np.pad(m, ((0, 0), (pad, pad), (pad, pad)))
    out = _windows(mp, kernel, stride, oh, ow).max(axis=(-2, -1)).astype(np.uint8)
    return out[0] if squeeze else out


# --------------------------------------------------------------------------
# Depth gate


def gaussian(x, sigma: float):
    return np.exp(-(np.asarray(x, dtype=np.float64) ** 2) / (2.0 * sigma * sigma)) / (sigma * math.sqrt(2.0 * math.pi))


def _gate_from_difference(diff, cfg: DepthGateConfig):
    g = gaussian(diff, cfg.sigma)
    if cfg.orientation == "similarity":
        return g >= cfg.tau
    return g < cfg.tau


def depth_gate(center_depth: float, neighbor_depth: float, cfg: DepthGateConfig = DepthGateConfig()) -> int:
    """1 if the neighbour contributes to the centre's convolution, else 0.

    With the default ``similarity`` orientation a neighbour is kept when its
    depth is close to the centre's (Gaussian response at least ``tau``); the
    ``literal`` orientation keeps the dissimilar ones instead.
    """
    return int(_gate_from_difference(abs(neighbor_depth - center_depth), cfg))


def depth_gates(guide: np.ndarray, kernel: int, cfg: DepthGateConfig) -> np.ndarray:
    """Per-centre neighbour gates ``(batch, k*k, H*W)`` for a stride-1 kernel."""
    guide = check_tensor(guide, "guide")
    if guide.shape[1] != 1:
        raise ValueError(f"guide depth must have one channel, got {guide.shape[1]}")
    n, _, h, w = guide.shape
    pad = kernel // 2
    g = guide[:, 0].astype(np.float64)
    gp = np.pad(g, ((0, 0), (pad, pad), (pad, pad)))
    inside = np.pad(np.ones_like(g, dtype=bool), ((0, 0), (pad, pad), (pad, pad)))
    win = _windows(gp, kernel, 1, h, w)
    diff = np.abs(win - g[:, :, :, None, None])
    gate = _gate_from_difference(diff, cfg) & _windows(inside, kernel, 1, h, w)
    return gate.transpose(0, 3, 4, 1, 2).reshape(n, kernel * kernel, h * w).astype(np.uint8)


# --------------------------------------------------------------------------
# Gated convolution core


def _im2col(x: np.ndarray, kernel: int, stride: int, out_h: int, out_w: int) -> np.ndarray:
    """Columns of shape ``(batch, channels, k*k, out_h*out_w)``."""
    pad = kernel // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = _windows(xp, kernel, stride, out_h, out_w)
    n, c = x.shape[:2]
    return win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c, kernel * kernel, out_h * out_w)


def _col2im(cols: np.ndarray, x_shape, kernel: int, stride: int, out_h: int, out_w: int) -> np.ndarray:
    n, c, h, w = x_shape
    pad = kernel // 2
    grad = np.zeros((n, c, h + 2 * pad + stride, w + 2 * pad + stride), dtype=cols.dtype)
    cols = cols.reshape(n, c, kernel, kernel, out_h, out_w)
    for dy in range(kernel):
        ys = slice(dy, dy + stride * out_h, stride)
        for dx in range(kernel):
            grad[:, :, ys, dx : dx + stride * out_w : stride] += cols[:, :, dy, dx]
    return grad[:, :, pad : pad + h, pad : pad + w]


def _gated_forward(x: np.ndarray, gate: np.ndarray | None, p: ConvParams, out_h: int, out_w: int, normalize: bool):
    n, c = x.shape[:2]
    if c != p.in_channels:
        raise ValueError(f"input has {c} channels, weights expect {p.in_channels}")
    k = p.kernel
    cols = _im2col(x, k, p.stride, out_h, out_w)
    if gate is not None:
        cols = cols * gate[:, None].astype(x.dtype)
    cols = cols.reshape(n, c * k * k, out_h * out_w)
    w2 = p.weight.reshape(p.out_channels, -1).astype(x.dtype, copy=False)
    raw = np.matmul(w2, cols)
    if normalize:
        if gate is None:
            count = np.full((n, out_h * out_w), float(k * k), dtype=x.dtype)
        else:
            count = gate.sum(axis=1, dtype=x.dtype)
        norm = (MASK_EPS + count).astype(x.dtype)
        raw /= norm[:, None, :]
    else:
        norm = None
    raw += p.bias.astype(x.dtype, copy=False)[None, :, None]
    out = raw.reshape(n, p.out_channels, out_h, out_w)
    cache = {"cols": cols, "gate": gate, "norm": norm, "params": p, "x_shape": x.shape, "out_hw": (out_h, out_w)}
    return out, cache


def _gated_backward(grad_out: np.ndarray, cache: dict):
    p: ConvParams = cache["params"]
    n, c, h, w = cache["x_shape"]
    out_h, out_w = cache["out_hw"]
    k = p.kernel
    if grad_out.shape != (n, p.out_channels, out_h, out_w):
        raise ValueError(f"grad_out shape {grad_out.shape} does not match forward output")
    g = grad_out.reshape(n, p.out_channels, out_h * out_w)
    grad_b = g.sum(axis=(0, 2))
    if cache["norm"] is not None:
        g = g / cache["norm"][:, None, :]
    cols = cache["cols"]
    grad_w = np.einsum("nop,nkp->ok", g, cols, optimize=True).reshape(p.weight.shape)
    w2 = p.weight.reshape(p.out_channels, -1).astype(g.dtype, copy=False)
    gcols = np.matmul(w2.T, g).reshape(n, c, k * k, out_h * out_w)
    if cache["gate"] is not None:
        gcols *= cache["gate"][:, None].astype(g.dtype)
    grad_x = _col2im(gcols, (n, c, h, w), k, p.stride, out_h, out_w)
    return np.ascontiguousarray(grad_x), grad_w, grad_b


# --------------------------------------------------------------------------
# Public convolutions


def region_adaptive_conv_forward(x, m, p: ConvParams):
    """Convolution renormalized by the number of valid neighbours.

    ``m`` gates every input channel alike; pixels outside the image are
    treated as invalid, so borders follow the same rule as holes.
    """
    x = check_tensor(x, allow_empty=False)
    m = as_filter_map(m, x.shape[0])
    if m.shape[1:] != x.shape[2:]:
        raise ValueError(f"map shape {m.shape[1:]} does not match tensor spatial shape {x.shape[2:]}")
    k, s = p.kernel, p.stride
    oh, ow = output_size(x.shape[2], k, s), output_size(x.shape[3], k, s)
    gate = _map_gate(m, k, s, oh, ow)
    return _gated_forward(x, gate, p, oh, ow, normalize=True)


def region_adaptive_conv_backward(grad_out, cache):
    return _gated_backward(grad_out, cache)


def depth_adaptive_conv_forward(x, guide, p: ConvParams, cfg: DepthGateConfig = DepthGateConfig(), gates=None):
    """Convolution whose neighbour gates come from guide-depth similarity.

    ``gates`` may carry precomputed :func:`depth_gates` output, which layers
    sharing a guide and kernel size reuse.
    """
    x = check_tensor(x, allow_empty=False)
    if p.stride != 1:
        raise ValueError("depth-adaptive convolution requires stride 1")
    h, w = x.shape[2:]
    if gates is None:
        guide = check_tensor(guide, "guide")
        if guide.shape[0] != x.shape[0] or guide.shape[2:] != x.shape[2:]:
            raise ValueError(f"guide shape {guide.shape} does not match tensor shape {x.shape}")
        gates = depth_gates(guide, p.kernel, cfg)
    elif gates.shape != (x.shape[0], p.kernel * p.kernel, h * w):
        raise ValueError(f"precomputed gates have shape {gates.shape}")
    return _gated_forward(x, gates, p, h, w, normalize=True)


def depth_adaptive_conv_backward(grad_out, cache):
    return _gated_backward(grad_out, cache)


def conv_forward(x, p: ConvParams):
    """Plain zero-padded ("same") convolution without renormalization."""
    x = check_tensor(x, allow_empty=False)
    k, s = p.kernel, p.stride
    oh, ow = output_size(x.shape[2], k, s), output_size(x.shape[3], k, s)
    return _gated_forward(x, None, p, oh, ow, normalize=False)


def conv_backward(grad_out, cache):
    return _gated_backward(grad_out, cache)


# --------------------------------------------------------------------------
# Activations and normalization


def leaky_relu_forward(x, slope: float = LEAKY_SLOPE):
    x = np.asarray(x)
    positive = x > 0
    return np.where(positive, x, slope * x).astype(x.dtype, copy=False), (positive, slope)


def leaky_relu_backward(grad_out, cache):
    positive, slope = cache
    return np.where(positive, grad_out, slope * grad_out).astype(grad_out.dtype, copy=False)


def leaky_relu(x, slope: float = LEAKY_SLOPE):
    return leaky_relu_forward(x, slope)[0]


def tanh_forward(x):
    y = np.tanh(x)
    return y, y


def tanh_backward(grad_out, y):
    return grad_out * (1.0 - y * y)


def batch_norm_forward(x, st: BatchNormState, training: bool = True):
    """Per-channel normalization over batch and spatial axes.

    In training mode the batch statistics are used and the running
    statistics are updated in place.
    """
    x = check_tensor(x, allow_empty=False)
    if x.shape[1] != st.channels:
        raise ValueError(f"input has {x.shape[1]} channels, batch norm state has {st.channels}")
    dt = x.dtype
    if training:
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        st.running_mean[...] = st.momentum * st.running_mean + (1 - st.momentum) * mean
        st.running_var[...] = st.momentum * st.running_var + (1 - st.momentum) * var
    else:
        mean, var = st.running_mean.astype(dt), st.running_var.astype(dt)
    inv_std = (1.0 / np.sqrt(var + st.eps)).astype(dt)
    xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = st.gamma.astype(dt)[None, :, None, None] * xhat + st.beta.astype(dt)[None, :, None, None]
    return out, {"xhat": xhat, "inv_std": inv_std, "gamma": st.gamma.astype(dt), "training": training}


def batch_norm_backward(grad_out, cache):
    """Returns ``(grad_x, grad_gamma, grad_beta)``."""
    xhat, inv_std, gamma = cache["xhat"], cache["inv_std"], cache["gamma"]
    grad_beta = grad_out.sum(axis=(0, 2, 3))
    grad_gamma = (grad_out * xhat).sum(axis=(0, 2, 3))
    g = grad_out * gamma[None, :, None, None]
    if not cache["training"]:
        return g * inv_std[None, :, None, None], grad_gamma, grad_beta
    count = grad_out.shape[0] * grad_out.shape[2] * grad_out.shape[3]
    mean_g = g.sum(axis=(0, 2, 3)) / count
    mean_gx = (g * xhat).sum(axis=(0, 2, 3)) / count
    grad_x = (g - mean_g[None, :, None, None] - xhat * mean_gx[None, :, None, None]) * inv_std[None, :, None, None]
    return grad_x, grad_gamma, grad_beta


# --------------------------------------------------------------------------
# Sub-pixel shuffle


def pixel_shuffle(x, r: int):
    """Move ``r*r`` channel groups onto an ``r``-times finer grid."""
    x = check_tensor(x)
    n, c, h, w = x.shape
    if r < 1 or c % (r * r):
        raise ValueError(f"channels ({c}) must be divisible by r^2 ({r * r})")
    oc = c // (r * r)
    return np.ascontiguousarray(x.reshape(n, oc, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, oc, h * r, w * r))


def pixel_unshuffle(x, r: int):
    """Inverse permutation of :func:`pixel_shuffle` (and its backward pass)."""
    x = check_tensor(x)
    n, c, h, w = x.shape
    if r < 1 or h % r or w % r:
        raise ValueError(f"spatial dims {h}x{w} must be divisible by r ({r})")
    return np.ascontiguousarray(x.reshape(n, c, h // r, r, w // r, r).transpose(0, 1, 3, 5, 2, 4).reshape(n, c * r * r, h // r, w // r))


pixel_shuffle_backward = pixel_unshuffle
