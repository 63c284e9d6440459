"""Parameter-free RGB-guided bilateral refinement of a completed depth map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tensor import check_tensor


@dataclass(frozen=True)
class BilateralConfig:
    window: int = 9
    sigma_spatial: float = 7.0
    sigma_range: float = 5.0  # in 8-bit intensity units

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"window must be odd, got {self.window}")
        if self.sigma_spatial <= 0 or self.sigma_range <= 0:
            raise ValueError("sigmas must be positive")


def refine(depth, rgb, cfg: BilateralConfig = BilateralConfig()) -> np.ndarray:
    """Joint bilateral filter of ``depth`` guided by ``rgb``.

    Each output pixel is the average of the depths in its window, weighted by
    spatial distance and by the Euclidean RGB difference to the centre. Only
    window pixels inside the image take part. Gaussian prefactors cancel in
    the normalization and are omitted.
    """
    depth = check_tensor(depth, "depth", allow_empty=False)
    rgb = check_tensor(rgb, "rgb", allow_empty=False)
    if depth.shape[1] != 1 or rgb.shape[1] != 3:
        raise ValueError(f"expected 1-channel depth and 3-channel rgb, got {depth.shape} and {rgb.shape}")
    if depth.shape[0] != rgb.shape[0] or depth.shape[2:] != rgb.shape[2:]:
        raise ValueError(f"depth {depth.shape} and rgb {rgb.shape} are not aligned")

    n, _, h, w = depth.shape
    r = cfg.window // 2
    pad = ((0, 0), (0, 0), (r, r), (r, r))
    d = depth.astype(np.float64)
    img = rgb.astype(np.float64)
    dp = np.pad(d, pad)
    ip = np.pad(img, pad)
    inside = np.pad(np.ones((1, 1, h, w)), pad)

    num = np.zeros((n, 1, h, w))
    den = np.zeros((n, 1, h, w))
    inv_s = 1.0 / (2.0 * cfg.sigma_spatial**2)
    inv_r = 1.0 / (2.0 * cfg.sigma_range**2)
    for dy in range(cfg.window):
        for dx in range(cfg.window):
            ys, xs = slice(dy, dy + h), slice(dx, dx + w)
            spatial = np.exp(-((dy - r) ** 2 + (dx - r) ** 2) * inv_s)
            diff2 = ((ip[:, :, ys, xs] - img) ** 2).sum(axis=1, keepdims=True)
            weight = spatial * np.exp(-diff2 * inv_r) * inside[:, :, ys, xs]
            num += weight * dp[:, :, ys, xs]
            den += weight
    return (num / den).astype(depth.dtype)
