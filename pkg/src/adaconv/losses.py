"""Masked completion losses and the super-resolution loss.

Each function returns ``(value, gradient_wrt_prediction)``. Values are
accumulated in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LossWeights:
    valid: float = 1.0
    invalid: float = 6.0

    def __post_init__(self):
        if self.valid <= 0 or self.invalid <= 0:
            raise ValueError("loss weights must be positive")


def _mask_like(gt: np.ndarray, m) -> np.ndarray:
    m = np.asarray(m)
    if gt.ndim == 4 and m.shape == (gt.shape[0],) + gt.shape[2:]:
        m = m[:, None]
    try:
        m = np.broadcast_to(m, gt.shape)
    except ValueError:
        raise ValueError(f"mask shape {m.shape} does not match {gt.shape}") from None
    if m.size and not np.isin(m, (0, 1)).all():
        raise ValueError("mask must be binary")
    return m.astype(np.float64)


def _masked_mse(gt, out, weight):
    gt = np.asarray(gt)
    out = np.asarray(out)
    if gt.shape != out.shape:
        raise ValueError(f"shape mismatch: {gt.shape} vs {out.shape}")
    count = weight.sum()
    if count == 0:
        return 0.0, np.zeros_like(out)
    diff = out.astype(np.float64) - gt.astype(np.float64)
    value = float(((weight * diff) ** 2).sum() / count)
    grad = 2.0 * weight * diff / count  # weight is binary, so weight**2 == weight
    return value, grad.astype(out.dtype)


def loss_valid(gt, out, m):
    """Mean squared error over pixels whose map value is 1.

    An all-zero map gives 0 with a zero gradient.
    """
    return _masked_mse(gt, out, _mask_like(np.asarray(gt), m))


def loss_invalid(gt, out, m):
    """Mean squared error over pixels whose map value is 0."""
    return _masked_mse(gt, out, 1.0 - _mask_like(np.asarray(gt), m))


def loss_completion(gt, out, m, weights: LossWeights = LossWeights()):
    lv, gv = loss_valid(gt, out, m)
    li, gi = loss_invalid(gt, out, m)
    value = weights.valid * lv + weights.invalid * li
    grad = weights.valid * gv.astype(np.float64) + weights.invalid * gi.astype(np.float64)
    return value, grad.astype(np.asarray(out).dtype)


def loss_sr(gt_hr, out_hr, r: int):
    """Squared error summed over channels, averaged over the ``r*W x r*H`` grid."""
    gt_hr = np.asarray(gt_hr)
    out_hr = np.asarray(out_hr)
    if gt_hr.shape != out_hr.shape:
        raise ValueError(f"shape mismatch: {gt_hr.shape} vs {out_hr.shape}")
    if gt_hr.ndim != 4:
        raise ValueError("expected (batch, channels, rH, rW) tensors")
    n, _, h, w = gt_hr.shape
    if h % r or w % r:
        raise ValueError(f"high-resolution dims {h}x{w} not divisible by r={r}")
    pixels = n * (h // r) * (w // r) * r * r
    diff = out_hr.astype(np.float64) - gt_hr.astype(np.float64)
    value = float((diff**2).sum() / pixels)
    return value, (2.0 * diff / pixels).astype(out_hr.dtype)
