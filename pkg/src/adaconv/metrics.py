"""Masked error statistics and error-map rendering."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EXCLUDED = -1.0  # error-map sentinel for pixels outside the evaluation mask
DEFAULT_CAP = 0.1


@dataclass
class ErrorReport:
    rmse: float
    psnr: float
    mean_abs: float
    max_abs: float
    count: int
    error_map: np.ndarray

    def as_record(self) -> dict:
        return {
            "rmse": self.rmse,
            "psnr": self.psnr,
            "mean_abs": self.mean_abs,
            "max_abs": self.max_abs,
            "count": self.count,
        }

    def format_record(self) -> str:
        """One line of ``key=value`` pairs."""
        return " ".join(f"{k}={v}" for k, v in self.as_record().items())


def psnr_from_mse(mse: float, peak: float = 1.0) -> float:
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def masked_errors(gt, pred, m=None) -> ErrorReport:
    """Errors between normalized depths over pixels with ``m == 1``.

    PSNR uses a peak of 1.0 and is ``inf`` when the evaluated pixels agree
    exactly.
    """
    gt = np.asarray(gt, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if gt.shape != pred.shape:
        raise ValueError(f"shape mismatch: {gt.shape} vs {pred.shape}")
    if m is None:
        mask = np.ones(gt.shape, dtype=bool)
    else:
        mask = np.broadcast_to(np.asarray(m), gt.shape).astype(bool)
    count = int(mask.sum())
    if count == 0:
        raise ValueError("no pixels to evaluate: mask is empty")
    abs_err = np.abs(gt - pred)
    sq_sum = float(np.sum(abs_err[mask] ** 2, dtype=np.float64))
    mse = sq_sum / count
    return ErrorReport(
        rmse=math.sqrt(mse),
        psnr=psnr_from_mse(mse),
        mean_abs=float(abs_err[mask].mean()),
        max_abs=float(abs_err[mask].max()),
        count=count,
        error_map=np.where(mask, abs_err, EXCLUDED),
    )


def _ramp(t: np.ndarray) -> np.ndarray:
    """Blue -> cyan -> green -> yellow -> red for ``t`` in [0, 1]."""
    stops = np.array(
        [[0, 0, 255], [0, 255, 255], [0, 255, 0], [255, 255, 0], [255, 0, 0]],
        dtype=np.float64,
    )
    pos = np.clip(t, 0.0, 1.0) * (len(stops) - 1)
    lo = np.minimum(np.floor(pos).astype(int), len(stops) - 2)
    frac = (pos - lo)[..., None]
    return stops[lo] * (1 - frac) + stops[lo + 1] * frac


def error_colormap(report: ErrorReport, cap: float = DEFAULT_CAP) -> np.ndarray:
    """Render the error map as an ``(H, W, 3)`` uint8 image.

    Errors map linearly from blue (0) to red (``cap`` and above); excluded
    pixels are black.
    """
    if cap <= 0:
        raise ValueError("cap must be positive")
    err = np.asarray(report.error_map)
    err = err.reshape(err.shape[-2:]) if err.size == err.shape[-1] * err.shape[-2] else err
    rgb = np.rint(_ramp(np.maximum(err, 0.0) / cap)).astype(np.uint8)
    rgb[err == EXCLUDED] = 0
    return rgb
