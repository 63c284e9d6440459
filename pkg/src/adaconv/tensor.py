"""Dense NCHW tensor helpers.

Tensors are plain ``numpy.ndarray`` objects with four axes
``(batch, channels, height, width)`` in C order. Production paths use
float32; float64 inputs are carried through unchanged so gradient checks can
run in double precision.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

DTYPE = np.float32


class Shape(NamedTuple):
    batch: int
    channels: int
    height: int
    width: int

    @property
    def size(self) -> int:
        return self.batch * self.channels * self.height * self.width

    @property
    def is_empty(self) -> bool:
        return self.size == 0


def shape_of(x: np.ndarray) -> Shape:
    return Shape(*check_tensor(x).shape)


def check_tensor(x, name: str = "x", allow_empty: bool = True) -> np.ndarray:
    """Validate a 4-axis tensor and return it as a C-contiguous array.

    Integer inputs are promoted to float32. Floating inputs keep their
    precision.
    """
    x = np.asarray(x)
    if x.ndim != 4:
        raise ValueError(f"{name} must have 4 axes (batch, channels, height, width), got shape {x.shape}")
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(DTYPE)
    if not allow_empty and x.size == 0:
        raise ValueError(f"{name} is empty (shape {x.shape})")
    return np.ascontiguousarray(x)


def zeros(shape, dtype=DTYPE) -> np.ndarray:
    return np.zeros(tuple(shape), dtype=dtype)


def concat_channels(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Stack ``b``'s channels after ``a``'s."""
    a = check_tensor(a, "a")
    b = check_tensor(b, "b")
    if (a.shape[0], a.shape[2], a.shape[3]) != (b.shape[0], b.shape[2], b.shape[3]):
        raise ValueError(f"cannot concatenate channels of {a.shape} and {b.shape}")
    return np.concatenate([a, b.astype(a.dtype, copy=False)], axis=1)


def split_channels(x: np.ndarray, index: int) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`concat_channels`; also the backward pass of it."""
    x = check_tensor(x)
    if not 0 <= index <= x.shape[1]:
        raise ValueError(f"split index {index} outside [0, {x.shape[1]}]")
    return np.ascontiguousarray(x[:, :index]), np.ascontiguousarray(x[:, index:])


def upsample_nearest(x: np.ndarray, factor: int) -> np.ndarray:
    x = check_tensor(x)
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    if factor == 1:
        return x.copy()
    return x.repeat(factor, axis=2).repeat(factor, axis=3)


def upsample_nearest_backward(grad_out: np.ndarray, factor: int) -> np.ndarray:
    """Sum each ``factor x factor`` output block back onto its source pixel."""
    n, c, h, w = grad_out.shape
    if h % factor or w % factor:
        raise ValueError(f"gradient shape {grad_out.shape} not divisible by factor {factor}")
    return grad_out.reshape(n, c, h // factor, factor, w // factor, factor).sum(axis=(3, 5))


def pad_zero(x: np.ndarray, top: int, bottom: int, left: int, right: int) -> np.ndarray:
    x = check_tensor(x)
    if min(top, bottom, left, right) < 0:
        raise ValueError("padding amounts must be non-negative")
    return np.pad(x, ((0, 0), (0, 0), (top, bottom), (left, right)))


def crop(x: np.ndarray, top: int, bottom: int, left: int, right: int) -> np.ndarray:
    """Remove a border; the backward pass of :func:`pad_zero`."""
    h, w = x.shape[2], x.shape[3]
    return np.ascontiguousarray(x[:, :, top : h - bottom, left : w - right])
