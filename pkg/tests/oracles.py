"""Independent reference implementations used as test oracles.

These evaluate the defining formulas directly, pixel by pixel, and share no
code with the package beyond plain numpy.
"""

from __future__ import annotations

import math

import numpy as np

EPS = 1e-5


def region_conv_loops(x, m, w, b, stride=1):
    """Fully nested loops over batch, output channel, rows, columns, input
    channel and kernel offsets."""
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    p = k // 2
    oh, ow = (h - 1) // stride + 1, (wd - 1) // stride + 1
    out = np.zeros((n, o, oh, ow))
    for bi in range(n):
        for oc in range(o):
            for i in range(oh):
                for j in range(ow):
                    acc, count = 0.0, 0.0
                    for dy in range(k):
                        for dx in range(k):
                            y, xx = i * stride - p + dy, j * stride - p + dx
                            if 0 <= y < h and 0 <= xx < wd and m[bi, y, xx]:
                                count += 1.0
                                for ic in range(c):
                                    acc += w[oc, ic, dy, dx] * x[bi, ic, y, xx]
                    out[bi, oc, i, j] = b[oc] + acc / (EPS + count)
    return out


def region_conv_pixels(x, m, w, b, stride=1):
    """Loop over output pixels; each evaluates the gated, renormalized sum on
    its receptive field."""
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    p = k // 2
    oh, ow = (h - 1) // stride + 1, (wd - 1) // stride + 1
    xp = np.zeros((n, c, h + 2 * p, wd + 2 * p))
    xp[:, :, p : p + h, p : p + wd] = x
    mp = np.zeros((n, h + 2 * p, wd + 2 * p))
    mp[:, p : p + h, p : p + wd] = m
    out = np.zeros((n, o, oh, ow))
    for i in range(oh):
        for j in range(ow):
            ys, xs = i * stride, j * stride
            patch = xp[:, :, ys : ys + k, xs : xs + k]
            gate = mp[:, ys : ys + k, xs : xs + k]
            s = np.einsum("nckl,ockl->no", patch * gate[:, None], w)
            out[:, :, i, j] = b + s / (EPS + gate.sum(axis=(1, 2)))[:, None]
    return out


def gate_value(center, neighbor, sigma=0.0028, tau=1.0, orientation="similarity"):
    d = abs(center - neighbor)
    g = math.exp(-d * d / (2 * sigma * sigma)) / (sigma * math.sqrt(2 * math.pi))
    return int(g >= tau) if orientation == "similarity" else int(g < tau)


def depth_conv_pixels(x, guide, w, b, sigma=0.0028, tau=1.0, orientation="similarity"):
    """Per output pixel: gate each neighbour by the Gaussian of its guide
    difference to the centre, then renormalize by the open-gate count."""
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    p = k // 2
    out = np.zeros((n, o, h, wd))
    for bi in range(n):
        for i in range(h):
            for j in range(wd):
                gate = np.zeros((k, k))
                for dy in range(k):
                    for dx in range(k):
                        y, xx = i - p + dy, j - p + dx
                        if 0 <= y < h and 0 <= xx < wd:
                            gate[dy, dx] = gate_value(guide[bi, 0, i, j], guide[bi, 0, y, xx], sigma, tau, orientation)
                patch = np.zeros((c, k, k))
                y0, y1 = max(i - p, 0), min(i + p + 1, h)
                x0, x1 = max(j - p, 0), min(j + p + 1, wd)
                patch[:, y0 - (i - p) : y1 - (i - p), x0 - (j - p) : x1 - (j - p)] = x[bi, :, y0:y1, x0:x1]
                s = np.einsum("ckl,ockl->o", patch * gate, w)
                out[bi, :, i, j] = b + s / (EPS + gate.sum())
    return out


def update_map_loops(m, k, stride):
    h, w = m.shape
    p = k // 2
    oh, ow = (h - 1) // stride + 1, (w - 1) // stride + 1
    out = np.zeros((oh, ow), dtype=np.uint8)
    for i in range(oh):
        for j in range(ow):
            y0, x0 = i * stride - p, j * stride - p
            block = m[max(y0, 0) : max(y0 + k, 0), max(x0, 0) : max(x0 + k, 0)]
            out[i, j] = 1 if block.any() else 0
    return out


def bilateral_loops(depth, rgb, window=9, sigma_s=7.0, sigma_r=5.0):
    """Joint bilateral filter: depth (H, W), rgb (H, W, 3)."""
    h, w = depth.shape
    r = window // 2
    rgb = rgb.astype(np.float64)
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            num = den = 0.0
            for y in range(max(i - r, 0), min(i + r + 1, h)):
                for x in range(max(j - r, 0), min(j + r + 1, w)):
                    gs = math.exp(-((y - i) ** 2 + (x - j) ** 2) / (2 * sigma_s**2))
                    diff = rgb[y, x] - rgb[i, j]
                    gr = math.exp(-float(diff @ diff) / (2 * sigma_r**2))
                    num += gs * gr * depth[y, x]
                    den += gs * gr
            out[i, j] = num / den
    return out


def spatial_gaussian_smooth(depth, window=9, sigma_s=7.0):
    """Normalized Gaussian smoothing over the in-image part of each window,
    built from separable 1-D kernels."""
    h, w = depth.shape
    r = window // 2
    g = np.exp(-np.arange(-r, r + 1) ** 2 / (2 * sigma_s**2))

    def blur(a):
        pa = np.pad(a, r)
        rows = np.zeros((h, w + 2 * r))
        for t in range(window):
            rows += g[t] * pa[t : t + h, :]
        out = np.zeros((h, w))
        for t in range(window):
            out += g[t] * rows[:, t : t + w]
        return out

    return blur(depth.astype(np.float64)) / blur(np.ones((h, w)))


def pixel_shuffle_loops(x, r):
    n, c, h, w = x.shape
    out = np.zeros((n, c // (r * r), h * r, w * r), dtype=x.dtype)
    for b in range(n):
        for ch in range(c // (r * r)):
            for i in range(h):
                for j in range(w):
                    for dy in range(r):
                        for dx in range(r):
                            out[b, ch, i * r + dy, j * r + dx] = x[b, ch * r * r + dy * r + dx, i, j]
    return out
