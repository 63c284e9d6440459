import math

import numpy as np
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from adaconv import ops
from adaconv.losses import LossWeights, loss_completion, loss_invalid, loss_sr, loss_valid
from adaconv.metrics import masked_errors, psnr_from_mse
from adaconv.networks import refine
from adaconv.tensor import concat_channels, split_channels, upsample_nearest

unit = st.floats(0.0, 1.0, allow_nan=False, width=32)
kernels = st.sampled_from([1, 3, 5, 7])


def binary_maps(h=st.integers(1, 12), w=st.integers(1, 12)):
    return st.tuples(h, w).flatmap(lambda s: arrays(np.uint8, s, elements=st.integers(0, 1)))


def tensors(c=st.integers(1, 3), hw=st.integers(1, 6)):
    return st.tuples(st.integers(1, 2), c, hw, hw).flatmap(lambda s: arrays(np.float32, s, elements=unit))


@given(binary_maps(), kernels, st.integers(1, 2))
def test_filter_map_monotone(m, k, s):
    more = m.copy()
    more.flat[0] = 1
    a, b = ops.update_filter_map(m, k, s), ops.update_filter_map(more, k, s)
    assert (a <= b).all()
    if s == 1:
        assert (ops.update_filter_map(m, k, 1) >= m).all()


@given(binary_maps())
def test_filter_map_all_or_nothing(m):
    out = ops.update_filter_map(np.ones_like(m), 3, 2)
    assert out.all() and out.shape == (math.ceil(m.shape[0] / 2), math.ceil(m.shape[1] / 2))
    assert not ops.update_filter_map(np.zeros_like(m), 5, 1).any()


@given(st.sampled_from([2, 4]), st.integers(1, 3), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_shuffle_permutes(r, c, h, w, seed):
    x = np.random.default_rng(seed).random((1, c * r * r, h, w))
    y = ops.pixel_shuffle(x, r)
    assert y.shape == (1, c, h * r, w * r)
    np.testing.assert_array_equal(np.sort(x, axis=None), np.sort(y, axis=None))
    np.testing.assert_array_equal(ops.pixel_unshuffle(y, r), x)


@given(tensors(), st.sampled_from([1, 2, 3]), st.sampled_from([1, 2]))
def test_upsample_composes(x, a, b):
    np.testing.assert_array_equal(upsample_nearest(upsample_nearest(x, a), b), upsample_nearest(x, a * b))


@given(tensors(hw=st.just(3)), tensors(hw=st.just(3)), tensors(hw=st.just(3)))
def test_concat_associative(a, b, c):
    n = min(len(a), len(b), len(c))
    a, b, c = a[:n], b[:n], c[:n]
    left = concat_channels(concat_channels(a, b), c)
    np.testing.assert_array_equal(left, concat_channels(a, concat_channels(b, c)))
    head, tail = split_channels(left, a.shape[1])
    np.testing.assert_array_equal(head, a)


@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10), st.floats(0.1, 10))
def test_completion_loss_nonnegative_and_linear(seed, wv, wi):
    g = np.random.default_rng(seed)
    gt, out = g.random((2, 1, 4, 4)), g.random((2, 1, 4, 4))
    m = (g.random((2, 4, 4)) > 0.5).astype(np.uint8)
    base_v, base_i = loss_valid(gt, out, m)[0], loss_invalid(gt, out, m)[0]
    total = loss_completion(gt, out, m, LossWeights(wv, wi))[0]
    assert total >= 0
    assert math.isclose(total, wv * base_v + wi * base_i, rel_tol=1e-9, abs_tol=1e-15)


@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 4]))
def test_sr_loss_nonnegative(seed, r):
    g = np.random.default_rng(seed)
    assert loss_sr(g.random((1, 1, 8, 8)), g.random((1, 1, 8, 8)), r)[0] >= 0


@given(st.integers(0, 2**32 - 1))
def test_refine_stays_in_range(seed):
    g = np.random.default_rng(seed)
    d = g.random((1, 1, 10, 10))
    c = g.integers(0, 256, (1, 3, 10, 10)).astype(np.float64)
    out = refine(d, c)
    assert out.min() >= d.min() - 1e-6 and out.max() <= d.max() + 1e-6


@given(st.floats(1e-12, 1.0), st.floats(1e-12, 1.0))
def test_psnr_decreasing(a, b):
    if a < b:
        assert psnr_from_mse(a) >= psnr_from_mse(b)


@given(st.integers(0, 2**32 - 1))
def test_metric_identities(seed):
    g = np.random.default_rng(seed)
    gt, pred = g.random((6, 6)), g.random((6, 6))
    m = (g.random((6, 6)) > 0.3).astype(np.uint8)
    m[0, 0] = 1
    rep = masked_errors(gt, pred, m)
    sq = ((gt - pred) ** 2)[m.astype(bool)].sum()
    assert math.isclose(rep.rmse**2 * rep.count, sq, rel_tol=1e-9)
    smaller = m.copy()
    smaller[m.astype(bool).nonzero()[0][-1], m.astype(bool).nonzero()[1][-1]] = 0
    if smaller.any():
        assert masked_errors(gt, pred, smaller).count == rep.count - 1
