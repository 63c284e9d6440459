import numpy as np
import pytest

from adaconv.tensor import (
    Shape,
    check_tensor,
    concat_channels,
    crop,
    pad_zero,
    shape_of,
    split_channels,
    upsample_nearest,
    upsample_nearest_backward,
)


def test_shape_value_type():
    assert shape_of(np.zeros((1, 2, 3, 4))) == Shape(1, 2, 3, 4)
    assert Shape(1, 2, 3, 4).size == 24
    assert Shape(1, 0, 3, 4).is_empty


def test_check_tensor_rejects_wrong_rank_and_empty():
    with pytest.raises(ValueError):
        check_tensor(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        check_tensor(np.zeros((1, 0, 2, 2)), allow_empty=False)
    assert check_tensor(np.zeros((1, 0, 2, 2))).shape == (1, 0, 2, 2)


def test_check_tensor_promotes_ints_to_float32():
    x = check_tensor(np.ones((1, 1, 2, 2), dtype=np.int64))
    assert x.dtype == np.float32 and x.flags.c_contiguous


def test_concat_places_b_after_a():
    a = np.arange(8, dtype=np.float32).reshape(1, 2, 2, 2)
    b = np.full((1, 1, 2, 2), 9.0, dtype=np.float32)
    out = concat_channels(a, b)
    assert out.shape == (1, 3, 2, 2)
    np.testing.assert_array_equal(out[:, 2], b[:, 0])


def test_concat_table_sizes():
    a = np.zeros((1, 128, 16, 16), np.float32)
    assert concat_channels(a, a).shape == (1, 256, 16, 16)


def test_concat_split_roundtrip():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((2, 2, 3, 3)).astype(np.float32)
    b = rng.standard_normal((2, 3, 3, 3)).astype(np.float32)
    a2, b2 = split_channels(concat_channels(a, b), 2)
    assert a2.tobytes() == a.tobytes() and b2.tobytes() == b.tobytes()


def test_concat_mismatch():
    with pytest.raises(ValueError):
        concat_channels(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 2, 3)))


def test_upsample_examples():
    x = np.full((1, 1, 1, 1), 3.0, np.float32)
    np.testing.assert_array_equal(upsample_nearest(x, 2), np.full((1, 1, 2, 2), 3.0))
    col = np.array([1.0, 2.0], np.float32).reshape(1, 1, 2, 1)
    np.testing.assert_array_equal(upsample_nearest(col, 2)[0, 0, :, 0], [1, 1, 2, 2])
    y = np.random.default_rng(1).random((1, 2, 3, 3)).astype(np.float32)
    assert upsample_nearest(y, 1).tobytes() == y.tobytes()


def test_upsample_backward_sums_blocks():
    g = np.arange(16, dtype=np.float64).reshape(1, 1, 4, 4)
    out = upsample_nearest_backward(g, 2)
    np.testing.assert_array_equal(out[0, 0], [[0 + 1 + 4 + 5, 2 + 3 + 6 + 7], [8 + 9 + 12 + 13, 10 + 11 + 14 + 15]])


def test_pad_examples():
    x = np.full((1, 1, 1, 1), 5.0, np.float32)
    p = pad_zero(x, 1, 1, 1, 1)
    assert p.shape == (1, 1, 3, 3) and p[0, 0, 1, 1] == 5 and p.sum() == 5
    y = np.ones((1, 1, 2, 2), np.float32)
    assert pad_zero(y, 0, 0, 0, 0).tobytes() == y.tobytes()
    top = pad_zero(y, 1, 0, 0, 0)
    assert top.shape == (1, 1, 3, 2) and not top[0, 0, 0].any()
    np.testing.assert_array_equal(crop(pad_zero(y, 1, 2, 3, 0), 1, 2, 3, 0), y)
    with pytest.raises(ValueError):
        pad_zero(y, -1, 0, 0, 0)
