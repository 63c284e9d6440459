import numpy as np
import pytest

from adaconv.losses import LossWeights, loss_completion, loss_invalid, loss_sr, loss_valid

GT = np.array([0.5, 0.5, 0.2, 0.8]).reshape(1, 1, 2, 2)
OUT = np.array([0.4, 0.7, 0.2, 0.8]).reshape(1, 1, 2, 2)
OUT2 = np.array([0.4, 0.7, 0.3, 0.8]).reshape(1, 1, 2, 2)
M = np.array([1, 1, 0, 0], np.uint8).reshape(1, 2, 2)


def test_valid_example():
    assert loss_valid(GT, OUT, M)[0] == pytest.approx(0.025, abs=1e-15)


def test_invalid_examples():
    assert loss_invalid(GT, OUT, M)[0] == 0.0
    assert loss_invalid(GT, OUT2, M)[0] == pytest.approx(0.005, abs=1e-15)


def test_completion_example():
    assert loss_completion(GT, OUT2, M)[0] == pytest.approx(0.055, abs=1e-15)


def test_sr_example():
    gt = np.zeros((1, 1, 2, 2))
    out = gt.copy()
    out[0, 0, 1, 0] = 0.1
    assert loss_sr(gt, out, 2)[0] == pytest.approx(0.0025, abs=1e-15)


def test_sr_quadratic_scaling(rng):
    gt = rng.random((1, 1, 4, 4))
    d = rng.standard_normal((1, 1, 4, 4)) * 0.01
    assert loss_sr(gt, gt + 2 * d, 2)[0] == pytest.approx(4 * loss_sr(gt, gt + d, 2)[0], rel=1e-10)


def test_identical_inputs_are_zero(rng):
    x = rng.random((2, 1, 4, 4))
    m = (rng.random((2, 4, 4)) > 0.5).astype(np.uint8)
    assert loss_valid(x, x, m)[0] == loss_invalid(x, x, m)[0] == loss_completion(x, x, m)[0] == 0.0
    assert loss_sr(x, x, 2)[0] == 0.0


def test_full_mask_is_mse(rng):
    a, b = rng.random((1, 1, 3, 5)), rng.random((1, 1, 3, 5))
    assert loss_valid(a, b, np.ones((1, 3, 5)))[0] == pytest.approx(((a - b) ** 2).mean(), rel=1e-12)


def test_valid_invalid_symmetry(rng):
    a, b = rng.random((1, 1, 4, 4)), rng.random((1, 1, 4, 4))
    m = (rng.random((1, 4, 4)) > 0.5).astype(np.uint8)
    assert loss_valid(a, b, m)[0] == pytest.approx(loss_invalid(a, b, 1 - m)[0], rel=1e-12)


def test_degenerate_masks_give_zero():
    a, b = np.zeros((1, 1, 2, 2)), np.ones((1, 1, 2, 2))
    value, grad = loss_valid(a, b, np.zeros((1, 2, 2)))
    assert value == 0.0 and not grad.any()
    value, grad = loss_invalid(a, b, np.ones((1, 2, 2)))
    assert value == 0.0 and not grad.any()


def test_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(valid=0.0)


def test_default_weights():
    w = LossWeights()
    assert (w.valid, w.invalid) == (1.0, 6.0)
