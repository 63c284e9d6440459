"""Finite-difference checks of the hand-written backward passes.

Every check draws a random float64 instance, reduces the op's output to the
scalar ``sum(output * R)`` for a fixed random ``R``, and compares the
analytic gradients against central differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import losses, ops
from .networks import CompletionConfig, CompletionNet, SRConfig, SuperResolutionNet, init_weights

DEFAULT_STEP = 1e-6
NET_STEP = 1e-5  # whole-network checks: deep products make some gradients ~1e-5
ABS_FLOOR = 1e-6


@dataclass
class GradCheckReport:
    name: str
    errors: dict[str, float] = field(default_factory=dict)
    tolerance: float = 1e-4

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance

    def format(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        parts = " ".join(f"{k}={v:.3e}" for k, v in self.errors.items())
        return f"{status} {self.name} max_rel_err={self.max_error:.3e} tol={self.tolerance:g} {parts}"


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = ABS_FLOOR) -> float:
    """Largest entrywise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float((np.abs(a - n) / denom).max(initial=0.0))


def numerical_gradient(f: Callable[[], float], x: np.ndarray, step: float = DEFAULT_STEP, indices=None) -> np.ndarray:
    """Central differences of ``f`` w.r.t. ``x`` (perturbed in place, then restored)."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size) if indices is None else indices:
        orig = flat[i]
        flat[i] = orig + step
        fp = f()
        flat[i] = orig - step
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * step)
    return grad


def check_gradients(
    name: str,
    f: Callable[[], float],
    variables: dict[str, np.ndarray],
    analytic: dict[str, np.ndarray],
    tolerance: float = 1e-4,
    step: float = DEFAULT_STEP,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Compare ``analytic[k]`` against finite differences of ``f`` w.r.t.
    ``variables[k]``; optionally on a random subset of entries per tensor."""
    rng = rng if rng is not None else np.random.default_rng(0)
    report = GradCheckReport(name, tolerance=tolerance)
    for key, x in variables.items():
        idx = None
        if max_entries is not None and x.size > max_entries:
            idx = rng.choice(x.size, size=max_entries, replace=False)
        num = numerical_gradient(f, x, step, idx)
        ana = np.asarray(analytic[key], dtype=np.float64)
        if idx is not None:
            report.errors[key] = relative_error(ana.reshape(-1)[idx], num.reshape(-1)[idx])
        else:
            report.errors[key] = relative_error(ana, num)
    return report


# --------------------------------------------------------------------------
# Per-op instances


def _conv_params(rng, out_ch, in_ch, k, stride=1):
    return ops.ConvParams(rng.standard_normal((out_ch, in_ch, k, k)), rng.standard_normal(out_ch), stride)


def check_region_conv(rng, tolerance=1e-4) -> GradCheckReport:
    n, c, o = 2, int(rng.integers(1, 4)), int(rng.integers(1, 4))
    h, w = int(rng.integers(4, 9)), int(rng.integers(4, 9))
    k = int(rng.choice([1, 3, 5]))
    stride = int(rng.integers(1, 3))
    x = rng.standard_normal((n, c, h, w))
    m = (rng.random((n, h, w)) > 0.4).astype(np.uint8)
    p = _conv_params(rng, o, c, k, stride)
    out, cache = ops.region_adaptive_conv_forward(x, m, p)
    r = rng.standard_normal(out.shape)
    gx, gw, gb = ops.region_adaptive_conv_backward(r, cache)

    def f():
        return float((ops.region_adaptive_conv_forward(x, m, p)[0] * r).sum())

    return check_gradients("region-conv", f, {"x": x, "weight": p.weight, "bias": p.bias}, {"x": gx, "weight": gw, "bias": gb}, tolerance)


def check_depth_conv(rng, tolerance=1e-4) -> GradCheckReport:
    n, c, o = 2, int(rng.integers(1, 4)), int(rng.integers(1, 4))
    h, w = int(rng.integers(4, 9)), int(rng.integers(4, 9))
    k = int(rng.choice([1, 3, 5]))
    x = rng.standard_normal((n, c, h, w))
    # plateaus plus jitter: some gates open, some closed
    guide = rng.integers(0, 3, size=(n, 1, h, w)) * 0.3 + rng.uniform(0, 0.006, size=(n, 1, h, w))
    p = _conv_params(rng, o, c, k)
    cfg = ops.DepthGateConfig()
    out, cache = ops.depth_adaptive_conv_forward(x, guide, p, cfg)
    r = rng.standard_normal(out.shape)
    gx, gw, gb = ops.depth_adaptive_conv_backward(r, cache)

    def f():
        return float((ops.depth_adaptive_conv_forward(x, guide, p, cfg)[0] * r).sum())

    return check_gradients("depth-conv", f, {"x": x, "weight": p.weight, "bias": p.bias}, {"x": gx, "weight": gw, "bias": gb}, tolerance)


def check_conv1x1(rng, tolerance=1e-4) -> GradCheckReport:
    x = rng.standard_normal((2, 3, 5, 6))
    p = _conv_params(rng, 2, 3, 1)
    out, cache = ops.conv_forward(x, p)
    r = rng.standard_normal(out.shape)
    gx, gw, gb = ops.conv_backward(r, cache)

    def f():
        return float((ops.conv_forward(x, p)[0] * r).sum())

    return check_gradients("conv1x1", f, {"x": x, "weight": p.weight, "bias": p.bias}, {"x": gx, "weight": gw, "bias": gb}, tolerance)


def check_batch_norm(rng, tolerance=1e-4, training=True) -> GradCheckReport:
    c = 3
    x = rng.standard_normal((3, c, 4, 5)) * 2.0 + 1.0
    st = ops.BatchNormState(
        gamma=rng.standard_normal(c), beta=rng.standard_normal(c),
        running_mean=rng.standard_normal(c), running_var=rng.uniform(0.5, 2.0, c),
    )

    def fresh():
        return ops.BatchNormState(st.gamma, st.beta, st.running_mean.copy(), st.running_var.copy())

    out, cache = ops.batch_norm_forward(x, fresh(), training)
    r = rng.standard_normal(out.shape)
    gx, gg, gb = ops.batch_norm_backward(r, cache)

    def f():
        return float((ops.batch_norm_forward(x, fresh(), training)[0] * r).sum())

    name = "batch-norm" if training else "batch-norm-infer"
    return check_gradients(name, f, {"x": x, "gamma": st.gamma, "beta": st.beta}, {"x": gx, "gamma": gg, "beta": gb}, tolerance)


def check_leaky_relu(rng, tolerance=1e-4) -> GradCheckReport:
    x = rng.standard_normal((2, 2, 4, 4))
    x[np.abs(x) < 1e-3] = 0.5  # keep away from the kink
    out, cache = ops.leaky_relu_forward(x)
    r = rng.standard_normal(out.shape)
    gx = ops.leaky_relu_backward(r, cache)
    return check_gradients("leaky-relu", lambda: float((ops.leaky_relu(x) * r).sum()), {"x": x}, {"x": gx}, tolerance)


def check_pixel_shuffle(rng, tolerance=1e-4) -> GradCheckReport:
    ratio = int(rng.choice([2, 4]))
    x = rng.standard_normal((2, 2 * ratio * ratio, 3, 2))
    out = ops.pixel_shuffle(x, ratio)
    r = rng.standard_normal(out.shape)
    gx = ops.pixel_shuffle_backward(r, ratio)
    return check_gradients("pixel-shuffle", lambda: float((ops.pixel_shuffle(x, ratio) * r).sum()), {"x": x}, {"x": gx}, tolerance)


def check_losses(rng, tolerance=1e-6) -> list[GradCheckReport]:
    gt = rng.random((2, 1, 5, 6))
    out = rng.random((2, 1, 5, 6))
    m = (rng.random((2, 5, 6)) > 0.5).astype(np.uint8)
    reports = []
    for name, fn in (
        ("loss-valid", lambda: losses.loss_valid(gt, out, m)),
        ("loss-invalid", lambda: losses.loss_invalid(gt, out, m)),
        ("loss-completion", lambda: losses.loss_completion(gt, out, m)),
        ("loss-sr", lambda: losses.loss_sr(gt, out, 1)),
    ):
        _, grad = fn()
        reports.append(check_gradients(name, lambda fn=fn: fn()[0], {"out": out}, {"out": grad}, tolerance))
    hr_gt = rng.random((1, 2, 4, 4))
    hr_out = rng.random((1, 2, 4, 4))
    _, grad = losses.loss_sr(hr_gt, hr_out, 2)
    reports.append(check_gradients("loss-sr-r2", lambda: losses.loss_sr(hr_gt, hr_out, 2)[0], {"out": hr_out}, {"out": grad}, tolerance))
    return reports


def check_completion_net(rng, tolerance=1e-3, size: int = 32, max_entries: int | None = 40) -> GradCheckReport:
    """Miniature two-level completion network (four adaptive convs)."""
    cfg = CompletionConfig(encoder_kernels=(3, 3), encoder_channels=(3, 4), decoder_channels=(3,))
    net = CompletionNet(cfg)
    w = init_weights(net.spec, rng, dtype=np.float64)
    _random_biases(w, rng)
    x = rng.random((2, 1, size, size))
    m = (rng.random((2, size, size)) > 0.3).astype(np.uint8)
    x *= m[:, None]
    saved = {k: v.copy() for k, v in w.tensors.items() if "running" in k}

    def run():
        for k, v in saved.items():
            w.tensors[k][...] = v
        return net.forward(w, x, m, training=True)

    out, _, cache = run()
    r = rng.standard_normal(out.shape)
    grads, gx = net.backward(w, r, cache)
    variables = dict(w.trainable(), x=x)
    analytic = dict(grads, x=gx)
    return check_gradients(
        "completion-mini", lambda: float((run()[0] * r).sum()), variables, analytic, tolerance,
        step=NET_STEP, max_entries=max_entries, rng=rng,
    )


def _random_biases(w, rng, scale=0.5):
    # zero biases pile pre-activations up at the LeakyReLU kink
    for k, v in w.tensors.items():
        if k.endswith(".bias"):
            v[...] = rng.normal(0.0, scale, v.shape)


def check_sr_net(rng, tolerance=1e-3, max_entries: int | None = 20) -> GradCheckReport:
    """Narrow super-resolution network (8 features, 2 blocks, ratio 2)."""
    cfg = SRConfig(ratio=2, features=8, blocks=2)
    net = SuperResolutionNet(cfg)
    w = init_weights(net.spec, rng, dtype=np.float64)
    _random_biases(w, rng)
    # plateaus start at 0.2: near-zero depth gives near-zero pre-activations,
    # which central differences would straddle
    depth = 0.2 + rng.integers(0, 3, size=(2, 1, 6, 6)) * 0.3 + rng.uniform(0, 0.004, size=(2, 1, 6, 6))
    out, cache = net.forward(w, depth)
    r = rng.standard_normal(out.shape)
    grads, _ = net.backward(w, r, cache)
    return check_gradients(
        "superres-mini", lambda: float((net.forward(w, depth)[0] * r).sum()), w.trainable(), grads, tolerance,
        step=NET_STEP, max_entries=max_entries, rng=rng,
    )


OP_CHECKS: dict[str, Callable[[np.random.Generator], GradCheckReport]] = {
    "region-conv": check_region_conv,
    "depth-conv": check_depth_conv,
    "conv1x1": check_conv1x1,
    "batch-norm": check_batch_norm,
    "leaky-relu": check_leaky_relu,
    "pixel-shuffle": check_pixel_shuffle,
    "completion-net": check_completion_net,
    "superres-net": check_sr_net,
}


def grad_check(op: str, trials: int = 1, seed: int = 0, tolerance: float | None = None) -> list[GradCheckReport]:
    """Run ``trials`` random instances of the named check (or ``losses``)."""
    rng = np.random.default_rng(seed)
    reports = []
    for _ in range(trials):
        if op == "losses":
            reports += check_losses(rng, **({} if tolerance is None else {"tolerance": tolerance}))
        elif op in OP_CHECKS:
            kwargs = {} if tolerance is None else {"tolerance": tolerance}
            reports.append(OP_CHECKS[op](rng, **kwargs))
        else:
            raise KeyError(f"unknown op {op!r}; choose from {sorted([*OP_CHECKS, 'losses'])}")
    return reports
