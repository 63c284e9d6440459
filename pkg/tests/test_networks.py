import numpy as np
import pytest

import oracles
from adaconv import ops
from adaconv.networks import (
    BilateralConfig,
    CompletionConfig,
    CompletionNet,
    SRConfig,
    SuperResolutionNet,
    encoder_maps,
    init_weights,
    refine,
)
from adaconv.networks.completion import build_spec


def centered_hole(size, side):
    m = np.ones((size, size), np.uint8)
    a = (size - side) // 2
    m[a : a + side, a : a + side] = 0
    return m


class TestCompletionLayers:
    def test_layer_table(self):
        spec = build_spec()
        enc = [spec[f"aconv{i}"] for i in range(1, 6)]
        assert [l.kernel for l in enc] == [7, 5, 3, 3, 3]
        assert [l.out_channels for l in enc] == [16, 32, 64, 128, 128]
        assert all(l.stride == 2 and l.batch_norm for l in enc)
        assert spec["aconv6"].in_channels == 128 + 128
        assert spec["aconv10"].in_channels == 16 + 1 and spec["aconv10"].out_channels == 1

    def test_weights_match_spec(self, rng):
        net = CompletionNet()
        w = init_weights(net.spec, rng)
        w.check_against(net.spec)
        del w.tensors["aconv3.bias"]
        with pytest.raises(ValueError):
            w.check_against(net.spec)

    def test_init_statistics(self):
        net = CompletionNet()
        w = init_weights(net.spec, np.random.default_rng(0))
        layer = net.spec["aconv7"]
        std = w.tensors["aconv7.weight"].std()
        assert std == pytest.approx(np.sqrt(2.0 / (layer.in_channels * 9)), rel=0.05)
        assert not w.tensors["aconv7.bias"].any()


class TestCompletionForward:
    def test_shapes_and_full_output_map(self, rng):
        net = CompletionNet()
        w = init_weights(net.spec, rng)
        m = centered_hole(64, 20)
        x = rng.random((1, 1, 64, 64)).astype(np.float32) * m
        out, out_map, _ = net.forward(w, x, m[None])
        assert out.shape == (1, 1, 64, 64) and out_map.all()
        clamped, _ = net.predict(w, x, m[None])
        assert clamped.min() >= 0 and clamped.max() <= 1

    def test_no_holes_finite_and_all_valid(self, rng):
        net = CompletionNet()
        w = init_weights(net.spec, rng)
        m = np.ones((1, 32, 32), np.uint8)
        out, out_map, _ = net.forward(w, rng.random((1, 1, 32, 32)), m)
        assert np.isfinite(out).all() and out_map.all()
        assert all(level.all() for level in encoder_maps(m))

    def test_divisibility_enforced(self, rng):
        net = CompletionNet()
        w = init_weights(net.spec, rng)
        with pytest.raises(ValueError):
            net.forward(w, np.zeros((1, 1, 48, 64)), np.ones((1, 48, 64)))

    def test_wrong_channels(self, rng):
        net = CompletionNet()
        w = init_weights(net.spec, rng)
        with pytest.raises(ValueError):
            net.forward(w, np.zeros((1, 2, 32, 32)), np.ones((1, 32, 32)))

    def test_rgb_variant_channels(self, rng):
        cfg = CompletionConfig(use_rgb=True)
        net = CompletionNet(cfg)
        w = init_weights(net.spec, rng)
        out, _, _ = net.forward(w, rng.random((1, 4, 32, 32)), np.ones((1, 32, 32)))
        assert out.shape == (1, 1, 32, 32)


class TestMaskClosure:
    @pytest.mark.parametrize("side", [1, 7, 31, 63])
    def test_holes_up_to_63_close_with_table_kernels(self, side):
        assert encoder_maps(centered_hole(256, side))[-1].all()

    @pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
    def test_bound_for_three_by_three_kernels(self, n):
        cfg = CompletionConfig(encoder_kernels=(3,) * n, encoder_channels=(4,) * n, decoder_channels=(4,) * (n - 1))
        bound = 2 ** (n + 1)
        assert encoder_maps(centered_hole(256, bound - 1), cfg)[-1].all()
        assert not encoder_maps(centered_hole(256, bound + 1), cfg)[-1].all()


class TestSuperResolution:
    @pytest.mark.parametrize("ratio", [2, 4])
    def test_output_shape_and_range(self, rng, ratio):
        net = SuperResolutionNet(SRConfig(ratio=ratio, features=16, blocks=2))
        w = init_weights(net.spec, rng)
        out = net.predict(w, rng.random((1, 1, 16, 16)).astype(np.float32))
        assert out.shape == (1, 1, 16 * ratio, 16 * ratio)
        assert out.min() >= 0 and out.max() <= 1

    def test_full_size_table_shape(self, rng):
        net = SuperResolutionNet()
        w = init_weights(net.spec, rng)
        assert net.predict(w, rng.random((1, 1, 64, 64)).astype(np.float32)).shape == (1, 1, 256, 256)

    def test_dense_block_channels(self):
        spec = SuperResolutionNet().spec
        assert [spec[f"block{b}.conv1"].in_channels for b in range(1, 6)] == [64, 128, 192, 256, 320]
        assert spec["aconv6"].in_channels == 384
        assert spec["aconv7"].in_channels == 128 and spec["conv_out"].in_channels == 128 // 16

    def test_bad_ratio(self):
        with pytest.raises(ValueError):
            SRConfig(ratio=3)

    def test_constant_input_gives_periodic_output(self, rng):
        net = SuperResolutionNet(SRConfig(ratio=2, features=8, blocks=2))
        w = init_weights(net.spec, rng, dtype=np.float64)
        for v in w.tensors.values():
            v[...] += rng.normal(0, 0.1, v.shape)
        # 34 px: the centre lies beyond the 13 px receptive-field radius from every border
        out = net.predict(w, np.full((1, 1, 34, 34), 0.4))[0, 0]
        interior = out[2 * 16 : 2 * 18, 2 * 16 : 2 * 18]
        cell = out[2 * 17 : 2 * 17 + 2, 2 * 17 : 2 * 17 + 2]
        np.testing.assert_allclose(interior, np.tile(cell, (2, 2)), atol=1e-12)

    def test_tiled_prediction_matches(self, rng):
        net = SuperResolutionNet(SRConfig(ratio=2, features=8, blocks=1))
        w = init_weights(net.spec, rng)
        d = rng.random((1, 1, 30, 23)).astype(np.float32)
        np.testing.assert_array_equal(net.predict(w, d), net.predict_tiled(w, d, tile=8))


class TestRefine:
    def test_constant_inputs_unchanged(self):
        d = np.full((1, 1, 12, 12), 0.3)
        c = np.full((1, 3, 12, 12), 80.0)
        np.testing.assert_allclose(refine(d, c), d, rtol=0, atol=1e-15)

    def test_constant_rgb_is_gaussian_smoothing(self, rng):
        d = rng.random((16, 16))
        c = np.full((1, 3, 16, 16), 120.0)
        out = refine(d[None, None], c)[0, 0]
        assert np.abs(out - oracles.spatial_gaussian_smooth(d)).max() <= 1e-6

    def test_matches_double_loop(self, rng):
        d = rng.random((16, 16))
        c = rng.integers(0, 256, (16, 16, 3))
        out = refine(d[None, None], np.transpose(c, (2, 0, 1))[None])[0, 0]
        assert np.abs(out - oracles.bilateral_loops(d, c)).max() <= 1e-6

    def test_misaligned(self):
        with pytest.raises(ValueError):
            refine(np.zeros((1, 1, 4, 4)), np.zeros((1, 3, 4, 5)))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            BilateralConfig(window=4)
        with pytest.raises(ValueError):
            BilateralConfig(sigma_range=0)


def test_gate_config_round_trip_through_network():
    cfg = SRConfig(gate=ops.DepthGateConfig(orientation="literal"))
    assert SuperResolutionNet(cfg).cfg.gate.orientation == "literal"
