"""Tests for the feature pyramid neck and the segmentation head."""

import numpy as np
import pytest

from icmf import tensor as T
from icmf.config import ModelConfig
from icmf.head import FeaturePyramidNeck, SegmentationHead, binarize
from icmf.tensor import Tensor


def tiny_cfg(**overrides):
    base = dict(dim=8, heads=2, patch_size=4, image_side=16, shared_depth=1,
                cross_depth=1, second_depth=1, ffn_hidden=16,
                pyramid_channels=(4, 4, 4, 4), head_dim=4, variant="xy_x_to_y")
    base.update(overrides)
    return ModelConfig(**base)


class TestFeaturePyramidNeck:
    def setup_method(self):
        self.rng = np.random.default_rng(30)

    def test_level_shapes_are_4g_2g_g_and_half_g(self):
        cfg = tiny_cfg()
        neck = FeaturePyramidNeck(cfg, self.rng)
        grid = Tensor(self.rng.standard_normal((8, 4, 4)))
        p1, p2, p3, p4 = neck(grid)
        assert p1.shape == (4, 16, 16)
        assert p2.shape == (4, 8, 8)
        assert p3.shape == (4, 4, 4)
        assert p4.shape == (4, 2, 2)

    def test_channel_widths_follow_config(self):
        cfg = tiny_cfg(pyramid_channels=(3, 5, 6, 7))
        neck = FeaturePyramidNeck(cfg, self.rng)
        levels = neck(Tensor(self.rng.standard_normal((8, 4, 4))))
        assert [lv.shape[0] for lv in levels] == [3, 5, 6, 7]

    def test_indivisible_dim_rejected(self):
        with pytest.raises(ValueError, match="divisible by 4"):
            FeaturePyramidNeck(tiny_cfg(dim=6), self.rng)

    def test_coarsest_level_pools_2x2_neighborhoods(self):
        # level 4 downsamples with a stride-2 kernel-2 convolution: with the
        # kernel filled with a constant it must average (up to scale) each
        # 2x2 input block, independent of neighbors.
        cfg = tiny_cfg()
        neck = FeaturePyramidNeck(cfg, self.rng)
        neck.down4a.w.data[:] = 0.0
        neck.down4a.w.data[0, 0] = 0.25   # out-channel 0 averages in-channel 0
        neck.down4a.b.data[:] = 0.0
        grid = np.zeros((8, 4, 4))
        grid[0] = np.arange(16.0).reshape(4, 4)
        pre_gelu = np.zeros((2, 2))
        for i in range(2):
            for j in range(2):
                pre_gelu[i, j] = grid[0, 2 * i:2 * i + 2, 2 * j:2 * j + 2].mean()
        got = T.gelu(Tensor(pre_gelu[None]))
        feats = neck.out4(T.gelu(neck.down4a(Tensor(grid))))
        # compare through the same 1x1 output convolution
        expected = neck.out4(
            T.concat([got] + [Tensor(np.zeros((1, 2, 2)))] * 15, axis=0))
        np.testing.assert_allclose(feats.numpy(), expected.numpy(), atol=1e-10)

    def test_gradients_reach_all_parameters(self):
        neck = FeaturePyramidNeck(tiny_cfg(), self.rng)
        grid = Tensor(self.rng.standard_normal((8, 4, 4)))
        loss = sum((T.tsum(level ** 2) for level in neck(grid)),
                   start=Tensor(0.0))
        loss.backward()
        for name, p in neck.named_params():
            assert p.grad is not None, name


class TestSegmentationHead:
    def setup_method(self):
        self.rng = np.random.default_rng(31)
        self.cfg = tiny_cfg()

    def _pyramid(self, cfg=None):
        cfg = cfg or self.cfg
        g = cfg.grid_side
        c1, c2, c3, c4 = cfg.pyramid_channels
        return (Tensor(self.rng.standard_normal((c1, 4 * g, 4 * g))),
                Tensor(self.rng.standard_normal((c2, 2 * g, 2 * g))),
                Tensor(self.rng.standard_normal((c3, g, g))),
                Tensor(self.rng.standard_normal((c4, g // 2, g // 2))))

    def test_output_is_full_resolution_single_channel(self):
        head = SegmentationHead(self.cfg, self.rng)
        out = head(self._pyramid())
        assert out.shape == (1, 16, 16)

    def test_output_lies_strictly_inside_unit_interval(self):
        head = SegmentationHead(self.cfg, self.rng)
        out = head(self._pyramid()).numpy()
        assert (out > 0).all() and (out < 1).all()

    def test_constant_pyramid_gives_constant_map(self):
        # with spatially constant inputs every conv/upsample layer preserves
        # constancy, so the probability map must be a single value
        head = SegmentationHead(self.cfg, self.rng)
        g = self.cfg.grid_side
        pyramid = (Tensor(np.full((4, 4 * g, 4 * g), 0.3)),
                   Tensor(np.full((4, 2 * g, 2 * g), -0.8)),
                   Tensor(np.full((4, g, g), 1.1)),
                   Tensor(np.full((4, g // 2, g // 2), 0.05)))
        out = head(pyramid).numpy()
        np.testing.assert_allclose(out, out.flat[0], atol=1e-12)

    def test_upsample_factor_matches_patch_size(self):
        cfg = tiny_cfg(patch_size=8, image_side=32)
        head = SegmentationHead(cfg, self.rng)
        out = head(self._pyramid(cfg))
        assert out.shape == (1, 32, 32)

    def test_gradients_reach_all_parameters(self):
        head = SegmentationHead(self.cfg, self.rng)
        T.tsum(head(self._pyramid()) ** 2).backward()
        for name, p in head.named_params():
            assert p.grad is not None, name
            assert np.abs(p.grad).sum() > 0, name


class TestBinarize:
    def test_strictly_greater_than_threshold(self):
        prob = np.array([[0.5, 0.5000001], [0.4999999, 0.9]])
        mask = binarize(prob)
        np.testing.assert_array_equal(mask, [[False, True], [False, True]])

    def test_accepts_tensor_and_squeezes_channel(self):
        prob = Tensor(np.array([[[0.2, 0.7]]]))
        mask = binarize(prob)
        assert mask.shape == (1, 2)
        np.testing.assert_array_equal(mask, [[False, True]])

    def test_custom_threshold(self):
        prob = np.array([0.3, 0.6])
        np.testing.assert_array_equal(binarize(prob, 0.25), [True, True])
        np.testing.assert_array_equal(binarize(prob, 0.65), [False, False])

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.5, 2.0])
    def test_threshold_outside_open_interval_rejected(self, bad):
        with pytest.raises(ValueError, match="threshold"):
            binarize(np.array([0.5]), bad)
