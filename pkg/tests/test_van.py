import json

import numpy as np
import pytest

from lska.attention import AttentionVariant, ConfigError, KernelSpec
from lska.checks import central_difference
from lska.conv import ConvKernel, pointwise_conv
from lska.tensor import ShapeError
from lska.van import (ModelConfig, StageSpec, build_van, count_params, input_gradient,
                      iter_parameters, stage_shapes)


@pytest.fixture(scope="module")
def tiny_lska():
    return build_van(ModelConfig.create("tiny", "lska", 23, num_classes=10, seed=0))


class TestConfig:
    @pytest.mark.parametrize("capacity,C,L", [
        ("tiny", (32, 64, 160, 256), (3, 3, 5, 2)),
        ("small", (64, 128, 320, 512), (2, 2, 4, 2)),
        ("base", (64, 128, 320, 512), (3, 3, 12, 3)),
    ])
    def test_table(self, capacity, C, L):
        cfg = ModelConfig.create(capacity, "lska", 23)
        assert tuple(s.channels for s in cfg.stages) == C
        assert tuple(s.depth for s in cfg.stages) == L
        assert tuple(s.expansion for s in cfg.stages) == (8, 8, 4, 4)
        assert [(s.stride, s.down_kernel) for s in cfg.stages] == [(4, 7), (2, 3), (2, 3), (2, 3)]

    def test_json_roundtrip(self):
        cfg = ModelConfig.create("small", "lka", 35, seed=4, num_classes=7)
        assert ModelConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg

    def test_rejects_bad_stage(self):
        stages = list(ModelConfig.create("tiny", "lska", 7).stages)
        stages[1] = StageSpec(4, 3, 64, 8, 3)
        with pytest.raises(ConfigError):
            ModelConfig("tiny", AttentionVariant.LSKA, KernelSpec(7, 2), stages=tuple(stages))

    def test_unknown_capacity(self):
        with pytest.raises(ConfigError):
            ModelConfig.create("huge", "lska", 7)


class TestBuild:
    def test_stage1_attention_channels(self, tiny_lska):
        assert all(b.attn.channels == 32 for b in tiny_lska.stages[0].blocks)

    def test_base_depth(self):
        cfg = ModelConfig.create("base", "lka", 23)
        assert cfg.stages[2].depth == 12

    def test_stage_sizes(self, tiny_lska):
        assert stage_shapes(tiny_lska.config, 224) == [(32, 56, 56), (64, 28, 28), (160, 14, 14), (256, 7, 7)]
        x = np.zeros((1, 3, 64, 96))
        assert tiny_lska.features(x).shape == (1, 256, 2, 3)

    def test_indivisible_input(self, tiny_lska):
        with pytest.raises(ShapeError):
            tiny_lska(np.zeros((1, 3, 48, 64)))


class TestForward:
    def test_deterministic(self, tiny_lska, rng):
        x = rng.standard_normal((1, 3, 32, 32))
        np.testing.assert_array_equal(tiny_lska(x), tiny_lska(x))
        other = build_van(tiny_lska.config)
        np.testing.assert_array_equal(other(x), tiny_lska(x))

    def test_batch_rows_independent(self, tiny_lska, rng):
        x = rng.standard_normal((2, 3, 32, 32))
        both = tiny_lska(x)
        for i in range(2):
            np.testing.assert_allclose(both[i], tiny_lska(x[i:i + 1])[0], rtol=1e-12, atol=1e-12)

    def test_zero_weights_zero_logits(self):
        m = build_van(ModelConfig.create("tiny", "lska", 7, num_classes=5))
        for _, arr in iter_parameters(m):
            arr[...] = 0
        assert np.all(m(np.zeros((1, 3, 32, 32))) == 0)

    def test_zero_layer_scale_makes_blocks_identity(self, rng):
        cfg = ModelConfig.create("tiny", "lka", 7, num_classes=5)
        m = build_van(cfg, layer_scale_init=0.0)
        block = m.stages[0].blocks[0]
        x = rng.standard_normal((1, 32, 8, 8))
        np.testing.assert_array_equal(block(x, prefix="b."), x)


class TestParams:
    def test_lska_smaller_than_lka_smaller_than_trivial(self):
        for k in (7, 11, 23, 35, 53, 65):
            counts = [count_params(build_van(ModelConfig.create("tiny", v, k)))
                      for v in ("lska", "lka", "lka-trivial")]
            assert counts[0] < counts[1] < counts[2], (k, counts)

    def test_lska_affine_in_k(self):
        cfg = ModelConfig.create("tiny", "lska", 23)
        weight = sum(s.channels * s.depth for s in cfg.stages)
        p = {k: count_params(build_van(ModelConfig.create("tiny", "lska", k, d=3))) for k in (23, 35, 53, 65)}
        for k1, k2 in [(23, 35), (35, 53), (53, 65)]:
            assert p[k2] - p[k1] == weight * 2 * (k2 // 3 - k1 // 3)

    def test_running_stats_excluded(self, tiny_lska):
        stats = sum(b.norm1.mean.size + b.norm1.var.size for s in tiny_lska.stages for b in s.blocks)
        total = sum(a.size for _, a in iter_parameters(tiny_lska))
        assert count_params(tiny_lska) == total and stats > 0


class _SinglePointwise:
    def __init__(self, C):
        self.kernel = ConvKernel("pointwise", np.eye(C))

    def features(self, x, tape=None):
        return pointwise_conv(x, self.kernel, tape=tape)


class TestInputGradient:
    def test_identity_layer(self):
        g = input_gradient(_SinglePointwise(3), np.zeros((1, 3, 5, 5)))
        want = np.zeros((1, 3, 5, 5))
        want[0, :, 2, 2] = 1
        np.testing.assert_array_equal(g, want)

    def test_target_bounds(self):
        with pytest.raises(ValueError):
            input_gradient(_SinglePointwise(1), np.zeros((1, 1, 4, 4)), target=(4, 0))

    def test_tiny_matches_finite_differences(self, rng):
        model = build_van(ModelConfig.create("tiny", "lska", 7, seed=11, num_classes=4))
        x = rng.uniform(-1, 1, (1, 3, 32, 32))
        g = input_gradient(model, x)
        f = lambda: float(model.features(x)[0, :, 0, 0].sum())
        flat = rng.choice(x.size, 20, replace=False)
        for i in flat:
            idx = np.unravel_index(i, x.shape)
            fd = central_difference(f, x, idx)
            assert abs(g[idx] - fd) <= 1e-4 * max(abs(g[idx]), abs(fd), 1e-8)

    def test_support_grows_with_kernel(self):
        from lska.attention import build_attention

        class Stack:
            def __init__(self, k):
                self.m = build_attention("lska", KernelSpec.for_kernel(k), 1, seed=0)

            def features(self, x, tape=None):
                return self.m.attention_map(x, tape=tape)

        x = np.random.default_rng(0).uniform(0.5, 1.0, (1, 1, 49, 49))
        s7 = np.abs(input_gradient(Stack(7), x)) > 0
        s23 = np.abs(input_gradient(Stack(23), x)) > 0
        assert s7.sum() < s23.sum() and np.all(s23[s7])
