import numpy as np
import pytest

from lska.attention import PAPER_DILATIONS, AttentionVariant, KernelSpec, build_attention
from lska.conv import ConvKernel, pointwise_conv
from lska.cost import (attention_flops_analytic, attention_params_analytic, instrumented_count,
                       model_cost, savings_ratio)
from lska.recording import MacCounter
from lska.van import ModelConfig, build_van, count_params


def count_module_weights(variant, k, d, C):
    """Oracle: number of scalars in a freshly built module."""
    return sum(l.weights.size for l in build_attention(variant, KernelSpec(k, d), C).layers)


class TestAnalytic:
    def test_lka_23(self):
        assert attention_params_analytic("lka", 23, 3, 32) == 25 * 32 + 49 * 32 + 1024 == 3392
        assert count_module_weights("lka", 23, 3, 32) == 3392

    def test_lska_23(self):
        assert attention_params_analytic("lska", 23, 3, 32) == 320 + 448 + 1024 == 1792
        assert count_module_weights("lska", 23, 3, 32) == 1792

    def test_trivial_smallest(self):
        assert attention_params_analytic("lka-trivial", 1, 1, 1) == 2

    def test_flops(self):
        assert attention_flops_analytic("lska", 23, 3, 32, 7, 7) == 87808
        assert attention_flops_analytic("lka", 23, 3, 32, 1, 1) == 3392
        assert attention_flops_analytic("lka-trivial", 7, 1, 16, 4, 4) == (49 * 16 + 256) * 16 == 16640

    def test_savings(self):
        assert savings_ratio(23, 3) == (2.5, 3.5)
        assert savings_ratio(7, 2) == (1.5, 1.5)
        assert savings_ratio(9, 1) == (0.5, 4.5)

    @pytest.mark.parametrize("k,d", [(k, d) for k in range(3, 70, 2) for d in (1, 2, 3) if (k // d) % 2])
    def test_lka_minus_lska(self, k, d):
        C = 5
        diff = attention_params_analytic("lka", k, d, C) - attention_params_analytic("lska", k, d, C)
        a, b = 2 * d - 1, k // d
        assert diff == C * (a * a - 2 * a) + C * (b * b - 2 * b)
        assert diff >= 0

    def test_growth_orders(self):
        C = 32
        ks = range(7, 70, 4)
        lt = [attention_params_analytic("lka-trivial", k, 1, C) for k in ks]
        st = [attention_params_analytic("lska-trivial", k, 1, C) for k in ks]
        # second difference of k^2 C on a grid of step 4 is 2 * 4^2 * C
        assert set(np.diff(lt, 2)) == {2 * 16 * C}
        assert set(np.diff(st, 2)) == {0}


class TestInstrumented:
    def test_lska_module(self):
        m = build_attention("lska", KernelSpec(23, 3), 32)
        rep = instrumented_count(m, np.zeros((1, 32, 7, 7)))
        assert rep.macs == 87808
        assert rep.params == 1792
        assert rep.macs == sum(e.macs for e in rep.breakdown)

    def test_pointwise(self):
        c = MacCounter()
        pointwise_conv(np.zeros((1, 6, 4, 5)), ConvKernel("pointwise", np.zeros((6, 6))), counter=c)
        assert c.macs == 36 * 20

    @pytest.mark.parametrize("variant", list(AttentionVariant))
    @pytest.mark.parametrize("k", list(PAPER_DILATIONS))
    def test_modules_match_formula(self, variant, k):
        d = PAPER_DILATIONS[k]
        for C, hw in [(8, 7), (32, 14)]:
            m = build_attention(variant, KernelSpec(k, d), C)
            assert instrumented_count(m, np.zeros((1, C, hw, hw))).macs == \
                attention_flops_analytic(variant, k, d, C, hw, hw)

    @pytest.mark.parametrize("variant", ["lska", "lka-trivial"])
    def test_full_model_per_layer(self, variant):
        cfg = ModelConfig.create("tiny", variant, 23, num_classes=10)
        model = build_van(cfg)
        counted = instrumented_count(model, np.zeros((1, 3, 64, 64)))
        walked = model_cost(cfg, (64, 64))
        assert counted.breakdown == walked.breakdown
        assert counted.params == walked.params == count_params(model)


class TestModelCost:
    def test_totals_are_sums(self):
        rep = model_cost(ModelConfig.create("tiny", "lka", 23))
        assert rep.params == sum(e.params for e in rep.breakdown)
        assert rep.macs == sum(e.macs for e in rep.breakdown)
        assert rep.n_pixels == 224 * 224
        assert rep.flops_display == rep.macs and rep.aux_ops > 0

    def test_indivisible(self):
        with pytest.raises(ValueError):
            model_cost(ModelConfig.create("tiny", "lka", 23), (100, 100))

    @pytest.mark.parametrize("variant,k,gflops", [
        ("lska", 23, 0.84), ("lka", 23, 0.87), ("lka-trivial", 65, 3.49)])
    def test_paper_gflops(self, variant, k, gflops):
        assert model_cost(ModelConfig.create("tiny", variant, k)).gflops == pytest.approx(gflops, rel=0.05)
