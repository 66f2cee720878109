"""Large separable kernel attention: modules, VAN backbones, cost and ERF analysis."""

from .attention import (AttentionModule, AttentionVariant, ConfigError, KernelSpec,
                        attention_forward, build_attention, dilation_for_kernel,
                        rank1_equivalence_check)
from .conv import ConvKernel, dense_conv, dw_conv, impulse_support, pointwise_conv, receptive_field_analytic
from .cost import (CostReport, attention_flops_analytic, attention_params_analytic,
                   instrumented_count, model_cost, savings_ratio)
from .recording import MacCounter, Tape
from .tensor import ShapeError, batch_norm, gelu, hadamard, scale_channels
from .van import ModelConfig, StageSpec, build_van, count_params, input_gradient

__all__ = [
    "AttentionModule",
    "AttentionVariant",
    "ConfigError",
    "KernelSpec",
    "attention_forward",
    "build_attention",
    "dilation_for_kernel",
    "rank1_equivalence_check",
    "ConvKernel",
    "dense_conv",
    "dw_conv",
    "impulse_support",
    "pointwise_conv",
    "receptive_field_analytic",
    "CostReport",
    "attention_flops_analytic",
    "attention_params_analytic",
    "instrumented_count",
    "model_cost",
    "savings_ratio",
    "MacCounter",
    "Tape",
    "ShapeError",
    "batch_norm",
    "gelu",
    "hadamard",
    "scale_channels",
    "ModelConfig",
    "StageSpec",
    "build_van",
    "count_params",
    "input_gradient",
]

__version__ = "0.1.0"
