"""Parameter and multiply-accumulate accounting.

Two independent routes produce a :class:`CostReport`:

* closed forms / a config walker that never touches a tensor
  (:func:`attention_params_analytic`, :func:`model_cost`), and
* the counters inside the real forward pass (:func:`instrumented_count`).

One MAC is displayed as one FLOP.  Batch norm, GELU, LayerScale, gating,
residual adds and pooling contribute parameters and ``aux_ops`` but no MACs.
"""

from __future__ import annotations

from dataclasses import dataclass, field


from .attention import AttentionModule, AttentionVariant, KernelSpec, layer_shapes
from .recording import LayerCost, MacCounter
from .tensor import ShapeError


@dataclass(frozen=True)
class CostReport:
    params: int
    macs: int
    breakdown: tuple = field(default_factory=tuple)
    n_pixels: int = 0
    aux_ops: int = 0

    @classmethod
    def from_entries(cls, entries, n_pixels):
        entries = tuple(entries)
        return cls(params=sum(e.params for e in entries), macs=sum(e.macs for e in entries),
                   breakdown=entries, n_pixels=n_pixels, aux_ops=sum(e.aux_ops for e in entries))

    @property
    def flops_display(self):
        return self.macs

    @property
    def gflops(self):
        return self.macs / 1e9


def attention_params_analytic(variant, k, d, C):
    """Attention-module weights, biases excluded."""
    variant = AttentionVariant.parse(variant)
    KernelSpec(k, d).validate(variant)
    if variant is AttentionVariant.LKA_TRIVIAL:
        return k * k * C + C * C
    if variant is AttentionVariant.LSKA_TRIVIAL:
        return 2 * k * C + C * C
    local, dilated = 2 * d - 1, k // d
    if variant is AttentionVariant.LKA:
        return local ** 2 * C + dilated ** 2 * C + C * C
    return local * C * 2 + dilated * C * 2 + C * C


def attention_flops_analytic(variant, k, d, C, H, W):
    if H < 1 or W < 1:
        raise ValueError("H and W must be positive")
    return attention_params_analytic(variant, k, d, C) * H * W


def savings_ratio(k, d):
    """Per-layer parameter ratios LKA/LSKA for the local and dilated kernels."""
    return (2 * d - 1) / 2, (k // d) / 2


def _conv_out(h, k, s):
    return (h + 2 * (k // 2) - k) // s + 1


def model_cost(config, input_hw=(224, 224)):
    """Walk the architecture of ``config`` layer by layer (batch of one)."""
    H, W = input_hw
    if H % 32 or W % 32:
        raise ShapeError(f"input dims must be divisible by 32, got {H}x{W}")
    rows = []
    add = lambda name, params=0, macs=0, aux=0: rows.append(LayerCost(name, params, macs, aux))
    cin = 3
    h, w = H, W
    dw_layers = layer_shapes(config.variant, config.kernel)
    for i, s in enumerate(config.stages, start=1):
        C = s.channels
        k = s.down_kernel
        h, w = _conv_out(h, k, s.stride), _conv_out(w, k, s.stride)
        hw = h * w
        pre = "stem." if i == 1 else f"stage{i}.down."
        add(pre + "conv", C * cin * k * k + C, C * cin * k * k * hw)
        add(pre + "bn", 2 * C, 0, 2 * C * hw)
        hid = s.expansion * C
        for j in range(s.depth):
            p = f"stage{i}.block{j}."
            add(p + "norm1", 2 * C, 0, 2 * C * hw)
            add(p + "proj1", C * C + C, C * C * hw)
            add(p + "act1", aux=C * hw)
            for n, (_, kh, kw, _) in enumerate(dw_layers):
                add(f"{p}attn.dw{n}", C * kh * kw, C * kh * kw * hw)
            add(p + "attn.pw", C * C + C, C * C * hw)
            add(p + "attn.gate", aux=C * hw)
            add(p + "proj2", C * C + C, C * C * hw)
            add(p + "ls1", C, 0, C * hw)
            add(p + "add1", aux=C * hw)
            add(p + "norm2", 2 * C, 0, 2 * C * hw)
            add(p + "fc1", C * hid + hid, C * hid * hw)
            add(p + "dw", 9 * hid + hid, 9 * hid * hw)
            add(p + "act2", aux=hid * hw)
            add(p + "fc2", hid * C + C, hid * C * hw)
            add(p + "ls2", C, 0, C * hw)
            add(p + "add2", aux=C * hw)
        cin = C
    add("head.pool", aux=cin * h * w)
    add("head.fc", cin * config.num_classes + config.num_classes, cin * config.num_classes)
    return CostReport.from_entries(rows, H * W)


def instrumented_count(model, x):
    """Run the real forward pass of ``model`` on ``x`` and collect its counters."""
    counter = MacCounter()
    if isinstance(model, AttentionModule):
        model(x, counter=counter)
    else:
        model.forward(x, counter=counter)
    return CostReport.from_entries(counter.entries, x.shape[2] * x.shape[3])
