"""The four large-kernel attention designs.

==============  ==========================================================
LKA_TRIVIAL     dw k x k -> 1x1
LSKA_TRIVIAL    dw 1 x k -> dw k x 1 -> 1x1
LKA             dw (2d-1)^2 -> dw floor(k/d)^2, dilation d -> 1x1
LSKA            dw 1x(2d-1) -> dw (2d-1)x1 -> dw 1xfloor(k/d) (dil d)
                -> dw floor(k/d)x1 (dil d) -> 1x1
==============  ==========================================================

Each module produces an attention map ``A`` from its input ``F`` and
returns ``A * F``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .conv import ConvKernel, apply_kernel
from .tensor import ShapeError, hadamard

PAPER_DILATIONS = {7: 2, 11: 2, 23: 3, 35: 3, 53: 3, 65: 3}


class AttentionVariant(enum.Enum):
    LKA_TRIVIAL = "lka-trivial"
    LSKA_TRIVIAL = "lska-trivial"
    LKA = "lka"
    LSKA = "lska"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        for v in cls:
            if v.value == key:
                return v
        raise ValueError(f"unknown attention variant {value!r}")

    @property
    def trivial(self):
        return self in (AttentionVariant.LKA_TRIVIAL, AttentionVariant.LSKA_TRIVIAL)

    @property
    def separable(self):
        return self in (AttentionVariant.LSKA_TRIVIAL, AttentionVariant.LSKA)


class ConfigError(ValueError):
    pass


def dilation_for_kernel(k):
    """Dilation rate used with each of the benchmarked kernel sizes."""
    try:
        return PAPER_DILATIONS[k]
    except KeyError:
        raise ConfigError(f"no default dilation for k={k}; pass d explicitly") from None


@dataclass(frozen=True)
class KernelSpec:
    k: int
    d: int = 1

    @classmethod
    def for_kernel(cls, k, d=None):
        return cls(k, dilation_for_kernel(k) if d is None else d)

    @property
    def local_extent(self):
        return 2 * self.d - 1

    @property
    def dilated_extent(self):
        return self.k // self.d

    def validate(self, variant):
        variant = AttentionVariant.parse(variant)
        if self.k < 1 or self.d < 1:
            raise ConfigError(f"k and d must be positive, got k={self.k}, d={self.d}")
        if variant.trivial:
            if self.k % 2 == 0:
                raise ConfigError(f"kernel extent k={self.k} must be odd")
            return
        for label, ext in (("2d-1", self.local_extent), ("floor(k/d)", self.dilated_extent)):
            if ext < 1 or ext % 2 == 0:
                raise ConfigError(f"derived extent {label}={ext} must be odd and >= 1 "
                                  f"(k={self.k}, d={self.d})")


def layer_shapes(variant, spec):
    """Depth-wise layers as ``(kind, kh, kw, dilation)``, in execution order."""
    variant = AttentionVariant.parse(variant)
    spec.validate(variant)
    k, d = spec.k, spec.d
    if variant is AttentionVariant.LKA_TRIVIAL:
        return [("depthwise-2d", k, k, 1)]
    if variant is AttentionVariant.LSKA_TRIVIAL:
        return [("depthwise-1d-horizontal", 1, k, 1), ("depthwise-1d-vertical", k, 1, 1)]
    a, b = spec.local_extent, spec.dilated_extent
    if variant is AttentionVariant.LKA:
        return [("depthwise-2d", a, a, 1), ("depthwise-2d", b, b, d)]
    return [("depthwise-1d-horizontal", 1, a, 1), ("depthwise-1d-vertical", a, 1, 1),
            ("depthwise-1d-horizontal", 1, b, d), ("depthwise-1d-vertical", b, 1, d)]


def uniform_init(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass(frozen=True, eq=False)
class AttentionModule:
    variant: AttentionVariant
    spec: KernelSpec
    channels: int
    layers: tuple

    @property
    def n_params(self):
        return sum(layer.n_params for layer in self.layers)

    def layer_names(self, prefix=""):
        names = [f"{prefix}dw{i}" for i in range(len(self.layers) - 1)]
        return names + [f"{prefix}pw"]

    def attention_map(self, F, *, tape=None, counter=None, prefix=""):
        z = F
        for name, layer in zip(self.layer_names(prefix), self.layers):
            z = apply_kernel(z, layer, tape=tape, counter=counter, name=name)
        return z

    def __call__(self, F, *, tape=None, counter=None, prefix=""):
        return attention_forward(self, F, tape=tape, counter=counter, prefix=prefix)


def build_attention(variant, spec, C, seed=0, *, bias=False, rng=None):
    """Build one attention module with seeded uniform(+-1/sqrt(fan_in)) weights.

    ``rng`` overrides ``seed`` when the caller threads one generator
    through a larger model.
    """
    variant = AttentionVariant.parse(variant)
    if rng is None:
        rng = np.random.default_rng(seed)
    layers = []
    for kind, kh, kw, d in layer_shapes(variant, spec):
        w = uniform_init(rng, (C, kh, kw), kh * kw)
        layers.append(ConvKernel(kind, w, dilation=d))
    pw = uniform_init(rng, (C, C), C)
    pb = uniform_init(rng, (C,), C) if bias else None
    layers.append(ConvKernel("pointwise", pw, bias=pb))
    return AttentionModule(variant, spec, C, tuple(layers))


def with_weights(module, depthwise, pointwise):
    """Copy of ``module`` with its kernels replaced (same shapes required)."""
    new = []
    for layer, w in zip(module.layers[:-1], depthwise):
        w = np.asarray(w, dtype=np.float64).reshape(layer.weights.shape)
        new.append(ConvKernel(layer.kind, w, dilation=layer.dilation))
    pw = module.layers[-1]
    new.append(ConvKernel("pointwise", np.asarray(pointwise, dtype=np.float64).reshape(pw.weights.shape),
                          bias=pw.bias))
    return AttentionModule(module.variant, module.spec, module.channels, tuple(new))


def attention_forward(module, F, *, tape=None, counter=None, prefix=""):
    if F.ndim != 4 or F.shape[1] != module.channels:
        raise ShapeError(f"attention module has {module.channels} channels, input shape is {F.shape}")
    A = module.attention_map(F, tape=tape, counter=counter, prefix=prefix)
    return hadamard(A, F, tape=tape, counter=counter, name=f"{prefix}gate")


def lka_from_separable(lska):
    """The LKA module whose 2-D kernels are outer products of ``lska``'s 1-D kernels."""
    if lska.variant is not AttentionVariant.LSKA:
        raise ConfigError("expected an LSKA module")
    h1, v1, h2, v2 = (layer.weights for layer in lska.layers[:4])
    # vertical (C, a, 1) x horizontal (C, 1, a)
    local = v1 * h1
    dilated = v2 * h2
    lka = build_attention(AttentionVariant.LKA, lska.spec, lska.channels, seed=0)
    return with_weights(lka, [local, dilated], lska.layers[-1].weights)


def rank1_equivalence_check(spec, C, trials, seed=0, *, zero_kernels=False, size=None):
    """Largest |LKA(outer-product kernels)(F) - LSKA(F)| over random draws.

    Inputs are ``(1, C, 2k, 2k)`` by default.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    H = W = size or 2 * spec.k
    worst = 0.0
    for _ in range(trials):
        lska = build_attention(AttentionVariant.LSKA, spec, C, rng=rng)
        if zero_kernels:
            lska = with_weights(lska, [np.zeros_like(l.weights) for l in lska.layers[:-1]],
                                np.zeros_like(lska.layers[-1].weights))
        lka = lka_from_separable(lska)
        F = rng.standard_normal((1, C, H, W))
        worst = max(worst, float(np.max(np.abs(lka(F) - lska(F)))))
    return worst


def support_stack(variant, spec):
    """Single-channel pre-gating stack with all-ones kernels, for impulse tests."""
    module = build_attention(variant, spec, 1)
    ones = [np.ones_like(layer.weights) for layer in module.layers[:-1]]
    module = with_weights(module, ones, np.ones((1, 1)))
    return module.attention_map
