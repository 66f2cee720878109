"""VAN backbones assembled from any of the four attention designs.

Layout per capacity::

    stem       7x7 conv stride 4 + BN
    stage i    [3x3 conv stride 2 + BN, i >= 2] then L_i blocks
    block      x + LS1(proj2(attn(gelu(proj1(BN(x))))))
               x + LS2(fc2(gelu(dw3x3(fc1(BN(x))))))
    head       global average pool -> linear

Batch norms run frozen (zero mean, unit variance, learned affine) unless
``batch_stats=True`` is passed to the forward functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import (PAPER_DILATIONS, AttentionModule, AttentionVariant, ConfigError,
                        KernelSpec, build_attention, uniform_init)
from .conv import ConvKernel, apply_kernel
from .recording import Tape
from .tensor import ShapeError, add, as_tensor, batch_norm, gelu, scale_channels

CAPACITIES = {
    "tiny": dict(channels=(32, 64, 160, 256), depths=(3, 3, 5, 2), expansions=(8, 8, 4, 4)),
    "small": dict(channels=(64, 128, 320, 512), depths=(2, 2, 4, 2), expansions=(8, 8, 4, 4)),
    "base": dict(channels=(64, 128, 320, 512), depths=(3, 3, 12, 3), expansions=(8, 8, 4, 4)),
}
BN_EPS = 1e-5
LAYER_SCALE_INIT = 0.01


@dataclass(frozen=True)
class StageSpec:
    stride: int
    down_kernel: int
    channels: int
    expansion: int
    depth: int


def capacity_stages(capacity):
    try:
        spec = CAPACITIES[capacity.lower()]
    except KeyError:
        raise ConfigError(f"unknown capacity {capacity!r}; expected one of {sorted(CAPACITIES)}") from None
    return tuple(
        StageSpec(4 if i == 0 else 2, 7 if i == 0 else 3, c, e, l)
        for i, (c, l, e) in enumerate(zip(spec["channels"], spec["depths"], spec["expansions"]))
    )


@dataclass(frozen=True)
class ModelConfig:
    capacity: str
    variant: AttentionVariant
    kernel: KernelSpec
    num_classes: int = 1000
    seed: int = 0
    stages: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "capacity", self.capacity.lower())
        object.__setattr__(self, "variant", AttentionVariant.parse(self.variant))
        if not self.stages:
            object.__setattr__(self, "stages", capacity_stages(self.capacity))
        self.validate()

    @classmethod
    def create(cls, capacity, variant, k, d=None, **kw):
        variant = AttentionVariant.parse(variant)
        if d is None and variant.trivial and k not in PAPER_DILATIONS:
            d = 1
        return cls(capacity, variant, KernelSpec.for_kernel(k, d), **kw)

    def validate(self):
        if len(self.stages) != 4:
            raise ConfigError(f"expected 4 stages, got {len(self.stages)}")
        for i, s in enumerate(self.stages):
            want = (4, 7) if i == 0 else (2, 3)
            if (s.stride, s.down_kernel) != want:
                raise ConfigError(f"stage {i + 1} needs stride/kernel {want}, got {(s.stride, s.down_kernel)}")
            if min(s.channels, s.expansion, s.depth) < 1:
                raise ConfigError(f"stage {i + 1} has a non-positive hyperparameter: {s}")
        if self.num_classes < 1:
            raise ConfigError("num_classes must be positive")
        self.kernel.validate(self.variant)

    def to_dict(self):
        return {
            "capacity": self.capacity,
            "variant": self.variant.value,
            "k": self.kernel.k,
            "d": self.kernel.d,
            "num_classes": self.num_classes,
            "seed": self.seed,
            "stages": [vars(s).copy() for s in self.stages],
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        unknown = set(data) - {"capacity", "variant", "k", "d", "num_classes", "seed", "stages"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        stages = tuple(StageSpec(**s) for s in data.get("stages", ()))
        variant = AttentionVariant.parse(data["variant"])
        d = data.get("d")
        kernel = KernelSpec.for_kernel(int(data["k"]), None if d is None else int(d))
        return cls(data["capacity"], variant, kernel,
                   num_classes=int(data.get("num_classes", 1000)),
                   seed=int(data.get("seed", 0)), stages=stages)


@dataclass(eq=False)
class BatchNorm:
    gamma: np.ndarray
    beta: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    eps: float = BN_EPS

    @classmethod
    def identity(cls, C):
        return cls(np.ones(C), np.zeros(C), np.zeros(C), np.ones(C))

    @property
    def n_params(self):
        return self.gamma.size + self.beta.size

    def __call__(self, x, *, batch_stats=False, **kw):
        if batch_stats:
            return batch_norm(x, self.gamma, self.beta, self.eps, **kw)
        return batch_norm(x, self.gamma, self.beta, self.eps, mean=self.mean, var=self.var, **kw)


@dataclass(eq=False)
class Block:
    norm1: BatchNorm
    proj1: ConvKernel
    attn: AttentionModule
    proj2: ConvKernel
    ls1: np.ndarray
    norm2: BatchNorm
    fc1: ConvKernel
    dw: ConvKernel
    fc2: ConvKernel
    ls2: np.ndarray

    def __call__(self, x, *, prefix, tape=None, counter=None, batch_stats=False):
        kw = dict(tape=tape, counter=counter)
        h = self.norm1(x, batch_stats=batch_stats, name=prefix + "norm1", **kw)
        h = apply_kernel(h, self.proj1, name=prefix + "proj1", **kw)
        h = gelu(h, name=prefix + "act1", **kw)
        h = self.attn(h, prefix=prefix + "attn.", **kw)
        h = apply_kernel(h, self.proj2, name=prefix + "proj2", **kw)
        h = scale_channels(h, self.ls1, name=prefix + "ls1", **kw)
        x = add(x, h, name=prefix + "add1", **kw)

        h = self.norm2(x, batch_stats=batch_stats, name=prefix + "norm2", **kw)
        h = apply_kernel(h, self.fc1, name=prefix + "fc1", **kw)
        h = apply_kernel(h, self.dw, name=prefix + "dw", **kw)
        h = gelu(h, name=prefix + "act2", **kw)
        h = apply_kernel(h, self.fc2, name=prefix + "fc2", **kw)
        h = scale_channels(h, self.ls2, name=prefix + "ls2", **kw)
        return add(x, h, name=prefix + "add2", **kw)


@dataclass(eq=False)
class Stage:
    down: ConvKernel
    down_norm: BatchNorm
    blocks: list = field(default_factory=list)


def global_avg_pool(x, *, tape=None, counter=None, name="pool"):
    N, C, H, W = x.shape
    out = x.mean(axis=(2, 3), keepdims=True)
    if tape is not None:
        tape.record(name, (x,), out,
                    lambda g: ((np.broadcast_to(g / (H * W), x.shape).copy(),), {}))
    if counter is not None:
        counter.add(name, aux_ops=x.size)
    return out


@dataclass(eq=False)
class VAN:
    config: ModelConfig
    stages: list
    head: ConvKernel

    def features(self, images, *, tape=None, counter=None, batch_stats=False):
        """Stage-4 feature map."""
        x = images
        if x.ndim != 4 or x.shape[1] != 3:
            raise ShapeError(f"expected (N, 3, H, W) images, got {x.shape}")
        H, W = x.shape[2:]
        if H % 32 or W % 32:
            raise ShapeError(f"spatial dims must be divisible by 32, got {H}x{W}")
        kw = dict(tape=tape, counter=counter)
        for i, stage in enumerate(self.stages, start=1):
            pre = "stem." if i == 1 else f"stage{i}.down."
            x = apply_kernel(x, stage.down, name=pre + "conv", **kw)
            x = stage.down_norm(x, batch_stats=batch_stats, name=pre + "bn", **kw)
            for j, block in enumerate(stage.blocks):
                x = block(x, prefix=f"stage{i}.block{j}.", batch_stats=batch_stats, **kw)
        return x

    def forward(self, images, *, tape=None, counter=None, batch_stats=False):
        """Logits of shape (N, num_classes)."""
        feats = self.features(images, tape=tape, counter=counter, batch_stats=batch_stats)
        pooled = global_avg_pool(feats, name="head.pool", tape=tape, counter=counter)
        logits = apply_kernel(pooled, self.head, name="head.fc", tape=tape, counter=counter)
        return logits.reshape(logits.shape[0], -1)

    __call__ = forward


def build_van(config, *, layer_scale_init=LAYER_SCALE_INIT):
    """Instantiate a VAN with seeded uniform(+-1/sqrt(fan_in)) conv weights."""
    config.validate()
    rng = np.random.default_rng(config.seed)

    def dense(cin, cout, k, stride):
        fan = cin * k * k
        return ConvKernel("dense", uniform_init(rng, (cout, cin, k, k), fan),
                          bias=uniform_init(rng, (cout,), fan), stride=stride)

    def pw(cin, cout):
        return ConvKernel("pointwise", uniform_init(rng, (cout, cin), cin),
                          bias=uniform_init(rng, (cout,), cin))

    stages = []
    cin = 3
    for s in config.stages:
        C = s.channels
        stage = Stage(dense(cin, C, s.down_kernel, s.stride), BatchNorm.identity(C))
        hidden = s.expansion * C
        for _ in range(s.depth):
            proj1 = pw(C, C)
            attn = build_attention(config.variant, config.kernel, C, rng=rng, bias=True)
            proj2 = pw(C, C)
            fc1 = pw(C, hidden)
            dw = ConvKernel("depthwise-2d", uniform_init(rng, (hidden, 3, 3), 9),
                            bias=uniform_init(rng, (hidden,), 9))
            fc2 = pw(hidden, C)
            stage.blocks.append(Block(
                BatchNorm.identity(C), proj1, attn, proj2, np.full(C, layer_scale_init),
                BatchNorm.identity(C), fc1, dw, fc2, np.full(C, layer_scale_init)))
        stages.append(stage)
        cin = C
    return VAN(config, stages, pw(cin, config.num_classes))


def iter_parameters(model):
    """Yield ``(name, array)`` for every trainable array of ``model``."""
    for i, stage in enumerate(model.stages, start=1):
        pre = "stem." if i == 1 else f"stage{i}.down."
        yield from _kernel_params(pre + "conv", stage.down)
        yield from _bn_params(pre + "bn", stage.down_norm)
        for j, b in enumerate(stage.blocks):
            p = f"stage{i}.block{j}."
            yield from _bn_params(p + "norm1", b.norm1)
            yield from _kernel_params(p + "proj1", b.proj1)
            for name, layer in zip(b.attn.layer_names(p + "attn."), b.attn.layers):
                yield from _kernel_params(name, layer)
            yield from _kernel_params(p + "proj2", b.proj2)
            yield p + "ls1", b.ls1
            yield from _bn_params(p + "norm2", b.norm2)
            yield from _kernel_params(p + "fc1", b.fc1)
            yield from _kernel_params(p + "dw", b.dw)
            yield from _kernel_params(p + "fc2", b.fc2)
            yield p + "ls2", b.ls2
    yield from _kernel_params("head.fc", model.head)


def _kernel_params(name, kernel):
    yield name + ".weight", kernel.weights
    if kernel.bias is not None:
        yield name + ".bias", kernel.bias


def _bn_params(name, bn):
    yield name + ".gamma", bn.gamma
    yield name + ".beta", bn.beta


def count_params(model):
    """Trainable scalars; batch-norm running statistics are not counted."""
    if isinstance(model, AttentionModule):
        return model.n_params
    return int(sum(a.size for _, a in iter_parameters(model)))


def input_gradient(model, images, target=None):
    """d(channel-sum of the final feature map at ``target``)/d(images).

    ``model`` is anything exposing ``features(x, tape=...)``.  ``target`` is
    a (row, col) position in the final map; the default is its center.
    """
    images = as_tensor(images)
    tape = Tape()
    feats = model.features(images, tape=tape)
    fh, fw = feats.shape[2:]
    r, c = (fh // 2, fw // 2) if target is None else target
    if not (0 <= r < fh and 0 <= c < fw):
        raise ValueError(f"target {(r, c)} outside the {fh}x{fw} feature map")
    seed = np.zeros_like(feats)
    seed[:, :, r, c] = 1.0
    return tape.backward(feats, seed).wrt(images)


def stage_shapes(config, hw):
    """(C, H, W) of each stage output for a square input of side ``hw``."""
    out = []
    h = hw
    for s in config.stages:
        h = (h + 2 * (s.down_kernel // 2) - s.down_kernel) // s.stride + 1
        out.append((s.channels, h, h))
    return out
