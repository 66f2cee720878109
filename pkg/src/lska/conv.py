"""Direct loop-nest convolutions with matching vector-Jacobian products.

All convolutions are cross-correlations with zero padding.  Depth-wise
kernels are stride-1 "same" convolutions padded by ``d * (k - 1) / 2`` per
axis; the dense kernel (stem / downsampling) takes an explicit stride and
pads by ``k // 2``.

The loops run over kernel taps and vectorize over (N, C, H, W).  Every tap
is applied to the whole output plane, so the MAC counter advances by the
number of multiply-adds the loop actually performs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .tensor import ShapeError

DEPTHWISE_KINDS = ("depthwise-2d", "depthwise-1d-horizontal", "depthwise-1d-vertical")
KINDS = DEPTHWISE_KINDS + ("pointwise", "dense")


class KernelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ConvKernel:
    """Weights plus the static configuration of one convolution layer.

    ``weights`` is ``(C, kh, kw)`` for depth-wise kinds, ``(C_out, C_in)``
    for pointwise and ``(C_out, C_in, k, k)`` for dense.
    """

    kind: str
    weights: np.ndarray
    dilation: int = 1
    bias: Optional[np.ndarray] = None
    stride: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise KernelError(f"unknown kernel kind {self.kind!r}")
        if self.dilation < 1:
            raise KernelError(f"dilation must be >= 1, got {self.dilation}")
        w = self.weights
        if self.kind in DEPTHWISE_KINDS:
            if w.ndim != 3:
                raise KernelError(f"depth-wise weights must be (C, kh, kw), got {w.shape}")
            kh, kw = w.shape[1:]
            if kh % 2 == 0 or kw % 2 == 0:
                raise KernelError(f"depth-wise kernel extent must be odd, got {kh}x{kw}")
            if self.kind == "depthwise-1d-horizontal" and kh != 1:
                raise KernelError(f"horizontal kernel must be 1xk, got {kh}x{kw}")
            if self.kind == "depthwise-1d-vertical" and kw != 1:
                raise KernelError(f"vertical kernel must be kx1, got {kh}x{kw}")
            if self.stride != 1:
                raise KernelError("depth-wise kernels are stride 1")
        elif self.kind == "pointwise":
            if w.ndim != 2:
                raise KernelError(f"pointwise weights must be (C_out, C_in), got {w.shape}")
            if self.dilation != 1 or self.stride != 1:
                raise KernelError("pointwise kernels take no dilation or stride")
        else:
            if w.ndim != 4 or w.shape[2] != w.shape[3] or w.shape[2] % 2 == 0:
                raise KernelError(f"dense weights must be (C_out, C_in, k, k) with odd k, got {w.shape}")
            if self.dilation != 1:
                raise KernelError("dense kernels are not dilated")
        if self.bias is not None and self.bias.shape != (self.out_channels,):
            raise KernelError(f"bias shape {self.bias.shape} != ({self.out_channels},)")

    @property
    def out_channels(self):
        return self.weights.shape[0]

    @property
    def in_channels(self):
        return self.weights.shape[0] if self.kind in DEPTHWISE_KINDS else self.weights.shape[1]

    @property
    def extent(self):
        """(kh, kw) of the kernel footprint before dilation."""
        if self.kind in DEPTHWISE_KINDS:
            return self.weights.shape[1:]
        if self.kind == "pointwise":
            return (1, 1)
        return self.weights.shape[2:]

    @property
    def n_params(self):
        return self.weights.size + (0 if self.bias is None else self.bias.size)


def _check_channels(x, kernel):
    if x.ndim != 4:
        raise ShapeError(f"expected (N, C, H, W) input, got {x.shape}")
    if x.shape[1] != kernel.in_channels:
        raise ShapeError(f"input has {x.shape[1]} channels, kernel expects {kernel.in_channels}")


def _dw_pad(kernel):
    kh, kw = kernel.extent
    d = kernel.dilation
    return d * (kh - 1) // 2, d * (kw - 1) // 2


def dw_conv(x, kernel, *, tape=None, counter=None, name="dw_conv"):
    """Depth-wise same-size convolution, optionally dilated."""
    if kernel.kind not in DEPTHWISE_KINDS:
        raise KernelError(f"dw_conv needs a depth-wise kernel, got {kernel.kind}")
    _check_channels(x, kernel)
    N, C, H, W = x.shape
    kh, kw = kernel.extent
    d = kernel.dilation
    ph, pw = _dw_pad(kernel)
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    w = kernel.weights
    out = np.zeros_like(x)
    for i in range(kh):
        for j in range(kw):
            out += w[None, :, i, j, None, None] * xp[:, :, i * d:i * d + H, j * d:j * d + W]
    if kernel.bias is not None:
        out += kernel.bias[None, :, None, None]

    if tape is not None:
        tape.record(name, (x,), out, lambda g: dw_conv_vjp(x, kernel, g))
    if counter is not None:
        counter.add(name, params=kernel.n_params, macs=N * C * kh * kw * H * W)
    return out


def dw_conv_vjp(x, kernel, g):
    """Returns ``((grad_x,), {"weight": grad_w[, "bias": grad_b]})``."""
    if g.shape != x.shape:
        raise ShapeError(f"upstream gradient {g.shape} does not match output {x.shape}")
    N, C, H, W = x.shape
    kh, kw = kernel.extent
    d = kernel.dilation
    ph, pw = _dw_pad(kernel)
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    gxp = np.zeros_like(xp)
    w = kernel.weights
    gw = np.zeros_like(w)
    for i in range(kh):
        for j in range(kw):
            sl = (slice(None), slice(None), slice(i * d, i * d + H), slice(j * d, j * d + W))
            gxp[sl] += w[None, :, i, j, None, None] * g
            gw[:, i, j] = np.einsum("nchw,nchw->c", g, xp[sl])
    gx = gxp[:, :, ph:ph + H, pw:pw + W].copy()
    grads = {"weight": gw}
    if kernel.bias is not None:
        grads["bias"] = g.sum(axis=(0, 2, 3))
    return (gx,), grads


def pointwise_conv(x, kernel, *, tape=None, counter=None, name="pw_conv"):
    """1x1 convolution: per-pixel dense channel mixing."""
    if kernel.kind != "pointwise":
        raise KernelError(f"pointwise_conv needs a pointwise kernel, got {kernel.kind}")
    _check_channels(x, kernel)
    N, C, H, W = x.shape
    out = np.einsum("oc,nchw->nohw", kernel.weights, x, optimize=True)
    if kernel.bias is not None:
        out += kernel.bias[None, :, None, None]
    out = np.ascontiguousarray(out)
    if tape is not None:
        tape.record(name, (x,), out, lambda g: pointwise_conv_vjp(x, kernel, g))
    if counter is not None:
        counter.add(name, params=kernel.n_params, macs=N * kernel.out_channels * C * H * W)
    return out


def pointwise_conv_vjp(x, kernel, g):
    gx = np.ascontiguousarray(np.einsum("oc,nohw->nchw", kernel.weights, g, optimize=True))
    grads = {"weight": np.einsum("nohw,nchw->oc", g, x, optimize=True)}
    if kernel.bias is not None:
        grads["bias"] = g.sum(axis=(0, 2, 3))
    return (gx,), grads


def _dense_geometry(x, kernel):
    k = kernel.extent[0]
    s = kernel.stride
    p = k // 2
    H, W = x.shape[2:]
    Ho = (H + 2 * p - k) // s + 1
    Wo = (W + 2 * p - k) // s + 1
    return k, s, p, Ho, Wo


def dense_conv(x, kernel, *, tape=None, counter=None, name="conv"):
    """Full (all-to-all channel) strided convolution, padding ``k // 2``."""
    if kernel.kind != "dense":
        raise KernelError(f"dense_conv needs a dense kernel, got {kernel.kind}")
    _check_channels(x, kernel)
    N, C = x.shape[:2]
    k, s, p, Ho, Wo = _dense_geometry(x, kernel)
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    w = kernel.weights
    out = np.zeros((N, kernel.out_channels, Ho, Wo), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            xs = xp[:, :, i:i + s * (Ho - 1) + 1:s, j:j + s * (Wo - 1) + 1:s]
            out += np.einsum("oc,nchw->nohw", w[:, :, i, j], xs, optimize=True)
    if kernel.bias is not None:
        out += kernel.bias[None, :, None, None]
    if tape is not None:
        tape.record(name, (x,), out, lambda g: dense_conv_vjp(x, kernel, g))
    if counter is not None:
        counter.add(name, params=kernel.n_params,
                    macs=N * kernel.out_channels * C * k * k * Ho * Wo)
    return out


def dense_conv_vjp(x, kernel, g):
    k, s, p, Ho, Wo = _dense_geometry(x, kernel)
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    gxp = np.zeros_like(xp)
    w = kernel.weights
    gw = np.zeros_like(w)
    for i in range(k):
        for j in range(k):
            sl = (slice(None), slice(None),
                  slice(i, i + s * (Ho - 1) + 1, s), slice(j, j + s * (Wo - 1) + 1, s))
            gxp[sl] += np.einsum("oc,nohw->nchw", w[:, :, i, j], g, optimize=True)
            gw[:, :, i, j] = np.einsum("nohw,nchw->oc", g, xp[sl], optimize=True)
    H, W = x.shape[2:]
    gx = gxp[:, :, p:p + H, p:p + W].copy()
    grads = {"weight": gw}
    if kernel.bias is not None:
        grads["bias"] = g.sum(axis=(0, 2, 3))
    return (gx,), grads


def apply_kernel(x, kernel, **kw):
    """Dispatch on ``kernel.kind``."""
    if kernel.kind in DEPTHWISE_KINDS:
        return dw_conv(x, kernel, **kw)
    if kernel.kind == "pointwise":
        return pointwise_conv(x, kernel, **kw)
    return dense_conv(x, kernel, **kw)


def receptive_field_analytic(chain):
    """Maximum receptive field of a stride-1 cascade of ``(extent, dilation)``."""
    return 1 + sum(d * (k - 1) for k, d in chain)


class ClippedSupportError(RuntimeError):
    """Impulse response reached the border; the measured extent is inconclusive."""


def impulse_support(forward, size):
    """Extent of the response to a centered unit impulse.

    ``forward`` maps a (1, C, H, W) tensor to a tensor of the same spatial
    size; only channel 0 of the input carries the impulse and the response
    is taken over all output channels.
    """
    H, W = size
    x = np.zeros((1, 1, H, W))
    x[0, 0, H // 2, W // 2] = 1.0
    y = np.abs(forward(x)).sum(axis=(0, 1))
    rows = np.flatnonzero(y.any(axis=1))
    cols = np.flatnonzero(y.any(axis=0))
    if rows.size == 0:
        return (0, 0)
    if rows[0] == 0 or cols[0] == 0 or rows[-1] == H - 1 or cols[-1] == W - 1:
        raise ClippedSupportError(f"impulse response touches the border of a {H}x{W} input")
    return (int(rows[-1] - rows[0] + 1), int(cols[-1] - cols[0] + 1))
