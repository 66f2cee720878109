"""Dense NCHW tensors and the elementwise / normalization primitives.

Tensors are plain ``numpy.ndarray`` objects of rank 4 laid out as
(batch, channels, height, width), C-contiguous.  Functions never mutate
their inputs.  Each op optionally records itself on a :class:`Tape` and
reports its cost to a :class:`MacCounter`.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class ShapeError(ValueError):
    pass


def as_tensor(x, dtype=np.float64):
    """Validate and convert ``x`` to a contiguous 4-D float array."""
    arr = np.ascontiguousarray(x, dtype=dtype)
    if arr.ndim != 4:
        raise ShapeError(f"expected a 4-D (N, C, H, W) tensor, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains non-finite values")
    return arr


def _channel_vector(v, C, what):
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.shape[0] != C:
        raise ShapeError(f"{what} has length {v.shape[0]}, tensor has {C} channels")
    return v


def _bcast(v):
    return v[None, :, None, None]


def hadamard(a, b, *, tape=None, counter=None, name="hadamard"):
    if a.shape != b.shape:
        raise ShapeError(f"hadamard operands differ: {a.shape} vs {b.shape}")
    out = a * b
    if tape is not None:
        tape.record(name, (a, b), out, lambda g: hadamard_vjp(a, b, g))
    if counter is not None:
        counter.add(name, aux_ops=out.size)
    return out


def hadamard_vjp(a, b, g):
    return (g * b, g * a), {}


def add(a, b, *, tape=None, counter=None, name="add"):
    """Elementwise sum (residual connections)."""
    if a.shape != b.shape:
        raise ShapeError(f"add operands differ: {a.shape} vs {b.shape}")
    out = a + b
    if tape is not None:
        tape.record(name, (a, b), out, lambda g: ((g, g), {}))
    if counter is not None:
        counter.add(name, aux_ops=out.size)
    return out


def gaussian_cdf(x):
    return 0.5 * (1.0 + erf(x / _SQRT2))


def gelu(x, *, tape=None, counter=None, name="gelu"):
    """Exact GELU, ``x * Phi(x)``."""
    out = x * gaussian_cdf(x)
    if tape is not None:
        tape.record(name, (x,), out, lambda g: gelu_vjp(x, g))
    if counter is not None:
        counter.add(name, aux_ops=out.size)
    return out


def gelu_vjp(x, g):
    deriv = gaussian_cdf(x) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return (g * deriv,), {}


def batch_norm(x, gamma, beta, eps=1e-5, *, mean=None, var=None,
               tape=None, counter=None, name="bn"):
    """Per-channel normalization followed by the affine ``gamma, beta``.

    With ``mean`` and ``var`` both given the layer runs in frozen mode and
    uses them as-is; otherwise statistics come from the batch, over the
    (N, H, W) axes with the biased variance estimator.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    C = x.shape[1]
    gamma = _channel_vector(gamma, C, "gamma")
    beta = _channel_vector(beta, C, "beta")
    frozen = mean is not None and var is not None
    if frozen:
        mu = _channel_vector(mean, C, "mean")
        sigma2 = _channel_vector(var, C, "var")
    elif mean is None and var is None:
        mu = x.mean(axis=(0, 2, 3))
        sigma2 = x.var(axis=(0, 2, 3))
    else:
        raise ValueError("frozen batch_norm needs both mean and var")

    inv_std = 1.0 / np.sqrt(sigma2 + eps)
    xhat = (x - _bcast(mu)) * _bcast(inv_std)
    out = xhat * _bcast(gamma) + _bcast(beta)

    if tape is not None:
        if frozen:
            back = lambda g: _bn_frozen_vjp(xhat, gamma, inv_std, g)
        else:
            back = lambda g: _bn_batch_vjp(xhat, gamma, inv_std, g)
        tape.record(name, (x,), out, back)
    if counter is not None:
        counter.add(name, params=2 * C, aux_ops=2 * out.size)
    return out


def _bn_frozen_vjp(xhat, gamma, inv_std, g):
    gx = g * _bcast(gamma * inv_std)
    return (gx,), {"gamma": (g * xhat).sum(axis=(0, 2, 3)), "beta": g.sum(axis=(0, 2, 3))}


def _bn_batch_vjp(xhat, gamma, inv_std, g):
    m = xhat.shape[0] * xhat.shape[2] * xhat.shape[3]
    dgamma = (g * xhat).sum(axis=(0, 2, 3))
    dbeta = g.sum(axis=(0, 2, 3))
    gx = _bcast(gamma * inv_std / m) * (m * g - _bcast(dbeta) - xhat * _bcast(dgamma))
    return (gx,), {"gamma": dgamma, "beta": dbeta}


def batch_norm_vjp(x, gamma, beta, g, eps=1e-5, *, mean=None, var=None):
    """Stand-alone VJP of :func:`batch_norm` (either mode)."""
    from .recording import Tape

    tape = Tape()
    batch_norm(x, gamma, beta, eps, mean=mean, var=var, tape=tape)
    return tape.records[-1].backward(g)


def scale_channels(x, lam, *, tape=None, counter=None, name="layer_scale"):
    """Per-channel scaling (LayerScale)."""
    lam = _channel_vector(lam, x.shape[1], "lambda")
    out = x * _bcast(lam)
    if tape is not None:
        tape.record(name, (x,), out, lambda g: scale_channels_vjp(x, lam, g))
    if counter is not None:
        counter.add(name, params=lam.size, aux_ops=out.size)
    return out


def scale_channels_vjp(x, lam, g):
    return (g * _bcast(lam),), {"lambda": (g * x).sum(axis=(0, 2, 3))}
