"""Finite-difference gradient checks and the named property suite behind
``lska verify``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import conv, tensor
from .analysis import column_correlations, dimensionality, mutual_information
from .attention import (PAPER_DILATIONS, AttentionVariant, KernelSpec, build_attention, layer_shapes,
                        support_stack)
from .conv import ConvKernel, receptive_field_analytic
from .cost import attention_flops_analytic, attention_params_analytic, instrumented_count
from .recording import Tape

PAPER_PAIRS = tuple(PAPER_DILATIONS.items())


def relative_error(a, b, floor=1e-8):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def central_difference(f, x, index, h=1e-5):
    """(f(x + h e_i) - f(x - h e_i)) / 2h for scalar-valued ``f``; ``x`` is
    perturbed in place and restored."""
    old = x[index]
    x[index] = old + h
    fp = f()
    x[index] = old - h
    fm = f()
    x[index] = old
    return (fp - fm) / (2 * h)


@dataclass
class OpCase:
    """One differentiable op with its differentiable arrays named."""

    name: str
    run: Callable  # (arrays dict, tape or None) -> output
    arrays: dict
    # how each array is reached in the gradients: "input:<i>" or "param:<key>"
    routes: dict


def _random_coords(rng, shape, n):
    flat = rng.choice(int(np.prod(shape)), size=min(n, int(np.prod(shape))), replace=False)
    return [np.unravel_index(i, shape) for i in flat]


def check_case(case, rng, n_coords=20, h=1e-5):
    """Max relative error between tape gradients and central differences
    over ``n_coords`` random coordinates of every differentiable array."""
    tape = Tape()
    out = case.run(case.arrays, tape)
    upstream = rng.uniform(-1, 1, size=out.shape)
    grads = tape.backward(out, upstream)
    rec = tape.records[-1]
    worst = 0.0
    for key, arr in case.arrays.items():
        route = case.routes[key]
        if route.startswith("input:"):
            analytic = grads.wrt(rec.inputs[int(route[6:])])
        else:
            analytic = grads.params[(rec.name, route[6:])]
        loss = lambda: float(np.sum(upstream * case.run(case.arrays, None)))
        for idx in _random_coords(rng, arr.shape, n_coords):
            fd = central_difference(loss, arr, idx, h)
            worst = max(worst, float(relative_error(analytic[idx], fd)))
    return worst


def _dw_case(rng, kind, kh, kw, d, bias=False):
    C = 3
    x = rng.uniform(-1, 1, (2, C, 9, 10))
    w = rng.uniform(-1, 1, (C, kh, kw))
    arrays = {"x": x, "w": w}
    routes = {"x": "input:0", "w": "param:weight"}
    if bias:
        arrays["b"] = rng.uniform(-1, 1, C)
        routes["b"] = "param:bias"

    def run(a, tape):
        k = ConvKernel(kind, a["w"], dilation=d, bias=a.get("b"))
        return conv.dw_conv(a["x"], k, tape=tape)
    return OpCase(f"dw_conv[{kind},{kh}x{kw},d={d}]", run, arrays, routes)


def gradient_cases(seed=0):
    rng = np.random.default_rng(seed)
    cases = [
        _dw_case(rng, "depthwise-2d", 3, 3, 1),
        _dw_case(rng, "depthwise-2d", 3, 3, 2, bias=True),
        _dw_case(rng, "depthwise-1d-horizontal", 1, 5, 2),
        _dw_case(rng, "depthwise-1d-vertical", 5, 1, 3),
    ]

    x = rng.uniform(-1, 1, (2, 4, 5, 6))
    pw = {"x": x, "w": rng.uniform(-1, 1, (3, 4)), "b": rng.uniform(-1, 1, 3)}
    cases.append(OpCase(
        "pointwise_conv",
        lambda a, t: conv.pointwise_conv(a["x"], ConvKernel("pointwise", a["w"], bias=a["b"]), tape=t),
        pw, {"x": "input:0", "w": "param:weight", "b": "param:bias"}))

    dn = {"x": rng.uniform(-1, 1, (1, 3, 12, 12)), "w": rng.uniform(-1, 1, (4, 3, 3, 3)),
          "b": rng.uniform(-1, 1, 4)}
    cases.append(OpCase(
        "dense_conv[3x3,s=2]",
        lambda a, t: conv.dense_conv(a["x"], ConvKernel("dense", a["w"], bias=a["b"], stride=2), tape=t),
        dn, {"x": "input:0", "w": "param:weight", "b": "param:bias"}))

    cases.append(OpCase("gelu", lambda a, t: tensor.gelu(a["x"], tape=t),
                        {"x": rng.uniform(-3, 3, (2, 3, 4, 4))}, {"x": "input:0"}))

    C = 3
    bn = {"x": rng.uniform(-1, 1, (2, C, 4, 5)), "gamma": rng.uniform(0.5, 1.5, C),
          "beta": rng.uniform(-1, 1, C)}
    mean, var = rng.uniform(-0.5, 0.5, C), rng.uniform(0.5, 2.0, C)
    cases.append(OpCase(
        "batch_norm[frozen]",
        lambda a, t: tensor.batch_norm(a["x"], a["gamma"], a["beta"], mean=mean, var=var, tape=t),
        bn, {"x": "input:0", "gamma": "param:gamma", "beta": "param:beta"}))
    bn2 = {k: v.copy() for k, v in bn.items()}
    cases.append(OpCase(
        "batch_norm[batch]",
        lambda a, t: tensor.batch_norm(a["x"], a["gamma"], a["beta"], tape=t),
        bn2, {"x": "input:0", "gamma": "param:gamma", "beta": "param:beta"}))

    hd = {"a": rng.uniform(-1, 1, (2, 3, 4, 4)), "b": rng.uniform(-1, 1, (2, 3, 4, 4))}
    cases.append(OpCase("hadamard", lambda a, t: tensor.hadamard(a["a"], a["b"], tape=t),
                        hd, {"a": "input:0", "b": "input:1"}))

    sc = {"x": rng.uniform(-1, 1, (2, 3, 4, 4)), "lam": rng.uniform(-1, 1, 3)}
    cases.append(OpCase("scale_channels", lambda a, t: tensor.scale_channels(a["x"], a["lam"], tape=t),
                        sc, {"x": "input:0", "lam": "param:lambda"}))
    return cases


@dataclass
class PropertyResult:
    name: str
    group: str
    passed: bool
    detail: str


def _prop(name, group, passed, detail):
    return PropertyResult(name, group, bool(passed), detail)


def check_rank1(trials=5, seed=0):
    from .attention import rank1_equivalence_check

    out = []
    for k, d in PAPER_PAIRS:
        err = rank1_equivalence_check(KernelSpec(k, d), 4, trials, seed)
        out.append(_prop(f"rank1 k={k} d={d}", "rank1", err < 1e-12, f"max|diff|={err:.3e}"))
    return out


def check_gradients(seed=0, n_coords=20, tol=1e-6):
    out = []
    for case in gradient_cases(seed):
        err = check_case(case, np.random.default_rng(seed + 1), n_coords)
        out.append(_prop(f"gradient-check {case.name}", "gradient-check", err <= tol, f"max rel err={err:.2e}"))
    return out


def check_mrf():
    from .conv import impulse_support

    out = []
    for k, d in PAPER_PAIRS:
        for variant in (AttentionVariant.LKA, AttentionVariant.LSKA):
            spec = KernelSpec(k, d)
            ext = impulse_support(support_stack(variant, spec), (2 * k + 1, 2 * k + 1))
            mrf = receptive_field_analytic(axis_chain(variant, spec))
            out.append(_prop(f"mrf {variant.value} k={k}", "mrf", ext == (k, k) and mrf == k,
                             f"support={ext} analytic={mrf}"))
    return out


def axis_chain(variant, spec):
    """Vertical-axis (extent, dilation) chain of the depth-wise layers; a
    horizontal 1-D layer contributes extent 1 along this axis."""
    return [(kh, d) for _, kh, _, d in layer_shapes(variant, spec)]


def check_cost(channels=(8,), hw=(7,)):
    out = []
    for variant in AttentionVariant:
        for k, d in PAPER_PAIRS:
            for C in channels:
                for h in hw:
                    module = build_attention(variant, KernelSpec(k, d), C, seed=k)
                    rep = instrumented_count(module, np.zeros((1, C, h, h)))
                    want = attention_flops_analytic(variant, k, d, C, h, h)
                    pwant = attention_params_analytic(variant, k, d, C)
                    out.append(_prop(f"cost {variant.value} k={k} C={C} hw={h}", "cost",
                                     rep.macs == want and rep.params == pwant,
                                     f"macs {rep.macs} vs {want}, params {rep.params} vs {pwant}"))
    return out


def check_probe(seed=0):
    rng = np.random.default_rng(seed)
    out = [
        _prop("probe mi(0)", "probe", mutual_information(0.0) == 0.0, f"{mutual_information(0.0)}"),
        _prop("probe mi(0.8)", "probe", abs(mutual_information(0.8) - 0.51083) <= 1e-4,
              f"{mutual_information(0.8):.6f}"),
    ]
    dims = dimensionality((0.0, 0.0, 0.0), 256)
    out.append(_prop("probe uniform dims", "probe", all(abs(v - 256 / 3) <= 0.01 for v in dims),
                     f"{dims}"))
    worst_sum = 0.0
    worst_aff = 0.0
    for _ in range(1000):
        s = rng.normal(0, 20, 3)
        worst_sum = max(worst_sum, abs(sum(dimensionality(s, 256)) - 256))
        za, zb = rng.standard_normal((2, 16))
        zb = zb + 0.5 * za
        a, g = rng.uniform(0.1, 10, 2)
        b, e = rng.uniform(-10, 10, 2)
        c0 = column_correlations(za, zb)[0][0]
        c1 = column_correlations(a * za + b, g * zb + e)[0][0]
        worst_aff = max(worst_aff, abs(c0 - c1))
    out.append(_prop("probe sum N_k == N", "probe", worst_sum <= 1e-9, f"max dev={worst_sum:.2e}"))
    out.append(_prop("probe affine invariance", "probe", worst_aff <= 1e-12, f"max dev={worst_aff:.2e}"))
    return out


SUITES = {
    "rank1": check_rank1,
    "gradient-check": check_gradients,
    "mrf": check_mrf,
    "cost": check_cost,
    "probe": check_probe,
}


def run_suite(filters=None):
    """Run every property group whose name contains one of ``filters``."""
    results = []
    for group, fn in SUITES.items():
        if filters and not any(f in group for f in filters):
            continue
        results.extend(fn())
    return results
