"""Wall-clock timing with a fixed warm-up."""

from __future__ import annotations

import time

import numpy as np

WARMUP = 5


def time_callable(fn, reps=50, warmup=WARMUP):
    """Seconds per call for ``reps`` timed calls after ``warmup`` untimed ones."""
    for _ in range(warmup):
        fn()
    out = np.empty(reps)
    for i in range(reps):
        t0 = time.perf_counter()
        fn()
        out[i] = time.perf_counter() - t0
    return out


def bench_attention(variant, spec, C, hw, reps=50, seed=0, warmup=WARMUP):
    """Times (s) of one attention-module forward on a (1, C, hw, hw) input."""
    from .attention import build_attention

    module = build_attention(variant, spec, C, seed=seed)
    x = np.random.default_rng(seed).standard_normal((1, C, hw, hw))
    return time_callable(lambda: module(x), reps, warmup)
