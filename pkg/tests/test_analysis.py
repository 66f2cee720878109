import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lska.analysis import (CLAMP, DegenerateERFError, DegenerateSeriesWarning, ERFMap,
                           column_correlations, compute_erf, correlation, dimensionality,
                           erf_radius, factor_scores, mutual_information, pgm_bytes, read_pgm,
                           write_pgm)
from lska.attention import build_attention, KernelSpec
from lska.conv import ConvKernel, dw_conv


def radius_oracle(grid, mass):
    """Brute force: enumerate every centred square explicitly."""
    H, W = grid.shape
    c0, c1 = H // 2, W // 2
    total = sum(sum(row) for row in grid.tolist())
    for r in range(max(H, W) + 1):
        s = 0.0
        for i in range(max(c0 - r, 0), min(c0 + r + 1, H)):
            for j in range(max(c1 - r, 0), min(c1 + r + 1, W)):
                s += grid[i, j]
        if s >= mass * total * (1 - 1e-12):
            return r


class TestRadius:
    def test_delta(self):
        g = np.zeros((9, 9))
        g[4, 4] = 1
        assert erf_radius(ERFMap(g)) == 0

    def test_uniform_full_mass(self):
        assert erf_radius(np.full((16, 16), 1 / 256), 1.0) == 8

    def test_gaussian(self):
        sigma = 5
        i = np.arange(101) - 50
        g = np.exp(-(i[:, None] ** 2 + i[None, :] ** 2) / (2 * sigma ** 2))
        g /= g.sum()
        r = erf_radius(g, 0.95)
        assert r == radius_oracle(g, 0.95)
        assert abs(r - 2 * sigma) <= 1

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), mass=st.floats(0.05, 1.0))
    def test_matches_bruteforce(self, seed, mass):
        g = np.random.default_rng(seed).random((11, 13))
        assert erf_radius(g, mass) == radius_oracle(g, mass)


class _DwModel:
    def __init__(self, w):
        self.kernel = ConvKernel("depthwise-2d", w)

    def features(self, x, tape=None):
        return dw_conv(x, self.kernel, tape=tape)


class TestComputeERF:
    def test_support_3x3(self, rng):
        w = rng.uniform(0.5, 1.0, (3, 3, 3))
        erf = compute_erf(_DwModel(w), rng.standard_normal((2, 3, 11, 11)))
        nz = np.argwhere(erf.grid > 0)
        assert nz.min(0).tolist() == [4, 4] and nz.max(0).tolist() == [6, 6]
        assert erf.grid.sum() == pytest.approx(1, abs=1e-9) and erf.grid.min() >= 0

    def test_degenerate(self, rng):
        with pytest.raises(DegenerateERFError):
            compute_erf(_DwModel(np.zeros((3, 3, 3))), rng.standard_normal((1, 3, 8, 8)))

    def test_batch_permutation(self, rng):
        m = build_attention("lska", KernelSpec(7, 2), 3, seed=1)

        class M:
            def features(self, x, tape=None):
                return m(x, tape=tape)

        x = rng.standard_normal((3, 3, 12, 12))
        a = compute_erf(M(), x).grid
        b = compute_erf(M(), x[[2, 0, 1]]).grid
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)

    def test_empty(self):
        with pytest.raises(ValueError):
            compute_erf(_DwModel(np.ones((3, 3, 3))), np.zeros((0, 3, 4, 4)))


def test_pgm_roundtrip(tmp_path, rng):
    g = rng.random((5, 7))
    path = tmp_path / "a.pgm"
    write_pgm(path, g)
    assert path.read_bytes()[:2] == b"P5"
    pixels, maxval = read_pgm(path)
    assert maxval == 255 and pixels.shape == (5, 7) and pixels.max() == 255
    assert pgm_bytes(np.zeros((2, 2))).endswith(bytes(4))


class TestCorrelation:
    def test_identical_and_opposite(self, rng):
        z = rng.standard_normal(50)
        assert correlation(z, z) == pytest.approx(1.0, abs=1e-14)
        assert correlation(z, -z) == pytest.approx(-1.0, abs=1e-14)

    def test_hand_value(self):
        # mean-centred: cov = 11, var products = 5 * 26
        assert correlation([1, 2, 3, 4], [2, 4, 5, 9]) == pytest.approx(11 / math.sqrt(130), abs=1e-12)
        assert correlation([1, 2, 3, 4], [2, 4, 5, 9]) == pytest.approx(0.96476, abs=1e-5)

    def test_zero_variance(self):
        with pytest.warns(DegenerateSeriesWarning):
            assert correlation([1, 1, 1], [1, 2, 3]) == 0.0
        c, flag = column_correlations(np.ones((4, 2)), np.arange(8.0).reshape(4, 2))
        assert flag.all() and (c == 0).all()

    def test_too_short(self):
        with pytest.raises(ValueError):
            correlation([1.0], [2.0])

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), a=st.floats(0.01, 100), g=st.floats(0.01, 100),
           b=st.floats(-100, 100), e=st.floats(-100, 100))
    def test_affine_invariance(self, seed, a, g, b, e):
        r = np.random.default_rng(seed)
        za = r.standard_normal(30)
        zb = 0.3 * za + r.standard_normal(30)
        assert correlation(a * za + b, g * zb + e) == pytest.approx(correlation(za, zb), abs=1e-9)


class TestMutualInformation:
    def test_values(self):
        assert mutual_information(0.0) == 0.0
        assert mutual_information(0.8) == pytest.approx(-0.5 * math.log(0.36), abs=1e-12)
        assert mutual_information(0.8) == pytest.approx(0.51083, abs=1e-4)
        assert mutual_information(-0.3) == mutual_information(0.3)

    def test_clamped(self):
        assert mutual_information(1.0) == pytest.approx(-0.5 * math.log(1 - CLAMP ** 2))
        assert mutual_information(1.0) == pytest.approx(6.56, abs=0.01)

    @given(st.floats(0, 0.999), st.floats(0, 0.999))
    def test_monotone(self, a, b):
        lo, hi = sorted((a, b))
        assert mutual_information(lo) <= mutual_information(hi)


class TestScores:
    def test_identical_shape(self, rng):
        z = rng.standard_normal((40, 6))
        s = factor_scores({"shape": (z, z)})
        assert s[0] == pytest.approx(6, abs=1e-12) and s[1:] == (0.0, 0.0)

    def test_independent(self):
        r = np.random.default_rng(0)
        N = 64
        za, zb = r.standard_normal((2, 10_000, N))
        s_shape, s_tex, _ = factor_scores({"shape": (za, zb), "texture": (zb, za[::-1])})
        assert abs(s_shape) < 0.05 * N and abs(s_tex) < 0.05 * N

    def test_cancellation(self):
        t = np.arange(10.0)
        za = np.stack([t, t], axis=1)
        zb = np.stack([t + np.sin(t), -(t + np.sin(t))], axis=1)
        assert factor_scores({"shape": (za, zb)})[0] == pytest.approx(0, abs=1e-12)

    def test_width_mismatch(self):
        with pytest.raises(ValueError):
            factor_scores({"shape": (np.zeros((3, 4)),) * 2, "texture": (np.zeros((3, 5)),) * 2})


class TestDimensionality:
    def test_uniform(self):
        assert dimensionality((0, 0, 0), 256) == pytest.approx((256 / 3,) * 3, abs=0.01)

    def test_one_hot(self):
        assert dimensionality((1, 0, 0), 256)[0] == pytest.approx(math.e / (math.e + 2) * 256, abs=1e-9)

    def test_shift_invariant(self):
        assert dimensionality((11, 10, 10), 256) == pytest.approx(dimensionality((1, 0, 0), 256), abs=1e-9)

    @given(st.lists(st.floats(-300, 300), min_size=3, max_size=3), st.integers(1, 4096))
    def test_sums_to_n(self, s, N):
        d = dimensionality(s, N)
        assert abs(sum(d) - N) <= 1e-9 and min(d) >= 0

