import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def direct_conv_reference(x, w, d=1):
    """Pure-Python depth-wise cross-correlation with zero same-padding."""
    N, C, H, W = x.shape
    kh, kw = w.shape[1:]
    ch, cw = kh // 2, kw // 2
    out = np.zeros_like(x)
    for n in range(N):
        for c in range(C):
            for i in range(H):
                for j in range(W):
                    s = 0.0
                    for a in range(kh):
                        for b in range(kw):
                            ii, jj = i + d * (a - ch), j + d * (b - cw)
                            if 0 <= ii < H and 0 <= jj < W:
                                s += w[c, a, b] * x[n, c, ii, jj]
                    out[n, c, i, j] = s
    return out


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split("]")[1].split(".")[0])):
            terminalreporter.write_line(line)
