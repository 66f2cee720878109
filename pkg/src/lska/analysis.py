"""Effective receptive fields and shape/texture dimensionality estimation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .van import input_gradient

CLAMP = 0.999999
FACTORS = ("shape", "texture", "residual")


class DegenerateERFError(ValueError):
    pass


class DegenerateSeriesWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class ERFMap:
    grid: np.ndarray
    source_k: int | None = None
    n_inputs: int = 1


def compute_erf(model, inputs, seed=0, *, source_k=None):
    """Normalized sum of |d center / d input| over a batch of inputs.

    Inputs are processed one at a time in batch order; ``seed`` is kept for
    call-signature compatibility with random-input drivers and does not
    influence the result once ``inputs`` is fixed.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 4 or inputs.shape[0] == 0:
        raise ValueError("compute_erf needs a non-empty (N, C, H, W) batch")
    acc = np.zeros(inputs.shape[2:])
    for img in inputs:
        g = input_gradient(model, img[None])
        acc += np.abs(g).sum(axis=(0, 1))
    total = acc.sum()
    if not np.isfinite(total) or total <= 0:
        raise DegenerateERFError("degenerate ERF: input gradient is identically zero")
    if source_k is None:
        source_k = getattr(getattr(model, "config", None), "kernel", None)
        source_k = getattr(source_k, "k", None)
    return ERFMap(acc / total, source_k, inputs.shape[0])


def random_inputs(n, hw, seed=0, channels=3):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, channels, hw, hw))


def erf_radius(erf, mass=0.95):
    """Smallest half-width r such that the square of side 2r+1 centred on
    the grid centre holds at least ``mass`` of the map."""
    grid = erf.grid if isinstance(erf, ERFMap) else np.asarray(erf, dtype=np.float64)
    if not 0 < mass <= 1:
        raise ValueError("mass must lie in (0, 1]")
    H, W = grid.shape
    ch, cw = H // 2, W // 2
    total = grid.sum()
    # float slack so that mass=1.0 is reachable despite summation order
    target = mass * total * (1 - 1e-12)
    csum = np.pad(grid.cumsum(0).cumsum(1), ((1, 0), (1, 0)))
    for r in range(max(H, W) + 1):
        r0, r1 = max(ch - r, 0), min(ch + r + 1, H)
        c0, c1 = max(cw - r, 0), min(cw + r + 1, W)
        inside = csum[r1, c1] - csum[r0, c1] - csum[r1, c0] + csum[r0, c0]
        if inside >= target:
            return float(r)
    return float(max(H, W))


def pgm_bytes(grid):
    """Binary greyscale (P5) image, linearly scaled so the maximum is 255."""
    grid = np.asarray(grid, dtype=np.float64)
    peak = grid.max()
    scaled = np.zeros(grid.shape) if peak <= 0 else grid / peak * 255.0
    pixels = np.clip(np.rint(scaled), 0, 255).astype(np.uint8)
    header = f"P5\n{grid.shape[1]} {grid.shape[0]}\n255\n".encode("ascii")
    return header + pixels.tobytes()


def write_pgm(path, grid):
    Path(path).write_bytes(pgm_bytes(grid))


def read_pgm(path):
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM file")
    W, H, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    return np.frombuffer(parts[4], dtype=np.uint8, count=W * H).reshape(H, W), maxval


# -- representation probe ---------------------------------------------------

def column_correlations(Za, Zb):
    """Pearson correlation of each column of ``Za`` with the same column of
    ``Zb``.  Returns ``(c, degenerate)``; zero-variance columns get c = 0
    and ``degenerate`` True."""
    Za = np.asarray(Za, dtype=np.float64)
    Zb = np.asarray(Zb, dtype=np.float64)
    if Za.shape != Zb.shape:
        raise ValueError(f"paired latents differ in shape: {Za.shape} vs {Zb.shape}")
    if Za.ndim == 1:
        Za, Zb = Za[:, None], Zb[:, None]
    if Za.shape[0] < 2:
        raise ValueError("need at least two pairs")
    if not (np.all(np.isfinite(Za)) and np.all(np.isfinite(Zb))):
        raise ValueError("latents contain non-finite values")
    da = Za - Za.mean(axis=0)
    db = Zb - Zb.mean(axis=0)
    cov = (da * db).sum(axis=0)
    scale = np.sqrt((da * da).sum(axis=0) * (db * db).sum(axis=0))
    degenerate = scale == 0
    c = np.divide(cov, scale, out=np.zeros_like(cov), where=~degenerate)
    return np.clip(c, -1.0, 1.0), degenerate


def correlation(za, zb):
    c, degenerate = column_correlations(np.ravel(za), np.ravel(zb))
    if degenerate[0]:
        warnings.warn("zero-variance series; correlation set to 0", DegenerateSeriesWarning, stacklevel=2)
    return float(c[0])


def mutual_information(c):
    """Gaussian MI in nats, with |c| clamped below 1."""
    c = np.clip(c, -CLAMP, CLAMP)
    out = -0.5 * np.log1p(-np.square(c))
    return float(out) if np.ndim(out) == 0 else out


def factor_scores(pairs):
    """``pairs`` maps factor name -> (Za, Zb).  Returns (s_shape, s_texture,
    s_residual); the residual score is fixed at 0 and missing factors score 0."""
    widths = {name: np.shape(za)[1] for name, (za, _) in pairs.items()}
    if len(set(widths.values())) > 1:
        raise ValueError(f"latent dimension differs between factors: {widths}")
    scores = []
    for name in FACTORS[:2]:
        if name in pairs:
            c, _ = column_correlations(*pairs[name])
            scores.append(float(c.sum()))
        else:
            scores.append(0.0)
    return scores[0], scores[1], 0.0


def dimensionality(scores, N):
    s = np.asarray(scores, dtype=np.float64)
    e = np.exp(s - s.max())
    return tuple(float(v) for v in e / e.sum() * N)


@dataclass(frozen=True)
class ProbeReport:
    scores: tuple
    dims: tuple
    N: int
    pair_counts: dict
    degenerate: dict

    def rows(self):
        return [(name, s, n, 100.0 * n / self.N) for name, s, n in zip(FACTORS, self.scores, self.dims)]


def probe(pairs):
    """Score shape/texture pairs and allocate the latent dimension."""
    N = None
    degenerate = {}
    for name, (za, zb) in pairs.items():
        N = np.shape(za)[1] if N is None else N
        degenerate[name] = int(column_correlations(za, zb)[1].sum())
    scores = factor_scores(pairs)
    return ProbeReport(scores, dimensionality(scores, N), N,
                       {name: int(np.shape(za)[0]) for name, (za, _) in pairs.items()},
                       degenerate)


def load_probe_dir(directory, N=None):
    """Read ``shape_a.csv``, ``shape_b.csv``, ``texture_a.csv``, ``texture_b.csv``."""
    directory = Path(directory)
    pairs = {}
    for factor in FACTORS[:2]:
        mats = []
        for side in "ab":
            path = directory / f"{factor}_{side}.csv"
            if not path.exists():
                raise FileNotFoundError(f"missing probe file {path}")
            m = np.loadtxt(path, delimiter=",", ndmin=2)
            if N is not None and m.shape[1] != N:
                raise ValueError(f"{path.name}: expected {N} columns, found {m.shape[1]}")
            mats.append((path, m))
        (pa, a), (pb, b) = mats
        if a.shape != b.shape:
            raise ValueError(f"{pb.name}: shape {b.shape} does not match {pa.name} {a.shape}")
        pairs[factor] = (a, b)
    ws = {f: p[0].shape[1] for f, p in pairs.items()}
    if ws["shape"] != ws["texture"]:
        raise ValueError(f"texture_a.csv: {ws['texture']} columns, shape files have {ws['shape']}")
    return pairs
