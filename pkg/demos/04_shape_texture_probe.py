# %% [markdown]
# # Shape / texture dimensionality from paired latents
#
# Synthetic latents: the first 64 of 256 neurons share signal across shape
# pairs, the next 32 across texture pairs, the rest is noise.

# %%
import numpy as np

from lska.analysis import probe

rng = np.random.default_rng(0)
pairs, N = 2000, 256


def make(shared):
    base = rng.standard_normal((pairs, N))
    za = base + rng.standard_normal((pairs, N))
    zb = rng.standard_normal((pairs, N))
    zb[:, shared] += base[:, shared]
    return za, zb


report = probe({"shape": make(slice(0, 64)), "texture": make(slice(64, 96))})
for name, score, dims, pct in report.rows():
    print(f"{name:8s} score={score:7.2f}  N_k={dims:7.2f}  ({pct:.1f}% of {report.N})")

# %% [markdown]
# Scores are sums of correlations, so they live on a scale of tens here and
# the softmax hands nearly every neuron to the top factor.

# %% from CSV files: lska probe --input-dir latents/ --n 256 --out probe.csv
