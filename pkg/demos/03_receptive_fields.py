# %% [markdown]
# # Maximum and effective receptive fields
#
# The maximum receptive field of each stack is measured by pushing an impulse
# through all-ones kernels.  The effective receptive field is the normalized
# |input gradient| of the centre of the last feature map.

# %%
import numpy as np

from lska.analysis import compute_erf, erf_radius, random_inputs, write_pgm
from lska.attention import PAPER_DILATIONS, AttentionVariant, KernelSpec, build_attention, support_stack
from lska.conv import impulse_support
from lska.van import ModelConfig, build_van

for k, d in PAPER_DILATIONS.items():
    sizes = [impulse_support(support_stack(v, KernelSpec(k, d)), (2 * k + 1,) * 2)
             for v in (AttentionVariant.LKA, AttentionVariant.LSKA)]
    print(f"k={k:2d} d={d}: LKA {sizes[0]}, LSKA {sizes[1]}")


# %% ERF of a single attention stack grows with k
class Stack:
    def __init__(self, k):
        self.m = build_attention("lska", KernelSpec.for_kernel(k), 1, seed=0)

    def features(self, x, tape=None):
        return self.m.attention_map(x, tape=tape)


x = random_inputs(4, 96, seed=0, channels=1)
for k in (7, 23, 35):
    print(f"attention stack k={k}: radius(0.95) =", erf_radius(compute_erf(Stack(k), x), 0.95))

# %% full random-init VAN-LSKA-Tiny (224x224); writes erf_k*.pgm
inputs = random_inputs(1, 224, seed=0)
for k in (7, 23, 35):
    erf = compute_erf(build_van(ModelConfig.create("tiny", "lska", k)), inputs)
    write_pgm(f"erf_k{k}.pgm", np.sqrt(erf.grid))
    print(f"VAN-LSKA-Tiny k={k}: radius(0.95) =", erf_radius(erf, 0.95))
