# %% [markdown]
# # The four large-kernel attention designs
#
# Build each design at k=23 (dilation 3), list its layers, and check that an
# LKA whose 2-D kernels are outer products of LSKA's 1-D kernels gives the
# same output as LSKA.

# %%
import numpy as np

from lska.attention import AttentionVariant, KernelSpec, build_attention, lka_from_separable
from lska.cost import attention_params_analytic

spec = KernelSpec.for_kernel(23)
for variant in AttentionVariant:
    m = build_attention(variant, spec if not variant.trivial else KernelSpec(23, 1), 32, seed=0)
    layers = ", ".join(f"{l.kind}{tuple(l.extent)}d{l.dilation}" for l in m.layers)
    print(f"{variant.value:13s} params={m.n_params:6d}  [{layers}]")

# %% the closed forms agree with the built modules
print(attention_params_analytic("lka", 23, 3, 32), attention_params_analytic("lska", 23, 3, 32))

# %% separability: LKA with rank-1 kernels == LSKA
lska = build_attention("lska", spec, 4, seed=1)
lka = lka_from_separable(lska)
F = np.random.default_rng(0).standard_normal((1, 4, 46, 46))
print("max |LKA - LSKA| =", np.abs(lka(F) - lska(F)).max())
