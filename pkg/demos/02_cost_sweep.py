# %% [markdown]
# # Parameters and GFLOPs of VAN-Tiny across kernel sizes
#
# Analytic walk of the architecture at 224x224 for every design and kernel
# size, in the layout of the comparison table (params in M, GFLOPs).

# %%
from lska.attention import AttentionVariant
from lska.cost import model_cost
from lska.van import ModelConfig

ks = (7, 11, 23, 35, 53, 65)
order = [AttentionVariant.LKA_TRIVIAL, AttentionVariant.LSKA_TRIVIAL, AttentionVariant.LKA, AttentionVariant.LSKA]
print("k   " + "".join(f"{v.value:>22s}" for v in order))
for k in ks:
    cells = []
    for v in order:
        rep = model_cost(ModelConfig.create("tiny", v, k))
        cells.append(f"{rep.params / 1e6:10.2f}M {rep.gflops:8.2f}G")
    print(f"{k:<4d}" + "".join(f"{c:>22s}" for c in cells))

# %% the same rows from the command line
#   lska sweep --capacity tiny --out sweep.csv
#   lska sweep --variants lka-trivial,lska-trivial --ks 23,65 --channels 32 --hw 56 --bench --reps 50
