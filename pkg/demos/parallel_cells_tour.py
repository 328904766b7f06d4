"""A quick tour of parallel-cell layers: shapes, parameter counts, masking."""
# %%
import numpy as np

from pcrnn import CellKind, RoutingMode, build_layer, count_params, pc_forward, zero_states

rng = np.random.default_rng(0)

# %% [markdown]
# One 12-unit LSTM versus three 4-unit LSTMs. With split routing each small
# cell only sees its own quarter of the input, so the weights shrink by ~1/n.

# %%
for wide in (1, 2, 3, 4, 6):
    layer = build_layer(CellKind.lstm(), 12, 12, wide, RoutingMode.SPLIT)
    print(f"wide={wide}: {len(layer.cells)} cells of {layer.cell_hidden} units, "
          f"{count_params(layer)} parameters")

# %% [markdown]
# Full routing hands the whole input to every cell instead.

# %%
full = build_layer(CellKind.lstm(), 12, 12, 3, RoutingMode.FULL)
print("full routing, wide=3:", count_params(full), "parameters")

# %% [markdown]
# Outputs are concatenated in cell order. Masking a cell zeroes its slice and
# leaves the other slices untouched.

# %%
layer = build_layer(CellKind.lstm(), 12, 12, 3, RoutingMode.SPLIT)
for a in layer.arrays():
    a[...] = rng.uniform(-0.5, 0.5, a.shape)
x = rng.normal(size=(1, 12))
_, h, _ = pc_forward(layer, x, zero_states(layer, (1,)))
_, h_masked, _ = pc_forward(layer, x, zero_states(layer, (1,)), mask={1})
np.set_printoptions(precision=3, suppress=True)
print("unmasked:", h[0])
print("mask {1}:", h_masked[0])
