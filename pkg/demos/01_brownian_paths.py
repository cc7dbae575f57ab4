# %% [markdown]
# # Sampling Brownian paths on a dyadic grid
#
# Every path in a batch comes from its own counter-based stream keyed by
# `(seed, path index)`, so a batch is reproducible bit for bit and does not
# depend on how many workers drew it.

# %%
import numpy as np

from wienershift import TimeGrid, cm_norm_sq, ito_sum, sample_paths
from wienershift.grid import DensityPath

grid = TimeGrid(256)
batch = sample_paths(grid, 20_000, seed=0)
w = batch.values
print("shape", w.shape, "dt", grid.dt)

# %% [markdown]
# Marginal variances should track `t`, and the covariance `min(s, t)`.

# %%
for t in (0.125, 0.5, 1.0):
    i = grid.index_of(t)
    print(f"t={t:5.3f}  var={w[:, i].var():.4f}")
s, t = grid.index_of(0.25), grid.index_of(0.75)
print("cov(w(1/4), w(3/4)) =", np.cov(w[:, s], w[:, t])[0, 1].round(4), "(expect 0.25)")

# %% [markdown]
# Parallel sampling gives the same numbers.

# %%
again = sample_paths(grid, 20_000, seed=0, workers=4)
print("identical under 4 workers:", np.array_equal(again.values, w))

# %% [markdown]
# The two discrete pairings used everywhere else: the Ito sum of a density
# against a path, and the Cameron-Martin norm of a density.

# %%
ones = DensityPath.constant(grid, 1.0)
print("sum 1 dw == w(1):", np.allclose(ito_sum(ones, batch.stack), w[:, -1]))
print("|1|_H^2 =", cm_norm_sq(ones))
