"""
Projecting onto a scaled simplex
================================

Every update of the solver ends with a Euclidean projection onto
``{z >= 0, sum(z) = s}``.  This script shows what the projection does and
checks it against the exhaustive active-set oracle.
"""

import numpy as np

from tsmc.simplex import project_onto_scaled_simplex, projection_oracle

# %%
# A point already on the unit simplex does not move.
print(project_onto_scaled_simplex([0.2, 0.3, 0.5]))

# %%
# Otherwise every coordinate is shifted by the same amount and clipped at 0.
v = np.array([0.5, 0.5, 1.0])
z = project_onto_scaled_simplex(v)
print(z, "shift =", (v - z)[0])

# %%
# The total need not be one.  Here two missing months must share the 0.5 of
# budget that is still unspent.
print(project_onto_scaled_simplex([0.4, 0.2], 0.5))

# %%
# Exhaustive check against the oracle on a few random vectors.
rng = np.random.default_rng(0)
worst = 0.0
for _ in range(200):
    v = rng.uniform(-5, 5, rng.integers(1, 8))
    s = rng.choice([0.0, 0.5, 1.0, 3.0])
    worst = max(worst, np.abs(project_onto_scaled_simplex(v, s) - projection_oracle(v, s)).max())
print("largest disagreement with the oracle: %.1e" % worst)
