"""
Completing a synthetic expense matrix
=====================================

Build a noiseless rank-3 matrix of budget fractions (36 months x 200
projects), hide 15 consecutive months of every project, and let the solver
fill them in.
"""

import numpy as np

from tsmc import FitConfig, denormalize, fit, relative_rmse, synthesize

inst = synthesize(M=36, N=200, F=3, missing_rate=0.4, seed=0)
print("observed cells: %d of %d" % (inst.mask.sum(), inst.mask.size))

# %%
# Defaults: rank 3, at most 100 iterations, stop when the objective drops by
# less than 1e-4.
res = fit(inst.X, inst.mask, inst.budgets, FitConfig(rank=3, seed=0))
print("iterations:", res.iterations, "converged:", res.converged)
print("objective: %.3g -> %.3g" % (res.objective_trace[0], res.objective_trace[-1]))

# %%
# Back to currency units.  Each forecast column spends its budget exactly.
Y = denormalize(res.Z, inst.budgets)
print("worst budget gap: %.2e" % np.max(np.abs(Y.sum(axis=0) - inst.budgets) / inst.budgets))

test = ~inst.mask
truth = (inst.X_full * inst.budgets)[test]
print("held-out relative RMSE: %.4f" % relative_rmse(truth, Y[test]))
