"""
Reading the learned patterns
============================

Columns of ``W`` are monthly spend profiles; their running sums are
cumulative spend curves that reach 100% when the budget is used up.  Rows of
``H`` say how much each project follows each profile, so the largest entry
gives a cluster label.
"""

import numpy as np

from tsmc import FitConfig, cluster_assign, cumulative_patterns, fit, synthesize

inst = synthesize(M=36, N=200, F=3, missing_rate=0.4, seed=1)
res = fit(inst.X, inst.mask, inst.budgets, FitConfig(seed=1))

curves = cumulative_patterns(res.W)
for f in range(curves.shape[1]):
    half = int(np.argmax(curves[:, f] >= 0.5))
    print("component %d spends half its budget by month %d" % (f + 1, half))

labels = cluster_assign(res.H)
print("projects per component:", np.bincount(labels, minlength=3).tolist())

# %%
# Plot-ready output, if matplotlib is around.
try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None:
    plt.plot(100 * curves)
    plt.xlabel("month")
    plt.ylabel("cumulative spend (% of budget)")
    plt.legend(["component %d" % (f + 1) for f in range(curves.shape[1])])
    plt.savefig("patterns.png", dpi=100)
    print("wrote patterns.png")
