"""
Against median and KNN imputation
=================================

Median and KNN imputers do not know about budgets, so their predictions are
rescaled to the unspent budget of each project before scoring.
"""

import numpy as np

from tsmc.evaluation import evaluate, synthesize

scores = {}
for seed in range(5):
    inst = synthesize(M=36, N=200, F=3, missing_rate=0.4, seed=seed)
    truth = inst.X_full * inst.budgets
    for r in evaluate(inst.X, inst.mask, inst.budgets, truth, ~inst.mask):
        scores.setdefault(r.method, []).append(r.relative_rmse)

for method, vals in scores.items():
    print("%-7s mean relative RMSE %.4f" % (method, np.mean(vals)))
