"""
From CSV ledgers to forecasts
=============================

The same steps as the ``tsmc`` command line, driven from Python: write a
synthetic dataset, fit it, then run a temporal train/test evaluation.
"""

import json
import os
import tempfile

from tsmc import cli

work = tempfile.mkdtemp(prefix="tsmc-demo-")
data = os.path.join(work, "data")

cli.main(["synth", "--out", data, "--seed", "3"])

# %%
# expenses.csv holds only the observed months; fit writes the model, the
# forecasts and two report CSVs next to the forecasts.
cli.main([
    "fit", "--data", os.path.join(data, "expenses.csv"), "--meta", os.path.join(data, "projects.csv"),
    "--model", os.path.join(work, "model.json"), "--out", os.path.join(work, "forecasts.csv"),
])
print(sorted(os.listdir(work)))

# %%
# truth.csv holds full ledgers at staggered calendar start dates.  Records
# dated June 2012 or later are held out and forecast.
cli.main([
    "evaluate", "--data", os.path.join(data, "truth.csv"), "--meta", os.path.join(data, "projects.csv"),
    "--cutoff", "2012-06", "--out", os.path.join(work, "report.json"),
])
with open(os.path.join(work, "report.json")) as fh:
    print(json.dumps(json.load(fh), indent=1))
