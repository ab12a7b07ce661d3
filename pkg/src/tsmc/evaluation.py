"""Metrics, baselines, synthetic data and interpretability reports."""

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .solver import FitConfig, denormalize, fit

__all__ = [
    "EvalReport",
    "SyntheticInstance",
    "rmse",
    "relative_rmse",
    "median_baseline",
    "knn_baseline",
    "budget_rescale",
    "synthesize",
    "cluster_assign",
    "cumulative_patterns",
    "complete",
    "evaluate",
    "reports_to_json",
    "write_patterns_csv",
    "write_clusters_csv",
]

METHODS = ("tsmc", "median", "knn")


@dataclass(frozen=True)
class EvalReport:
    method: str
    rmse: float
    relative_rmse: float
    n_test: int


@dataclass(frozen=True)
class SyntheticInstance:
    X_full: np.ndarray
    mask: np.ndarray
    budgets: np.ndarray
    W_true: np.ndarray
    H_true: np.ndarray

    @property
    def X(self):
        """Observed fractions, zero on missing cells."""
        return np.where(self.mask, self.X_full, 0.0)


def _pair(truth, estimate):
    truth = np.asarray(truth, dtype=float).ravel()
    estimate = np.asarray(estimate, dtype=float).ravel()
    if truth.size == 0:
        raise ValueError("empty input")
    if truth.shape != estimate.shape:
        raise ValueError("truth and estimate differ in length")
    return truth, estimate


def rmse(truth, estimate):
    """``||truth - estimate|| / sqrt(n)``."""
    truth, estimate = _pair(truth, estimate)
    return float(np.linalg.norm(truth - estimate) / math.sqrt(truth.size))


def relative_rmse(truth, estimate):
    """``||truth - estimate|| / ||truth||``."""
    truth, estimate = _pair(truth, estimate)
    scale = np.linalg.norm(truth)
    if scale == 0:
        raise ValueError("relative RMSE undefined for zero-norm truth")
    return float(np.linalg.norm(truth - estimate) / scale)


def median_baseline(X, mask):
    """Fill each missing cell with the median of its row's observed cells.

    Rows with no observation are filled with 0.
    """
    X = np.asarray(X, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    out = np.where(mask, X, 0.0)
    for m in range(X.shape[0]):
        obs = X[m, mask[m]]
        if obs.size:
            out[m, ~mask[m]] = np.median(obs)
    return out


def _nan_distances(X, mask):
    """Column-to-column Euclidean distance over co-observed rows, scaled by
    ``sqrt(M / #co-observed)``; ``inf`` when two columns share no row."""
    M, N = X.shape
    V = np.where(mask, X, 0.0)
    D = np.full((N, N), np.inf)
    for n in range(N):
        both = mask[:, [n]] & mask
        diff = np.where(both, V[:, [n]] - V, 0.0)
        common = both.sum(axis=0)
        ok = common > 0
        D[n, ok] = np.sqrt((diff[:, ok] ** 2).sum(axis=0) * M / common[ok])
    return D


def knn_baseline(X, mask, k=10):
    """Impute each missing cell as the mean of the ``k`` nearest columns
    observed at that row.

    Distances use the nan-aware scaled Euclidean convention of
    :func:`_nan_distances`.  Ties go to the lower column index.  Cells with
    no usable donor fall back to :func:`median_baseline`.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    X = np.asarray(X, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    M, N = X.shape
    out = np.where(mask, X, 0.0)
    fallback = median_baseline(X, mask)
    D = _nan_distances(X, mask)
    for n in np.flatnonzero((~mask).any(axis=0)):
        order = np.argsort(D[n], kind="stable")
        order = order[(order != n) & np.isfinite(D[n, order])]
        for m in np.flatnonzero(~mask[:, n]):
            donors = order[mask[m, order]][:k]
            out[m, n] = X[m, donors].mean() if donors.size else fallback[m, n]
    return out


def budget_rescale(completed, X, mask, budgets=None):
    """Scale each column's missing predictions to its unspent budget fraction.

    Negative predictions are clipped first; a column whose clipped
    predictions sum to zero receives its residual uniformly.  ``budgets`` is
    accepted for signature symmetry; fractions are budget-free.
    """
    completed = np.asarray(completed, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    X = np.asarray(X, dtype=float)
    observed_sum = np.where(mask, X, 0.0).sum(axis=0)
    residual = 1.0 - observed_sum
    if np.any(residual < -1e-6):
        raise ValueError("budget exceeded by observations")
    residual = np.maximum(residual, 0.0)

    out = np.where(mask, X, np.maximum(completed, 0.0))
    for n in np.flatnonzero((~mask).any(axis=0)):
        miss = ~mask[:, n]
        pred = out[miss, n]
        total = pred.sum()
        if total > 0:
            out[miss, n] = pred * (residual[n] / total)
        else:
            out[miss, n] = residual[n] / miss.sum()
    return out


def synthesize(M, N, F, missing_rate=0.4, seed=0, layout="staggered"):
    """Noiseless low-rank expense fractions with a seeded mask.

    Columns of ``W_true`` and rows of ``H_true`` are flat Dirichlet draws
    (normalised exponentials); budgets are log-uniform on [1e4, 1e7].

    Each column hides ``ceil(missing_rate * M)`` consecutive months.  With
    ``layout="tail"`` these are the last months of every column.  With
    ``layout="staggered"`` (default) the hidden run starts at a random month
    in ``[1, M - L]`` per column, which mimics projects sitting at different
    points of their life at the forecast date; a shared tail leaves those
    months unobserved in every column and cannot be recovered.
    """
    if not (1 <= F < min(M, N)):
        raise ValueError("need 1 <= F < min(M, N)")
    if not 0 <= missing_rate < 1:
        raise ValueError("missing_rate must be in [0, 1)")
    if layout not in ("staggered", "tail"):
        raise ValueError("layout must be 'staggered' or 'tail'")
    rng = np.random.default_rng(seed)
    W = rng.standard_exponential((M, F))
    W /= W.sum(axis=0)
    H = rng.standard_exponential((N, F))
    H /= H.sum(axis=1, keepdims=True)
    budgets = np.exp(rng.uniform(math.log(1e4), math.log(1e7), size=N))

    L = math.ceil(missing_rate * M)
    mask = np.ones((M, N), dtype=bool)
    if L:
        if layout == "tail":
            starts = np.full(N, M - L)
        else:
            starts = rng.integers(1, M - L + 1, size=N) if M - L >= 1 else np.zeros(N, int)
        rows = np.arange(M)[:, None]
        mask = ~((rows >= starts[None, :]) & (rows < starts[None, :] + L))
    return SyntheticInstance(X_full=W @ H.T, mask=mask, budgets=budgets, W_true=W, H_true=H)


def cluster_assign(H):
    """Index of the dominant pattern per project (0-based, ties to the lowest)."""
    return np.argmax(np.asarray(H), axis=1)


def cumulative_patterns(W):
    """Cumulative spend curve of every pattern (prefix sums of the columns)."""
    return np.cumsum(np.asarray(W, dtype=float), axis=0)


def complete(method, X, mask, config=None, knn_k=10):
    """Budget-feasible completion of ``X`` by one of ``tsmc``, ``median``, ``knn``."""
    if method == "tsmc":
        return fit(X, mask, config=config or FitConfig()).Z
    if method == "median":
        raw = median_baseline(X, mask)
    elif method == "knn":
        raw = knn_baseline(X, mask, k=knn_k)
    else:
        raise ValueError("unknown method %r" % method)
    return budget_rescale(raw, X, mask)


def evaluate(X, mask, budgets, truth, test_mask, methods=METHODS, config=None, knn_k=10):
    """Score each method on the held-out cells.

    ``truth`` holds absolute expenses; only cells in ``test_mask`` (which
    must be missing in ``mask``) are compared, in currency units.
    """
    test_mask = np.asarray(test_mask, dtype=bool)
    if not test_mask.any():
        raise ValueError("no test samples")
    if np.any(test_mask & np.asarray(mask, dtype=bool)):
        raise ValueError("test cells must be missing from the training mask")
    t = np.asarray(truth, dtype=float)[test_mask]
    reports = []
    for method in methods:
        Z = complete(method, X, mask, config=config, knn_k=knn_k)
        est = denormalize(Z, budgets)[test_mask]
        reports.append(EvalReport(method, rmse(t, est), relative_rmse(t, est), int(t.size)))
    return reports


def reports_to_json(reports):
    return json.dumps([asdict(r) for r in reports], indent=1)


def write_patterns_csv(fh, W):
    C = cumulative_patterns(W)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["month_index"] + ["component_%d" % (f + 1) for f in range(C.shape[1])])
    for m, row in enumerate(C):
        w.writerow([m] + [repr(float(x)) for x in row])


def write_clusters_csv(fh, H, project_ids):
    labels = cluster_assign(H)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["project_id", "component"])
    for pid, lab in zip(project_ids, labels):
        w.writerow([pid, int(lab) + 1])
