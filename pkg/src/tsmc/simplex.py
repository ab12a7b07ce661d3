"""Euclidean projection onto scaled probability simplexes.

The sort-and-threshold routine here is used by every block update of the
solver: columns of ``W``, rows of ``H`` and the missing part of each column
of ``Z``.  :func:`projection_oracle` is a slow exhaustive reference kept for
testing only.
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np

__all__ = [
    "ScaledSimplex",
    "project_onto_scaled_simplex",
    "project_rows",
    "projection_oracle",
]

ORACLE_MAX_DIM = 12


@dataclass(frozen=True)
class ScaledSimplex:
    """The set ``{v : v >= 0, sum(v) = total}`` in ``dim`` dimensions."""

    dim: int
    total: float = 1.0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("simplex dimension must be >= 1")
        if self.total < 0:
            raise ValueError("infeasible simplex: negative total")

    def contains(self, v, atol=1e-9):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            return False
        tol = atol * max(1.0, self.total)
        return bool(np.all(v >= 0) and abs(v.sum() - self.total) <= tol)

    def project(self, v):
        return project_onto_scaled_simplex(v, self.total)


def _check_total(s):
    if not np.all(np.isfinite(s)):
        raise ValueError("non-finite input: simplex total")
    if np.any(np.asarray(s) < 0):
        raise ValueError("infeasible simplex: negative total")


def project_rows(V, totals=1.0, valid=None):
    """Project every row of ``V`` onto a scaled simplex.

    Parameters
    ----------
    V : array of shape (n, d)
        Points to project, one per row.
    totals : float or array of shape (n,)
        Target sum for each row.
    valid : bool array of shape (n, d), optional
        Restricts each row's simplex to the flagged coordinates.  Entries
        outside the support are returned as 0.  A row with no valid entry is
        returned as all zeros regardless of its total.

    Returns
    -------
    array of shape (n, d)
    """
    V = np.asarray(V, dtype=float)
    if V.ndim != 2:
        raise ValueError("expected a 2-D array")
    if not np.all(np.isfinite(V)):
        raise ValueError("non-finite input")
    n, d = V.shape
    totals = np.broadcast_to(np.asarray(totals, dtype=float), (n,))
    _check_total(totals)
    if n == 0 or d == 0:
        return np.zeros_like(V)

    if valid is None:
        U = -np.sort(-V, axis=1)
        counts = np.full(n, d)
    else:
        valid = np.asarray(valid, dtype=bool)
        if valid.shape != V.shape:
            raise ValueError("valid mask shape mismatch")
        # invalid slots sort to the end and never enter a prefix sum
        U = -np.sort(-np.where(valid, V, -np.inf), axis=1)
        counts = valid.sum(axis=1)
        U = np.where(np.isfinite(U), U, 0.0)

    ranks = np.arange(1, d + 1)
    thresholds = (np.cumsum(U, axis=1) - totals[:, None]) / ranks
    ok = (U > thresholds) & (ranks <= counts[:, None])
    # largest rank satisfying the strict inequality; ok is a prefix when s > 0
    rho = d - 1 - np.argmax(ok[:, ::-1], axis=1)
    theta = thresholds[np.arange(n), rho]

    out = np.maximum(V - theta[:, None], 0.0)
    if valid is not None:
        out[~valid] = 0.0
    dead = (totals == 0) | (counts == 0) | ~ok.any(axis=1)
    out[dead] = 0.0
    return out


def project_onto_scaled_simplex(v, s=1.0):
    """Return ``argmin_{z >= 0, sum(z) = s} ||z - v||``.

    Sort-based algorithm: with ``u`` sorted in decreasing order, take the
    largest ``rho`` such that ``u_rho > (sum(u[:rho]) - s) / rho`` and shift
    by that threshold.

    >>> project_onto_scaled_simplex([0.5, 0.5, 1.0]).round(6)
    array([0.166667, 0.166667, 0.666667])
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise ValueError("expected a non-empty 1-D vector")
    if not np.isfinite(s):
        raise ValueError("non-finite input: simplex total")
    if s < 0:
        raise ValueError("infeasible simplex: negative total")
    if s == 0:
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite input")
        return np.zeros_like(v)
    return project_rows(v[None, :], s)[0]


def projection_oracle(v, s=1.0):
    """Exhaustive active-set projection, for testing.

    Every non-empty support ``S`` gives the candidate ``z_S = v_S - theta``
    with ``theta = (sum(v_S) - s) / |S|`` and zeros elsewhere.  Candidates
    that are primal feasible and satisfy the KKT sign condition
    ``v_i <= theta`` off the support are kept; the closest one is returned.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise ValueError("expected a non-empty 1-D vector")
    d = v.size
    if d > ORACLE_MAX_DIM:
        raise ValueError("oracle dimension limit exceeded (%d > %d)" % (d, ORACLE_MAX_DIM))
    if not np.all(np.isfinite(v)) or not np.isfinite(s):
        raise ValueError("non-finite input")
    if s < 0:
        raise ValueError("infeasible simplex: negative total")

    eps = 1e-12 * max(1.0, s, float(np.abs(v).max()))
    best, best_dist = None, np.inf
    for size in range(1, d + 1):
        for support in combinations(range(d), size):
            idx = list(support)
            theta = (v[idx].sum() - s) / size
            z = np.zeros(d)
            z[idx] = v[idx] - theta
            if z[idx].min() < -eps:
                continue
            rest = np.setdiff1d(np.arange(d), idx)
            if rest.size and v[rest].max() - theta > eps:
                continue
            dist = np.sum((z - v) ** 2)
            if dist < best_dist:
                best, best_dist = z, dist
    if best is None:  # pragma: no cover - some support always satisfies KKT
        raise RuntimeError("no KKT point found")
    return np.maximum(best, 0.0)
