"""Triple simplex matrix completion.

Solves

    min ||W H^T - Z||_F^2
    s.t. columns of W, rows of H and columns of Z on the unit simplex,
         Z equal to X on the observed cells,

by inexact block coordinate descent: one extrapolated projected-gradient
(prox-linear) step on ``W``, one on ``H``, then an exact update of the
missing part of ``Z``.
"""

import json
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .simplex import project_rows

__all__ = [
    "FitConfig",
    "FactorModel",
    "CompletionState",
    "FitResult",
    "SolverError",
    "BudgetError",
    "initialize",
    "objective",
    "grad_w",
    "grad_h",
    "lipschitz_w",
    "lipschitz_h",
    "nesterov_step",
    "update_w",
    "update_h",
    "update_z",
    "fit",
    "denormalize",
    "model_to_json",
    "model_from_json",
]

RESIDUAL_CLAMP = 1e-6


class SolverError(RuntimeError):
    """Numerical breakdown inside the fit loop."""


class BudgetError(ValueError):
    """Observed expense fractions exceed the budget."""


@dataclass(frozen=True)
class FitConfig:
    rank: int = 3
    max_iters: int = 100
    tol: float = 1e-4
    seed: int = 0
    gradient_base: str = "extrapolated"
    monotone_safeguard: bool = True
    step_floor: float = 1e-12
    tol_mode: str = "absolute"

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol >= 0:
            raise ValueError("tol must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.gradient_base not in ("extrapolated", "paper_literal"):
            raise ValueError("gradient_base must be 'extrapolated' or 'paper_literal'")
        if self.tol_mode not in ("absolute", "relative"):
            raise ValueError("tol_mode must be 'absolute' or 'relative'")
        if not self.step_floor > 0:
            raise ValueError("step_floor must be positive")


@dataclass(frozen=True)
class FactorModel:
    """Pattern dictionary ``W`` (M x F) and project embeddings ``H`` (N x F)."""

    W: np.ndarray
    H: np.ndarray

    @property
    def rank(self):
        return self.W.shape[1]

    def reconstruct(self):
        return self.W @ self.H.T


@dataclass
class CompletionState:
    Z: np.ndarray
    W_prev: np.ndarray
    H_prev: np.ndarray
    t_prev: float = 0.0
    t_cur: float = 1.0
    iteration: int = 0
    objective_trace: List[float] = field(default_factory=list)


@dataclass(frozen=True)
class FitResult:
    model: FactorModel
    Z: np.ndarray
    objective_trace: List[float]
    iterations: int
    converged: bool

    @property
    def W(self):
        return self.model.W

    @property
    def H(self):
        return self.model.H


def _residuals(X, mask):
    observed = np.where(mask, X, 0.0).sum(axis=0)
    residual = 1.0 - observed
    bad = np.flatnonzero(residual < -RESIDUAL_CLAMP)
    if bad.size:
        raise BudgetError(
            "budget exceeded by observations in column(s) %s" % bad.tolist()
        )
    return np.maximum(residual, 0.0)


def _check_inputs(X, mask):
    X = np.asarray(X, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if X.ndim != 2 or X.shape != mask.shape:
        raise ValueError("X and mask must be 2-D arrays of the same shape")
    if not np.all(np.isfinite(X[mask])):
        raise ValueError("non-finite observed entries")
    if np.any(X[mask] < 0):
        raise ValueError("observed entries must be non-negative")
    return X, mask


def initialize(X, mask, config):
    """Seeded random start.

    ``W`` and ``H`` are drawn uniform on [0, 1) and normalised so that
    columns of ``W`` and rows of ``H`` sum to one.  The missing part of each
    column of ``Z`` shares the column's residual budget uniformly.
    """
    X, mask = _check_inputs(X, mask)
    M, N = X.shape
    F = config.rank
    if F >= min(M, N):
        raise ValueError("rank too large: need rank < min(M, N) = %d" % min(M, N))

    residual = _residuals(X, mask)
    rng = np.random.default_rng(config.seed)
    W = rng.uniform(size=(M, F))
    H = rng.uniform(size=(N, F))
    W = project_rows(W.T / W.sum(axis=0)[:, None]).T
    H = project_rows(H / H.sum(axis=1)[:, None])

    n_missing = (~mask).sum(axis=0)
    share = np.divide(residual, n_missing, out=np.zeros(N), where=n_missing > 0)
    Z = np.where(mask, X, share[None, :])

    model = FactorModel(W=W, H=H)
    state = CompletionState(Z=Z, W_prev=W.copy(), H_prev=H.copy())
    return model, state


def objective(W, H, Z):
    """Squared Frobenius norm of ``W H^T - Z``."""
    W, H, Z = np.asarray(W), np.asarray(H), np.asarray(Z)
    if W.shape[1] != H.shape[1] or Z.shape != (W.shape[0], H.shape[0]):
        raise ValueError(
            "shape mismatch: W %s, H %s, Z %s" % (W.shape, H.shape, Z.shape)
        )
    R = W @ H.T - Z
    return float(np.sum(R * R))


# Gradients are taken of half the objective, so the Lipschitz constants are
# exactly the largest eigenvalue of the F x F Gram matrix.
def grad_w(W, H, Z):
    return (W @ H.T - Z) @ H


def grad_h(H, W, Z):
    return (H @ W.T - Z.T) @ W


def _lambda_max(A):
    G = A.T @ A
    return float(np.linalg.eigvalsh(G)[-1])


def lipschitz_w(H):
    return _lambda_max(H)


def lipschitz_h(W):
    return _lambda_max(W)


def nesterov_step(t_prev, t_cur):
    """Advance the t-sequence; return ``(t_next, beta)``.

    ``beta = (t_cur - 1) / t_next`` lies in [0, 1) for ``t_cur >= 1``.
    """
    if t_cur < t_prev or t_prev < 0:
        raise ValueError("expected t_cur >= t_prev >= 0")
    t_next = (1.0 + math.sqrt(4.0 * t_cur * t_cur + 1.0)) / 2.0
    beta = max(t_cur - 1.0, 0.0) / t_next
    return t_next, beta


def _prox_step(X_cur, X_prev, grad_fn, gamma, beta, gradient_base, step_floor):
    X_hat = X_cur + beta * (X_cur - X_prev) if beta else X_cur
    gamma = max(gamma, step_floor)
    G = grad_fn(X_hat)
    base = X_hat if gradient_base == "extrapolated" else X_cur
    step = base - G / gamma
    if not np.all(np.isfinite(step)):
        raise SolverError("degenerate step: non-finite gradient step (gamma=%g)" % gamma)
    return step


def update_w(W, W_prev, H, Z, beta=0.0, gradient_base="extrapolated", step_floor=1e-12):
    """One extrapolated prox-linear step on ``W``; columns projected onto the simplex."""
    step = _prox_step(
        W, W_prev, lambda A: grad_w(A, H, Z), lipschitz_w(H), beta,
        gradient_base, step_floor,
    )
    return project_rows(step.T).T


def update_h(H, H_prev, W, Z, beta=0.0, gradient_base="extrapolated", step_floor=1e-12):
    """Mirror image of :func:`update_w`; rows of ``H`` projected onto the simplex."""
    step = _prox_step(
        H, H_prev, lambda A: grad_h(A, W, Z), lipschitz_h(W), beta,
        gradient_base, step_floor,
    )
    return project_rows(step)


def update_z(W, H, X, mask):
    """Exact ``Z`` update.

    Observed cells are copied from ``X``.  In each column the prediction
    ``W h_n`` restricted to the missing rows is projected onto the simplex
    whose total is the column's unspent budget fraction.
    """
    X, mask = _check_inputs(X, mask)
    residual = _residuals(X, mask)
    P = W @ H.T
    missing = ~mask
    filled = project_rows(P.T, residual, valid=missing.T).T
    return np.where(mask, X, filled)


def fit(X, mask, budgets=None, config=None, callback: Optional[Callable] = None):
    """Run the alternating W / H / Z updates until the objective stalls.

    Parameters
    ----------
    X : array (M, N)
        Budget fractions; only cells flagged in ``mask`` are read.
    mask : bool array (M, N)
        True for observed cells.
    budgets : array (N,), optional
        Only validated here; use :func:`denormalize` on ``result.Z``.
    config : FitConfig, optional
    callback : callable, optional
        Called as ``callback(iteration, W, H, Z)`` after every accepted
        iteration.

    Returns
    -------
    FitResult
    """
    config = config or FitConfig()
    if budgets is not None:
        budgets = np.asarray(budgets, dtype=float)
        if budgets.shape != (np.shape(X)[1],):
            raise ValueError("budgets must have one entry per column")
        if np.any(~(budgets > 0)):
            raise ValueError("budgets must be positive")

    X, mask = _check_inputs(X, mask)
    model, state = initialize(X, mask, config)
    W, H, Z = model.W, model.H, state.Z
    trace = state.objective_trace
    trace.append(objective(W, H, Z))

    def sweep(beta):
        W_new = update_w(W, state.W_prev, H, Z, beta, config.gradient_base, config.step_floor)
        H_new = update_h(H, state.H_prev, W_new, Z, beta, config.gradient_base, config.step_floor)
        Z_new = update_z(W_new, H_new, X, mask)
        return W_new, H_new, Z_new, objective(W_new, H_new, Z_new)

    converged = False
    while state.iteration < config.max_iters:
        t_next, beta = nesterov_step(state.t_prev, state.t_cur)
        W_new, H_new, Z_new, f_new = sweep(beta)
        t_prev, t_cur = state.t_cur, t_next

        if config.monotone_safeguard and f_new > trace[-1]:
            # restart without momentum
            t_prev, t_cur = 0.0, 1.0
            if beta:
                W_new, H_new, Z_new, f_new = sweep(0.0)
            if f_new > trace[-1]:
                # rounding-level increase on a plain step: keep the iterate
                W_new, H_new, Z_new, f_new = W, H, Z, trace[-1]

        state.W_prev, state.H_prev = W, H
        W, H, Z = W_new, H_new, Z_new
        state.t_prev, state.t_cur = t_prev, t_cur
        state.iteration += 1
        state.Z = Z
        trace.append(f_new)
        if callback is not None:
            callback(state.iteration, W, H, Z)

        decrease = trace[-2] - trace[-1]
        if config.tol_mode == "relative":
            decrease = decrease / max(trace[-2], np.finfo(float).tiny)
        if decrease < config.tol:
            converged = True
            break

    return FitResult(
        model=FactorModel(W=W, H=H),
        Z=Z,
        objective_trace=list(trace),
        iterations=state.iteration,
        converged=converged,
    )


def denormalize(Z, budgets):
    """Scale column ``n`` of ``Z`` by ``budgets[n]``."""
    Z = np.asarray(Z, dtype=float)
    budgets = np.asarray(budgets, dtype=float)
    if budgets.shape != (Z.shape[1],):
        raise ValueError("budgets must have one entry per column")
    if np.any(~(budgets > 0)):
        raise ValueError("budgets must be positive")
    return Z * budgets[None, :]


def model_to_json(result, budgets, project_ids):
    """Serialise a fit to the model JSON document (deterministic text)."""
    W, H = result.model.W, result.model.H
    doc = {
        "m": int(W.shape[0]),
        "n": int(H.shape[0]),
        "f": int(W.shape[1]),
        "w": [float(x) for x in W.ravel()],
        "h": [float(x) for x in H.ravel()],
        "budgets": [float(b) for b in budgets],
        "project_ids": [str(p) for p in project_ids],
        "objective_trace": [float(x) for x in result.objective_trace],
        "converged": bool(result.converged),
    }
    return json.dumps(doc, indent=1)


def model_from_json(text):
    """Inverse of :func:`model_to_json`.

    Returns ``(model, budgets, project_ids, objective_trace, converged)``.
    """
    doc = json.loads(text)
    try:
        m, n, f = int(doc["m"]), int(doc["n"]), int(doc["f"])
        W = np.asarray(doc["w"], dtype=float).reshape(m, f)
        H = np.asarray(doc["h"], dtype=float).reshape(n, f)
        budgets = np.asarray(doc["budgets"], dtype=float)
        ids = [str(p) for p in doc["project_ids"]]
    except (KeyError, ValueError) as exc:
        raise ValueError("malformed model document: %s" % exc) from exc
    if budgets.shape != (n,) or len(ids) != n:
        raise ValueError("malformed model document: budgets/project_ids length")
    return (
        FactorModel(W=W, H=H),
        budgets,
        ids,
        [float(x) for x in doc.get("objective_trace", [])],
        bool(doc.get("converged", False)),
    )
