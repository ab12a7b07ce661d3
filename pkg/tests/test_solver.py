import math

import numpy as np
import pytest
from scipy.linalg import svdvals

from tsmc.evaluation import synthesize
from tsmc.solver import (
    BudgetError,
    FitConfig,
    SolverError,
    denormalize,
    fit,
    grad_h,
    grad_w,
    initialize,
    lipschitz_h,
    lipschitz_w,
    model_from_json,
    model_to_json,
    nesterov_step,
    objective,
    update_h,
    update_w,
    update_z,
)
from tsmc.simplex import project_rows, projection_oracle


def simplex_cols(rng, m, f):
    A = rng.standard_exponential((m, f))
    return A / A.sum(axis=0)


def simplex_rows(rng, n, f):
    return simplex_cols(rng, f, n).T


@pytest.fixture
def small():
    inst = synthesize(12, 15, 2, 0.3, seed=5)
    return inst.X, inst.mask, inst.budgets


def assert_feasible(W, H, Z, X, mask, tol=1e-9):
    assert W.min() >= 0 and H.min() >= 0 and Z.min() >= 0
    np.testing.assert_allclose(W.sum(axis=0), 1, atol=tol, rtol=0)
    np.testing.assert_allclose(H.sum(axis=1), 1, atol=tol, rtol=0)
    np.testing.assert_allclose(Z.sum(axis=0), 1, atol=tol, rtol=0)
    assert np.array_equal(Z[mask], X[mask])


# -- initialize ----------------------------------------------------------------


def test_initialize_uniform_residual_split():
    X = np.zeros((4, 5))
    mask = np.zeros((4, 5), dtype=bool)
    X[:2, 0] = 0.3
    mask[:2, 0] = True
    X[:, 1] = [0.1, 0.2, 0.3, 0.4]
    mask[:, 1] = True
    model, state = initialize(X, mask, FitConfig(rank=2, seed=1))
    np.testing.assert_allclose(state.Z[:, 0], [0.3, 0.3, 0.2, 0.2], atol=1e-15)
    assert np.array_equal(state.Z[:, 1], X[:, 1])
    np.testing.assert_allclose(state.Z[:, 2], 0.25)
    assert (state.t_prev, state.t_cur) == (0.0, 1.0)
    np.testing.assert_allclose(model.W.sum(axis=0), 1, atol=1e-12)
    np.testing.assert_allclose(model.H.sum(axis=1), 1, atol=1e-12)


def test_initialize_deterministic(small):
    X, mask, _ = small
    a = initialize(X, mask, FitConfig(seed=9))
    b = initialize(X, mask, FitConfig(seed=9))
    assert np.array_equal(a[0].W, b[0].W)
    assert np.array_equal(a[0].H, b[0].H)
    assert np.array_equal(a[1].Z, b[1].Z)


def test_initialize_errors():
    X = np.zeros((3, 4))
    mask = np.zeros((3, 4), dtype=bool)
    with pytest.raises(ValueError, match="rank too large"):
        initialize(X, mask, FitConfig(rank=3))
    X[:2, 0] = 0.6
    mask[:2, 0] = True
    with pytest.raises(BudgetError, match="budget exceeded by observations"):
        initialize(X, mask, FitConfig(rank=1))


def test_fit_config_bounds():
    for bad in (dict(rank=0), dict(max_iters=0), dict(tol=-1), dict(gradient_base="x")):
        with pytest.raises(ValueError):
            FitConfig(**bad)


# -- objective, gradients, step sizes -----------------------------------------


def test_objective_examples():
    assert objective([[1.0]], [[1.0]], [[0.5]]) == 0.25
    rng = np.random.default_rng(0)
    W, H = rng.random((5, 2)), rng.random((4, 2))
    assert objective(W, H, W @ H.T) == 0.0
    with pytest.raises(ValueError):
        objective(W, H, np.zeros((4, 5)))


def test_objective_against_double_loop():
    rng = np.random.default_rng(1)
    W, H, Z = rng.random((3, 2)), rng.random((4, 2)), rng.random((3, 4))
    total = 0.0
    for m in range(3):
        for n in range(4):
            pred = sum(W[m, f] * H[n, f] for f in range(2))
            total += (pred - Z[m, n]) ** 2
    assert math.isclose(objective(W, H, Z), total, rel_tol=1e-13)


def central_difference(func, A, h=1e-6):
    G = np.zeros_like(A)
    for idx in np.ndindex(A.shape):
        E = np.zeros_like(A)
        E[idx] = h
        G[idx] = (func(A + E) - func(A - E)) / (2 * h)
    return G


@pytest.mark.parametrize("seed", range(5))
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    W, H, Z = rng.random((6, 3)), rng.random((5, 3)), rng.random((6, 5))
    # gradients are of half the objective
    gw = central_difference(lambda A: 0.5 * objective(A, H, Z), W)
    gh = central_difference(lambda A: 0.5 * objective(W, A, Z), H)
    assert np.linalg.norm(grad_w(W, H, Z) - gw) <= 1e-5 * np.linalg.norm(gw)
    assert np.linalg.norm(grad_h(H, W, Z) - gh) <= 1e-5 * np.linalg.norm(gh)


@pytest.mark.parametrize("seed", range(5))
def test_step_size_is_gram_spectral_norm(seed):
    rng = np.random.default_rng(seed)
    H, W = rng.random((40, 3)), rng.random((20, 3))
    assert math.isclose(lipschitz_w(H), svdvals(H)[0] ** 2, rel_tol=1e-10)
    assert math.isclose(lipschitz_h(W), svdvals(W)[0] ** 2, rel_tol=1e-10)
    # the gradient is lipschitz_w(H)-Lipschitz in W
    Z = rng.random((20, 40))
    A, B = rng.random((20, 3)), rng.random((20, 3))
    lhs = np.linalg.norm(grad_w(A, H, Z) - grad_w(B, H, Z))
    assert lhs <= lipschitz_w(H) * np.linalg.norm(A - B) * (1 + 1e-12)


# -- nesterov ------------------------------------------------------------------


def test_nesterov_first_step():
    t, beta = nesterov_step(0.0, 1.0)
    assert math.isclose(t, (1 + math.sqrt(5)) / 2)
    assert beta == 0.0


def test_nesterov_second_step():
    t, beta = nesterov_step(1.0, 1.6180339887)
    assert t == pytest.approx(2.1935, abs=1e-4)
    assert beta == pytest.approx(0.2817, abs=1e-4)


def test_nesterov_sequence_increasing():
    tp, tc = 0.0, 1.0
    for _ in range(200):
        tn, beta = nesterov_step(tp, tc)
        assert tn > tc and 0 <= beta < 1
        tp, tc = tc, tn


# -- block updates -------------------------------------------------------------


def test_update_w_identity_gram():
    rng = np.random.default_rng(2)
    W = simplex_cols(rng, 5, 3)
    Z = rng.random((5, 3))
    W_new = update_w(W, W, np.eye(3), Z)
    np.testing.assert_allclose(W_new, project_rows(Z.T).T, atol=1e-14)


def test_update_w_fixed_point():
    rng = np.random.default_rng(3)
    W, H = simplex_cols(rng, 8, 2), simplex_rows(rng, 10, 2)
    Z = W @ H.T
    np.testing.assert_allclose(update_w(W, W, H, Z), W, atol=1e-14)
    np.testing.assert_allclose(update_h(H, H, W, Z), H, atol=1e-14)


def test_update_h_identity_gram():
    rng = np.random.default_rng(4)
    H = simplex_rows(rng, 5, 3)
    Z = rng.random((3, 5))
    H_new = update_h(H, H, np.eye(3), Z)
    np.testing.assert_allclose(H_new, project_rows(Z.T), atol=1e-14)
    assert H_new.min() >= 0
    np.testing.assert_allclose(H_new.sum(axis=1), 1, atol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_block_steps_descend(seed):
    rng = np.random.default_rng(seed)
    W, H = simplex_cols(rng, 6, 3), simplex_rows(rng, 9, 3)
    Z = project_rows(rng.random((9, 6))).T
    f0 = objective(W, H, Z)
    W1 = update_w(W, W, H, Z)
    f1 = objective(W1, H, Z)
    H1 = update_h(H, H, W1, Z)
    f2 = objective(W1, H1, Z)
    assert f1 <= f0 + 1e-15 and f2 <= f1 + 1e-15


def test_degenerate_step():
    W = np.full((3, 1), 1 / 3)
    H = np.ones((2, 1))
    Z = np.full((3, 2), np.inf)
    with pytest.raises(SolverError, match="degenerate step"):
        update_w(W, W, H, Z)


def test_update_z_scaled_simplex():
    W = np.array([[0.4], [0.4], [0.2]])
    H = np.array([[1.0]])
    X = np.array([[0.5], [0.0], [0.0]])
    mask = np.array([[True], [False], [False]])
    Z = update_z(W, H, X, mask)
    np.testing.assert_allclose(Z[:, 0], [0.5, 0.35, 0.15], atol=1e-15)


def test_update_z_edge_columns():
    W = np.array([[0.5], [0.3], [0.2]])
    H = np.array([[1.0], [1.0], [1.0]])
    X = np.array([[0.2, 1.0, 0.5], [0.3, 0.0, 0.2], [0.5, 0.0, 0.0]])
    mask = np.array([[True, True, True], [True, False, True], [True, False, False]])
    Z = update_z(W, H, X, mask)
    assert np.array_equal(Z[:, 0], X[:, 0])  # fully observed
    assert np.all(Z[1:, 1] == 0)  # zero residual
    np.testing.assert_allclose(Z[:, 2], [0.5, 0.2, 0.3], atol=1e-15)


def test_update_z_residual_clamp():
    W = np.full((3, 1), 1 / 3)
    H = np.ones((1, 1))
    X = np.array([[0.5], [0.5 + 5e-7], [0.0]])
    mask = np.array([[True], [True], [False]])
    assert update_z(W, H, X, mask)[2, 0] == 0.0
    X[1, 0] = 0.5 + 1e-5
    with pytest.raises(BudgetError):
        update_z(W, H, X, mask)


def test_update_z_matches_oracle_per_column():
    rng = np.random.default_rng(11)
    M, N = 8, 30
    W, H = simplex_cols(rng, M, 2), simplex_rows(rng, N, 2)
    mask = rng.random((M, N)) < 0.5
    X = np.where(mask, rng.random((M, N)) / M, 0.0)
    Z = update_z(W, H, X, mask)
    P = W @ H.T
    for n in range(N):
        miss = ~mask[:, n]
        if miss.any():
            s = 1 - X[mask[:, n], n].sum()
            np.testing.assert_allclose(Z[miss, n], projection_oracle(P[miss, n], s), atol=1e-10)


# -- fit -----------------------------------------------------------------------


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_fit_noiseless_fully_observed(seed):
    inst = synthesize(20, 30, 3, 0.0, seed=seed)
    res = fit(inst.X, inst.mask, inst.budgets, FitConfig(tol=0, max_iters=1000, seed=seed))
    assert res.objective_trace[-1] <= 1e-6


def test_fit_infinite_tol_stops_after_one(small):
    X, mask, B = small
    res = fit(X, mask, B, FitConfig(tol=math.inf))
    assert res.iterations == 1 and res.converged
    assert len(res.objective_trace) == 2


def test_fit_zero_tol_runs_to_max(small):
    X, mask, B = small
    res = fit(X, mask, B, FitConfig(tol=0, max_iters=100))
    assert res.iterations == 100 and not res.converged


@pytest.mark.parametrize("gradient_base", ["extrapolated", "paper_literal"])
def test_fit_invariants_every_iteration(small, gradient_base):
    X, mask, B = small
    seen = []

    def check(it, W, H, Z):
        assert_feasible(W, H, Z, X, mask)
        seen.append(it)

    res = fit(X, mask, B, FitConfig(tol=0, max_iters=60, gradient_base=gradient_base), callback=check)
    assert seen == list(range(1, 61))
    trace = res.objective_trace
    assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))
    Y = denormalize(res.Z, B)
    np.testing.assert_allclose(Y.sum(axis=0), B, rtol=1e-6)


def test_fit_deterministic(small):
    X, mask, B = small
    a = fit(X, mask, B, FitConfig(seed=3))
    b = fit(X, mask, B, FitConfig(seed=3))
    assert np.array_equal(a.W, b.W) and np.array_equal(a.H, b.H) and np.array_equal(a.Z, b.Z)
    assert a.objective_trace == b.objective_trace
    assert (a.iterations, a.converged) == (b.iterations, b.converged)


def test_fit_relative_tol_mode(small):
    X, mask, B = small
    res = fit(X, mask, B, FitConfig(tol=0.05, tol_mode="relative"))
    t = res.objective_trace
    assert res.converged and (t[-2] - t[-1]) / t[-2] < 0.05


def test_block_optimality_at_convergence():
    inst = synthesize(24, 60, 3, 0.3, seed=7)
    cfg = FitConfig(seed=7)
    res = fit(inst.X, inst.mask, inst.budgets, cfg)
    assert res.converged
    W, H, Z = res.W, res.H, res.Z
    f = objective(W, H, Z)
    assert abs(objective(update_w(W, W, H, Z), H, Z) - f) < 10 * cfg.tol
    assert abs(objective(W, update_h(H, H, W, Z), Z) - f) < 10 * cfg.tol
    assert abs(objective(W, H, update_z(W, H, inst.X, inst.mask)) - f) < 10 * cfg.tol


# -- denormalize & persistence --------------------------------------------------


def test_denormalize():
    np.testing.assert_allclose(denormalize([[0.25], [0.75]], [400.0]), [[100.0], [300.0]])
    Z = np.array([[0.2, 0.5], [0.8, 0.5]])
    assert np.array_equal(denormalize(Z, [1.0, 1.0]), Z)
    np.testing.assert_allclose(denormalize(Z, [3.0, 7.0]).sum(axis=0), [3.0, 7.0])
    with pytest.raises(ValueError):
        denormalize(Z, [1.0, 0.0])


def test_model_json_round_trip(small):
    X, mask, B = small
    res = fit(X, mask, B, FitConfig(max_iters=5))
    ids = ["p%d" % i for i in range(X.shape[1])]
    text = model_to_json(res, B, ids)
    model, budgets, pids, trace, conv = model_from_json(text)
    assert np.array_equal(model.W, res.W) and np.array_equal(model.H, res.H)
    assert np.array_equal(budgets, B) and pids == ids
    assert trace == res.objective_trace and conv == res.converged
    assert model_to_json(res, B, ids) == text
    with pytest.raises(ValueError, match="malformed"):
        model_from_json('{"m": 2}')


@pytest.mark.parametrize("seed", range(6))
def test_safeguard_restores_monotonicity(seed):
    rng = np.random.default_rng(seed)
    X = rng.dirichlet(np.full(10, 0.3), size=12).T
    mask = rng.random((10, 12)) < 0.7
    X = np.where(mask, X, 0.0)
    cfg = dict(rank=4, seed=seed, tol=0, max_iters=200, gradient_base="paper_literal")
    raw = fit(X, mask, config=FitConfig(monotone_safeguard=False, **cfg))
    assert np.diff(raw.objective_trace).max() > 1e-12
    safe = fit(X, mask, config=FitConfig(**cfg))
    assert np.diff(safe.objective_trace).max() <= 1e-12
    assert safe.objective_trace[-1] <= raw.objective_trace[0]
