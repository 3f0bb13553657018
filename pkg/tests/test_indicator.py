from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ewi.evaluation import ScoredLabels, pr_curve, roc_curve
from ewi.indicator import (
    EwiModel, baseline_svd_lr, baseline_volume, eta, eta_series, lagged_design, nnls_objective, nnls_sparse,
    predict, ridge_fit, train_ewi,
)
from ewi.linalg import SolverOptions


def active_set_oracle(A, b, lam_c):
    """Enumerate supports; keep the best feasible stationary point."""
    p = A.shape[1]
    best = nnls_objective(A, b, np.zeros(p), lam_c)
    best_c = np.zeros(p)
    for r in range(1, p + 1):
        for S in combinations(range(p), r):
            As = A[:, S]
            # grad of ||As c - b||^2 + lam sum c = 0
            c_s = np.linalg.lstsq(As.T @ As, As.T @ b - lam_c / 2, rcond=None)[0]
            if np.all(c_s >= 0):
                c = np.zeros(p)
                c[list(S)] = c_s
                obj = nnls_objective(A, b, c, lam_c)
                if obj < best:
                    best, best_c = obj, c
    return best, best_c


def test_identity_design():
    b = np.array([0.5, 2.0, 0.0, 1.25])
    np.testing.assert_allclose(nnls_sparse(np.eye(4), b), b, atol=1e-6)


def test_negative_correlation_drives_to_zero():
    A = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    b = np.array([1.0, 2.0, -3.0])
    c = nnls_sparse(A, b)
    _, oracle = active_set_oracle(A, b, 0.0)
    assert oracle[2] == 0 and c[2] < 1e-8
    np.testing.assert_allclose(c, oracle, atol=1e-6)


@pytest.mark.parametrize("lam_c", [0.0, 0.1, 1.0])
def test_matches_oracle_random(rng, lam_c):
    for _ in range(20):
        A = rng.random((20, 5))
        b = A @ (rng.random(5) * (rng.random(5) < 0.6)) + 0.1 * rng.standard_normal(20)
        c = nnls_sparse(A, b, lam_c)
        best, _ = active_set_oracle(A, b, lam_c)
        assert np.all(c >= 0)
        assert nnls_objective(A, b, c, lam_c) <= best * (1 + 1e-4) + 1e-12


@given(st.integers(0, 5000))
def test_nnls_monotone(seed):
    r = np.random.default_rng(seed)
    A, b = r.random((10, 4)), r.standard_normal(10)
    objs = [nnls_objective(A, b, nnls_sparse(A, b, 0.2, max_iters=i, rel_tol=0), 0.2) for i in range(1, 30)]
    assert all(y <= x * (1 + 1e-12) + 1e-15 for x, y in zip(objs, objs[1:]))


def test_nnls_rejects_bad_input(rng):
    with pytest.raises(ValueError):
        nnls_sparse(-rng.random((3, 2)), np.ones(3))
    with pytest.raises(ValueError):
        nnls_sparse(rng.random((3, 2)), np.ones(4))
    with pytest.raises(ValueError):
        nnls_sparse(rng.random((3, 2)), np.ones(3), lam_c=-1)


def test_lagged_design_layout():
    H = np.arange(12, dtype=float).reshape(2, 6)
    A = lagged_design(H, 3)
    assert A.shape == (4, 6)
    # row for t=2: [H0,2 H0,1 H0,0 H1,2 H1,1 H1,0]
    np.testing.assert_array_equal(A[0], [2, 1, 0, 8, 7, 6])
    with pytest.raises(ValueError):
        lagged_design(H, 3, start=1)


def _model(c, W=None):
    c = np.asarray(c, float)
    return EwiModel(W if W is not None else np.ones((2, c.shape[0])), c, 1.0, 0.0, np.zeros((c.shape[0], c.shape[1] - 1)))


def test_eta_examples(rng):
    assert eta(_model(np.zeros((2, 3))), rng.random((2, 5)), 4) == 0
    assert eta(_model([[2.0]]), np.array([[3.0]]), 0) == 6
    c = rng.random((2, 2))
    H = rng.random((2, 4))
    t = 2
    expected = sum(c[j, l] * H[j, t - l] for j in range(2) for l in range(2))
    assert eta(_model(c), H, t) == pytest.approx(expected, rel=1e-14)
    np.testing.assert_allclose(eta_series(_model(c), H)[t - 1], expected, rtol=1e-14)
    with pytest.raises(ValueError):
        eta(_model(c), H, 0)


def test_predict():
    assert predict(0.3, 0.3) == 1
    assert predict(0.2, 0.3) == 0
    assert all(predict(v, 0.0) == 1 for v in (0.0, 1e-9, 5.0))


def test_baseline_volume_identity_and_rank_invariance(rng):
    v = rng.random(50)
    np.testing.assert_array_equal(baseline_volume(v), v)
    assert np.all(baseline_volume(np.full(5, 2.0)) == 2.0)
    labels = rng.integers(0, 2, 50)
    a, b = ScoredLabels(v, labels), ScoredLabels(np.log1p(v) * 3, labels)
    assert roc_curve(a).auc == roc_curve(b).auc
    assert pr_curve(a).auc == pytest.approx(pr_curve(b).auc, abs=1e-12)


def _planted_window(rng, T=120, k=3, delta=3):
    W = np.zeros((30, k))
    W[np.arange(30), np.arange(30) % k] = rng.uniform(0.5, 1.5, 30)
    W /= W.sum(axis=0)
    H = rng.uniform(0.5, 2.0, (k, T))
    return W, H


def test_train_ewi_recovers_planted_predictions(rng):
    k, delta, T = 3, 3, 120
    W, H = _planted_window(rng, T, k, delta)
    c_true = np.zeros((k, delta))
    c_true[0] = [0.5, 0.2, 0.1]
    sigma = np.full(T, np.nan)
    sigma[delta:] = lagged_design(H[:, :-1], delta) @ c_true.reshape(-1)
    model = train_ewi(W @ H, sigma, k, delta, lam_enc=0.0, lam_c=0.0, opts=SolverOptions(max_iters=3000, rel_tol=1e-10))
    pred = eta_series(model, model.H_train)[:-1]
    # anchor t = delta-1+i predicts sigma[t+1]
    np.testing.assert_allclose(pred, sigma[delta:], rtol=1e-3)
    assert np.all(model.c >= 0)


def test_train_ewi_zero_sigma(rng):
    W, H = _planted_window(rng, 60)
    model = train_ewi(W @ H, np.zeros(60), 3, 3, lam_c=1e-3)
    assert np.all(model.c == 0)


def test_train_ewi_scalar_case(rng):
    h = rng.uniform(0.5, 2, 40)
    X = np.outer(np.ones(4), h)
    sigma = np.r_[np.nan, 0.3 * h[:-1]]
    model = train_ewi(X, sigma, k=1, delta=1, lam_enc=0.0, lam_c=0.0)
    assert model.c.shape == (1, 1) and model.history.shape == (1, 0)
    Ht = model.H_train[0]
    expected = (Ht[:-1] @ sigma[1:]) / (Ht[:-1] @ Ht[:-1])
    assert model.c[0, 0] == pytest.approx(expected, rel=1e-6)


def test_train_ewi_deterministic_and_errors(rng):
    W, H = _planted_window(rng, 40)
    sigma = rng.random(40)
    a = train_ewi(W @ H, sigma, 3, 2, opts=SolverOptions(seed=3, max_iters=50))
    b = train_ewi(W @ H, sigma, 3, 2, opts=SolverOptions(seed=3, max_iters=50))
    assert np.array_equal(a.c, b.c) and np.array_equal(a.W, b.W)
    assert np.all(eta_series(a, a.H_train) >= 0)
    with pytest.raises(ValueError):
        train_ewi(W @ H[:, :3], sigma[:3], 3, 5)
    with pytest.raises(ValueError):
        train_ewi(W @ H, sigma[:10], 3, 2)


def test_ridge_matches_normal_equations(rng):
    for _ in range(10):
        F = rng.standard_normal((40, 6))
        y = rng.standard_normal(40)
        lam = rng.uniform(0.01, 5)
        coef, b0, mean, std = ridge_fit(F, y, lam)
        Z = (F - F.mean(0)) / F.std(0)
        oracle = np.linalg.solve(Z.T @ Z + lam * np.eye(6), Z.T @ (y - y.mean()))
        np.testing.assert_allclose(coef, oracle, rtol=1e-8, atol=1e-10)
        assert b0 == pytest.approx(y.mean())


def test_ridge_limits(rng):
    F = rng.standard_normal((30, 3))
    y = 2 + F @ [1.0, -2.0, 0.5]
    coef, b0, mean, std = ridge_fit(F, y, 0.0)
    assert np.max(np.abs(b0 + ((F - mean) / std) @ coef - y)) < 1e-8
    coef, b0, _, _ = ridge_fit(F, y, 1e12)
    assert np.max(np.abs(coef)) < 1e-9 and b0 == pytest.approx(y.mean())


def test_svd_lr_exact_fit(rng):
    X = rng.random((20, 60))
    probe = baseline_svd_lr(X, np.zeros(60), k=3, delta=2, ridge=0.0)
    R = probe.represent(X)
    sigma = np.full(60, np.nan)
    sigma[2:] = 0.5 + lagged_design(R[:, :-1], 2) @ rng.standard_normal(6)
    model = baseline_svd_lr(X, sigma, k=3, delta=2, ridge=0.0)
    fitted = model.score_series(model.represent(X))[:-1]
    assert np.max(np.abs(fitted - sigma[2:])) < 1e-8
    np.testing.assert_allclose(model.represent(X), np.diag(np.linalg.svd(X)[1][:3]) @ np.linalg.svd(X)[2][:3], atol=1e-10)
