"""NMF-NLR early-warning indicator and the volume and SVD + ridge baselines.

The indicator at day ``t`` is a non-negative combination of the last ``delta``
encoding columns,

    eta(t) = sum_j sum_{l < delta} c[j, l] * H[j, t - l],

fitted by regressing next-day volatility ``sigma(t + 1)`` on the lagged
encodings of the training window.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import SolverOptions, robust_nmf, svd


def nnls_objective(A, b, c, lam_c) -> float:
    r = A @ c - b
    return float(r @ r + lam_c * np.sum(c))


def nnls_sparse(A, b, lam_c=0.0, max_iters=20000, rel_tol=1e-12, seed=0, denom_floor=1e-12):
    """Minimise ``||Ac - b||^2 + lam_c * sum(c)`` over ``c >= 0``.

    Multiplicative updates ``c <- c * (A'b)_+ / (A'Ac + lam_c / 2)``, which
    decrease the objective monotonically when ``A >= 0``. Coefficients whose
    ``A'b`` entry is negative are driven to zero in one step.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or b.shape != (A.shape[0],):
        raise ValueError(f"incompatible shapes A {A.shape}, b {b.shape}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise ValueError("A and b must be finite")
    if np.any(A < 0):
        raise ValueError("design matrix must be non-negative")
    if lam_c < 0:
        raise ValueError("lam_c must be >= 0")
    p = A.shape[1]
    Q = A.T @ A
    numer = np.maximum(A.T @ b, 0.0)
    rng = np.random.default_rng(seed)
    scale = np.abs(b).mean() / max(A.sum(axis=1).mean(), denom_floor) if A.size else 1.0
    c = (1.0 - rng.random(p)) * (scale if scale > 0 else 1.0)

    obj = nnls_objective(A, b, c, lam_c)
    for _ in range(max_iters):
        c = c * numer / np.maximum(Q @ c + 0.5 * lam_c, denom_floor)
        new_obj = nnls_objective(A, b, c, lam_c)
        if abs(obj - new_obj) <= rel_tol * max(abs(obj), np.finfo(float).tiny):
            obj = new_obj
            break
        obj = new_obj
    return c


def lagged_design(H, delta, start=None):
    """Rows ``[H[j, t - l] for j for l < delta]`` for ``t = start .. T - 1``.

    Column ``j * delta + l`` holds factor ``j`` at lag ``l``.
    """
    H = np.asarray(H, dtype=float)
    k, T = H.shape
    start = delta - 1 if start is None else start
    if start < delta - 1:
        raise ValueError(f"need {delta - 1} days of history before the first row")
    ts = np.arange(start, T)
    # lags[l] is H shifted back by l days, shape (k, n_rows)
    lags = np.stack([H[:, ts - l] for l in range(delta)], axis=-1)
    return lags.transpose(1, 0, 2).reshape(len(ts), k * delta)


@dataclass(frozen=True)
class EwiModel:
    W: np.ndarray
    c: np.ndarray  # (k, delta)
    lam_enc: float
    lam_c: float
    history: np.ndarray  # last delta - 1 training encodings
    train_days: tuple = ()
    H_train: np.ndarray = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return self.c.shape[0]

    @property
    def delta(self) -> int:
        return self.c.shape[1]


def train_ewi(train_X, sigma, k=10, delta=5, lam_enc=1.0, lam_c=1e-3, opts=None, train_days=()):
    """Fit ``(W, c)`` on one training window.

    ``sigma[i]`` is the volatility on the day of column ``i``; the row for
    anchor ``t`` targets ``sigma[t + 1]``, so only volatility inside the window
    is used. Anchors with a missing target are skipped. Design columns are
    scaled to unit RMS for the sparse fit and ``c`` is stored in original units.
    """
    train_X = np.asarray(train_X, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    T = train_X.shape[1]
    if sigma.shape != (T,):
        raise ValueError("sigma must align with the columns of train_X")
    if T <= delta:
        raise ValueError(f"training window of {T} days is too short for delta={delta}")
    opts = opts or SolverOptions()
    fp = robust_nmf(train_X, k, lam_enc, opts)
    H = fp.H
    A = lagged_design(H[:, :-1], delta)
    y = sigma[delta:]
    ok = np.isfinite(y)
    if not ok.any():
        raise ValueError("no finite volatility targets in the training window")
    A, y = A[ok], y[ok]
    scale = np.sqrt(np.mean(A**2, axis=0))
    scale[scale == 0] = 1.0
    c = nnls_sparse(A / scale, y, lam_c, seed=opts.seed) / scale
    return EwiModel(
        W=fp.W,
        c=c.reshape(k, delta),
        lam_enc=lam_enc,
        lam_c=lam_c,
        history=H[:, T - (delta - 1):].copy() if delta > 1 else H[:, :0].copy(),
        train_days=tuple(train_days),
        H_train=H,
    )


def eta(model: EwiModel, H, t) -> float:
    """Indicator value at column ``t`` of ``H``."""
    H = np.asarray(H, dtype=float)
    if t - (model.delta - 1) < 0:
        raise ValueError(f"column {t} has fewer than {model.delta - 1} days of history")
    window = H[:, t - model.delta + 1 : t + 1][:, ::-1]  # window[:, l] = H[:, t - l]
    return float(np.sum(model.c * window))


def eta_series(model: EwiModel, H) -> np.ndarray:
    """Indicator for every column of ``H`` that has ``delta - 1`` days of history."""
    A = lagged_design(H, model.delta)
    return A @ model.c.reshape(-1)


def predict(eta_value, threshold) -> int:
    """1 when the indicator reaches the threshold."""
    return int(eta_value >= threshold)


def baseline_volume(volume):
    """Blockchain volume used directly as the indicator score."""
    return np.asarray(volume, dtype=float)


def ridge_fit(F, y, ridge):
    """Ridge regression with an unpenalised intercept on standardised features.

    Returns ``(coef, intercept, mean, std)`` where predictions are
    ``intercept + ((F - mean) / std) @ coef``.
    """
    F = np.asarray(F, dtype=float)
    y = np.asarray(y, dtype=float)
    mean = F.mean(axis=0)
    std = F.std(axis=0)
    std[std == 0] = 1.0
    Z = (F - mean) / std
    y_mean = y.mean()
    p = Z.shape[1]
    # augmented least squares instead of the normal equations
    A = np.vstack([Z, np.sqrt(ridge) * np.eye(p)])
    rhs = np.concatenate([y - y_mean, np.zeros(p)])
    coef = np.linalg.lstsq(A, rhs, rcond=None)[0]
    return coef, y_mean, mean, std


@dataclass(frozen=True)
class SvdLrModel:
    U: np.ndarray  # (M, k) left singular basis of the training window
    coef: np.ndarray
    intercept: float
    mean: np.ndarray
    std: np.ndarray
    delta: int
    history: np.ndarray

    def represent(self, V) -> np.ndarray:
        return self.U.T @ np.asarray(V, dtype=float)

    def score_series(self, R) -> np.ndarray:
        F = lagged_design(R, self.delta)
        return self.intercept + ((F - self.mean) / self.std) @ self.coef


def baseline_svd_lr(train_X, sigma, k=10, delta=5, ridge=1.0) -> SvdLrModel:
    """Rank-``k`` SVD features with ridge regression on next-day volatility.

    Representations of the training window are ``diag(S_k) Vt_k``, equal to
    ``U_k' X``; holdout columns are projected onto the same ``U_k``.
    """
    train_X = np.asarray(train_X, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    T = train_X.shape[1]
    if sigma.shape != (T,):
        raise ValueError("sigma must align with the columns of train_X")
    if T <= delta:
        raise ValueError(f"training window of {T} days is too short for delta={delta}")
    U, S, Vt = svd(train_X)
    k = min(k, len(S))
    R = S[:k, None] * Vt[:k]
    F = lagged_design(R[:, :-1], delta)
    y = sigma[delta:]
    ok = np.isfinite(y)
    coef, intercept, mean, std = ridge_fit(F[ok], y[ok], ridge)
    return SvdLrModel(
        U=U[:, :k],
        coef=coef,
        intercept=intercept,
        mean=mean,
        std=std,
        delta=delta,
        history=R[:, T - (delta - 1):].copy() if delta > 1 else R[:, :0].copy(),
    )
