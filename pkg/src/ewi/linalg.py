"""Dense matrix core: L2,1 norm, robust NMF, fixed-basis encoding, SVD and rank estimation.

The L2,1 norm is taken column-wise throughout: each column of ``X`` is one daily
snapshot, so ``||X||_{2,1} = sum_t ||x_t||_2``. The robust NMF objective is

    ||X - WH||_{2,1} + lam * ||H||_{2,1},   W, H >= 0

minimised with iteratively reweighted multiplicative updates (Kong, Ding and
Huang 2011). Reweighting uses diagonal matrices holding the inverse column norms
of the residual (``D1``) and of the encoding (``D2``); because they are diagonal we
keep them as vectors and scale columns instead of forming T x T matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_FLOOR = 1e-12


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 500
    rel_tol: float = 1e-4
    seed: int = 0
    denom_floor: float = DEFAULT_FLOOR
    warm_start_iters: int = 500
    warm_start_tol: float = 1e-6

    def __post_init__(self):
        if self.warm_start_iters < 0:
            raise ValueError("warm_start_iters must be >= 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be > 0")
        if not self.denom_floor > 0:
            raise ValueError("denom_floor must be > 0")


@dataclass(frozen=True)
class FactorPair:
    W: np.ndarray
    H: np.ndarray
    lam: float
    n_iter: int = 0
    objective: float = float("nan")

    @property
    def k(self) -> int:
        return self.W.shape[1]


def norm_l21(A) -> float:
    """Sum of the Euclidean norms of the columns of ``A``."""
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    return float(np.sqrt(np.square(A).sum(axis=0)).sum())


def _column_norms(A, floor):
    # floor sits inside the square root
    return np.sqrt(np.maximum(np.square(A).sum(axis=0), floor))


def nmf_objective(X, W, H, lam) -> float:
    X, W, H = (np.asarray(a, dtype=float) for a in (X, W, H))
    if W.shape[0] != X.shape[0] or H.shape[1] != X.shape[1] or W.shape[1] != H.shape[0]:
        raise ValueError(
            f"dimension mismatch: X {X.shape}, W {W.shape}, H {H.shape}"
        )
    return norm_l21(X - W @ H) + lam * norm_l21(H)


def _update_H(X, W, H, lam, floor):
    d1 = 1.0 / _column_norms(X - W @ H, floor)
    numer = (W.T @ X) * d1
    denom = (W.T @ W @ H) * d1
    if lam:
        d2 = 1.0 / _column_norms(H, floor)
        denom = denom + lam * H * d2
    return H * np.maximum(numer, 0.0) / np.maximum(denom, floor)


def _update_W(X, W, H, floor):
    d1 = 1.0 / _column_norms(X - W @ H, floor)
    Hd = H * d1
    numer = X @ Hd.T
    denom = W @ (H @ Hd.T)
    return W * np.maximum(numer, 0.0) / np.maximum(denom, floor)


def nmf_step(X, W, H, lam, denom_floor=DEFAULT_FLOOR):
    """One round of multiplicative updates: H first, then W.

    The residual weights are recomputed between the two half-steps so each
    half-step majorises the objective at the current iterate.
    """
    X = np.asarray(X, dtype=float)
    H = _update_H(X, W, H, lam, denom_floor)
    W = _update_W(X, W, H, denom_floor)
    return W, H


def _check_nonneg(X, name="X"):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 2-d matrix")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    if np.any(X < 0):
        raise ValueError(f"{name} contains negative values")
    return X


def _init_scale(X, k):
    mean = float(X.mean()) if X.size else 0.0
    return np.sqrt(mean / k) if mean > 0 else 1.0


def _uniform_open_closed(rng, shape):
    # rng.random() is on [0, 1); reflect to (0, 1]
    return 1.0 - rng.random(shape)


def _converged(prev, cur, rel_tol):
    if prev == cur:
        return True
    return abs(prev - cur) < rel_tol * max(abs(prev), np.finfo(float).tiny)


def hals_warm_start(X, W, H, max_iters, tol, floor=DEFAULT_FLOOR):
    """Frobenius-loss NMF by hierarchical alternating least squares.

    Plain multiplicative updates from a random start stall far from the optimum
    on exactly low-rank data; a short HALS phase lands in the right basin and
    the reweighted updates then refine it.
    """
    W = W.copy()
    H = H.copy()
    prev = None
    for _ in range(max_iters):
        XHt = X @ H.T
        HHt = H @ H.T
        for j in range(W.shape[1]):
            W[:, j] = np.maximum(W[:, j] + (XHt[:, j] - W @ HHt[:, j]) / max(HHt[j, j], floor), 0.0)
        WtX = W.T @ X
        WtW = W.T @ W
        for j in range(W.shape[1]):
            H[j] = np.maximum(H[j] + (WtX[j] - WtW[j] @ H) / max(WtW[j, j], floor), 0.0)
        err = np.linalg.norm(X - W @ H)
        if prev is not None and abs(prev - err) <= tol * prev:
            break
        prev = err
    return W, H


def robust_nmf(X, k, lam=1.0, opts=None, callback=None) -> FactorPair:
    """Factorise ``X ~ WH`` under the L2,1 loss with an L2,1 penalty on ``H``.

    Seeded uniform initialisation, an optional HALS warm start
    (``opts.warm_start_iters``), then ``nmf_step`` until the relative objective
    change drops below ``opts.rel_tol``. ``callback(it, W, H, objective)`` is
    invoked after every ``nmf_step`` if given.
    """
    opts = opts or SolverOptions()
    X = _check_nonneg(X)
    M, T = X.shape
    if not 1 <= k <= min(M, T):
        raise ValueError(f"k={k} out of range [1, {min(M, T)}]")
    rng = np.random.default_rng(opts.seed)
    scale = _init_scale(X, k)
    W = _uniform_open_closed(rng, (M, k)) * scale
    H = _uniform_open_closed(rng, (k, T)) * scale
    if opts.warm_start_iters and X.any():
        W, H = hals_warm_start(X, W, H, opts.warm_start_iters, opts.warm_start_tol, opts.denom_floor)

    obj = nmf_objective(X, W, H, lam)
    it = 0
    for it in range(1, opts.max_iters + 1):
        W, H = nmf_step(X, W, H, lam, opts.denom_floor)
        new_obj = nmf_objective(X, W, H, lam)
        if callback is not None:
            callback(it, W, H, new_obj)
        done = _converged(obj, new_obj, opts.rel_tol)
        obj = new_obj
        if done:
            break
    return FactorPair(W=W, H=H, lam=lam, n_iter=it, objective=obj)


def encoding_objective(V, W, H, lam) -> np.ndarray:
    """Per-column terms of ``||V - WH||_{2,1} + lam ||H||_{2,1}``."""
    R = V - W @ H
    return np.sqrt(np.square(R).sum(axis=0)) + lam * np.sqrt(np.square(H).sum(axis=0))


def encode_fixed_basis(V, W, lam=1.0, opts=None, callback=None) -> np.ndarray:
    """Encode the columns of ``V`` against a fixed basis ``W``.

    Only the H update is iterated. The problem separates over columns, and each
    column stops on its own relative-change test, so the encoding of column ``t``
    never depends on any other column of ``V``.
    """
    opts = opts or SolverOptions()
    V = _check_nonneg(V, "V")
    W = _check_nonneg(W, "W")
    if V.shape[0] != W.shape[0]:
        raise ValueError(f"V has {V.shape[0]} rows but W has {W.shape[0]}")
    k = W.shape[1]
    T = V.shape[1]
    rng = np.random.default_rng(opts.seed)
    # drawn column-major and scaled per column: column t's start ignores the rest of V
    H = _uniform_open_closed(rng, (T, k)).T.copy()
    col_mean = V.mean(axis=0) if V.shape[0] else np.zeros(T)
    H *= np.where(col_mean > 0, np.sqrt(np.maximum(col_mean, 0) / k), 1.0)
    if T == 0:
        return H

    obj = encoding_objective(V, W, H, lam)
    active = np.ones(T, dtype=bool)
    for it in range(1, opts.max_iters + 1):
        cols = np.flatnonzero(active)
        H_new = _update_H(V[:, cols], W, H[:, cols], lam, opts.denom_floor)
        H[:, cols] = H_new
        new_obj = encoding_objective(V[:, cols], W, H_new, lam)
        if callback is not None:
            callback(it, H, cols, obj[cols], new_obj)
        prev = obj[cols]
        stop = (prev == new_obj) | (
            np.abs(prev - new_obj) < opts.rel_tol * np.maximum(np.abs(prev), np.finfo(float).tiny)
        )
        obj[cols] = new_obj
        active[cols[stop]] = False
        if not active.any():
            break
    return H


def svd(A):
    """Thin SVD with singular values in descending order."""
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix contains non-finite values")
    U, S, Vt = np.linalg.svd(A, full_matrices=False)
    return U, S, Vt


def estimate_rank(A, rel_floor=1e-10, tie_rtol=1e-9) -> int:
    """Rank at the largest relative drop between consecutive singular values.

    Returns ``i + 1`` for the ``i`` minimising ``S[i+1] / S[i]``, considering only
    ``S[i]`` above ``rel_floor * S[0]``. Near-ties resolve to the smallest index.
    """
    S = svd(A)[1]
    if S.size < 2 or S[0] <= 0:
        raise ValueError("need a non-zero matrix with at least 2 singular values")
    n_above = int(np.sum(S > rel_floor * S[0]))
    # ratio at i uses S[i+1], which may itself fall below the floor
    n_ratio = min(n_above, S.size - 1)
    ratios = S[1 : n_ratio + 1] / S[:n_ratio]
    best = ratios.min()
    i = int(np.flatnonzero(ratios <= best * (1 + tie_rtol) + 0.0)[0])
    return i + 1


def reconstruction_score(X, W, H) -> float:
    """``(||X|| - ||X - WH||) / ||X||`` in the L2,1 norm."""
    X = np.asarray(X, dtype=float)
    total = norm_l21(X)
    if total == 0:
        raise ValueError("reconstruction score undefined for a zero matrix")
    return (total - norm_l21(X - np.asarray(W) @ np.asarray(H))) / total
