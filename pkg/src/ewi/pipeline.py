"""Rolling-window backtest and sensitivity sweeps.

Each fold trains on the ``train_days`` columns immediately before a
``holdout_days`` segment and scores every holdout day. Scores for anchor ``t``
use the encodings of days ``t - delta + 1 .. t`` only; the first holdout days
borrow the tail of the training encodings.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np

from .evaluation import ScoredLabels, concat, evaluate_fold_pool
from .indicator import baseline_svd_lr, baseline_volume, eta_series, train_ewi
from .ledger import EvolutionMatrix, daily_volume
from .linalg import SolverOptions, encode_fixed_basis
from .volatility import VolatilitySeries, label_extremes

log = logging.getLogger(__name__)

INDICATORS = ("nmf_nlr", "svd_lr", "volume")


@dataclass(frozen=True)
class Fold:
    index: int
    train: tuple  # column positions [start, stop)
    holdout: tuple


@dataclass(frozen=True)
class RollingPartition:
    folds: tuple
    holdout_days: int
    train_days: int


def make_partition(n_days, holdout_days=30, train_days=150) -> RollingPartition:
    """Consecutive holdout segments starting at ``train_days``; a short tail is dropped."""
    if holdout_days < 1 or train_days < 1:
        raise ValueError("holdout_days and train_days must be >= 1")
    if n_days < train_days + holdout_days:
        raise ValueError(
            f"{n_days} days cannot hold a {train_days}-day training window and a {holdout_days}-day holdout"
        )
    folds = []
    start = train_days
    while start + holdout_days <= n_days:
        folds.append(Fold(len(folds), (start - train_days, start), (start, start + holdout_days)))
        start += holdout_days
    return RollingPartition(tuple(folds), holdout_days, train_days)


@dataclass(frozen=True)
class IndicatorParams:
    k: int = 10
    delta: int = 5
    lam: float = 1.0
    lam_c: float = 1e-3
    ridge: float = 1.0
    solver: SolverOptions = field(default_factory=SolverOptions)


@dataclass(frozen=True)
class FoldScores:
    fold: Fold
    days: np.ndarray
    scores: np.ndarray
    train_max_day: int  # latest day of any data handed to training


def fold_seed(seed, index) -> int:
    """Per-fold seed that depends only on the run seed and the fold index."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _score_fold(X, sigma, kind, params, fold, seed):
    a, b = fold.train
    c_, d_ = fold.holdout
    days = X.day_index
    train_vals = X.values[:, a:b]
    train_sigma = sigma[a:b]
    train_days = days[a:b]
    holdout_vals = X.values[:, c_:d_]
    opts = replace(params.solver, seed=fold_seed(seed, fold.index))

    if kind == "nmf_nlr":
        model = train_ewi(
            train_vals, train_sigma, params.k, params.delta, params.lam, params.lam_c, opts,
            train_days=(int(train_days[0]), int(train_days[-1])),
        )
        Hv = encode_fixed_basis(holdout_vals, model.W, params.lam, opts)
        scores = eta_series(model, np.hstack([model.history, Hv]))
    elif kind == "svd_lr":
        model = baseline_svd_lr(train_vals, train_sigma, params.k, params.delta, params.ridge)
        R = np.hstack([model.history, model.represent(holdout_vals)])
        scores = model.score_series(R)
    elif kind == "volume":
        scores = baseline_volume(daily_volume(holdout_vals))
        train_days = days[c_:c_]  # no training data
    else:
        raise ValueError(f"unknown indicator {kind!r}; expected one of {INDICATORS}")

    train_max = int(train_days.max()) if len(train_days) else int(days[c_]) - 1
    return FoldScores(fold, days[c_:d_].copy(), np.asarray(scores, dtype=float), train_max)


def score_folds(X: EvolutionMatrix, sigma, kind, params=IndicatorParams(), partition=None, seed=0, threads=1):
    """Train and score every fold. ``sigma`` is aligned to ``X.day_index``."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (X.shape[1],):
        raise ValueError("sigma must align with the columns of X")
    if np.any(np.diff(X.day_index) != 1):
        raise ValueError("evolution matrix days are not contiguous")
    partition = partition or make_partition(X.shape[1])

    def run(fold):
        return _score_fold(X, sigma, kind, params, fold, seed)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, partition.folds))
    else:
        results = [run(f) for f in partition.folds]
    for r in results:
        holdout_start = int(X.day_index[r.fold.holdout[0]])
        if r.train_max_day >= holdout_start:
            raise AssertionError(f"fold {r.fold.index} trained on day {r.train_max_day} >= holdout start {holdout_start}")
    return results


def attach_labels(fold_scores, labels):
    """Pair fold scores with ground truth, dropping anchors without a defined label."""
    out = []
    for fs in fold_scores:
        beta = labels.lookup(fs.days)
        ok = beta >= 0
        out.append(ScoredLabels(fs.scores[ok], beta[ok], fs.days[ok]))
    return out


@dataclass(frozen=True)
class BacktestResult:
    kind: str
    alpha: float
    h: int
    fold_scores: list
    scored: list
    metrics: object  # PooledMetrics


def run_backtest(X, sigma: VolatilitySeries, kind, params=IndicatorParams(), alpha=0.1, h=1,
                 partition=None, seed=0, threads=1) -> BacktestResult:
    aligned = sigma.aligned(X.day_index)
    fold_scores = score_folds(X, aligned, kind, params, partition, seed, threads)
    labels = label_extremes(sigma, alpha, h)
    scored = attach_labels(fold_scores, labels)
    metrics = evaluate_fold_pool(scored)
    for i in metrics.degenerate_folds:
        log.info("fold %d has a single label class; no per-fold AUC", i)
    return BacktestResult(kind, alpha, h, fold_scores, scored, metrics)


@dataclass(frozen=True)
class SweepGrid:
    alphas: tuple = (0.05, 0.1, 0.15, 0.2)
    hs: tuple = tuple(range(1, 11))
    ks: tuple = (10,)
    deltas: tuple = (5,)
    indicators: tuple = INDICATORS

    def configs(self):
        """(indicator, k, delta) combinations; the volume baseline ignores k and delta."""
        for ind in self.indicators:
            if ind == "volume":
                yield ind, None, None
            else:
                for k, d in product(self.ks, self.deltas):
                    yield ind, k, d


SWEEP_COLUMNS = ("indicator", "k", "delta", "alpha", "h", "n", "eps", "auc_pr", "auc_pr_minus_eps", "auc_roc", "n_degenerate")


def sensitivity_sweep(X, sigma: VolatilitySeries, grid=SweepGrid(), params=IndicatorParams(),
                      partition=None, seed=0, threads=1) -> list:
    """One pooled evaluation per (indicator, k, delta, alpha, h) cell.

    Scores do not depend on (alpha, h), so each (indicator, k, delta) is
    trained once and re-labelled for every cell.
    """
    aligned = sigma.aligned(X.day_index)
    labels = {(a, h): label_extremes(sigma, a, h) for a, h in product(grid.alphas, grid.hs)}
    rows = []
    for ind, k, d in grid.configs():
        p = params if k is None else replace(params, k=k, delta=d)
        fold_scores = score_folds(X, aligned, ind, p, partition, seed, threads)
        for a, h in product(grid.alphas, grid.hs):
            scored = attach_labels(fold_scores, labels[a, h])
            pooled = concat(scored)
            row = {"indicator": ind, "k": k, "delta": d, "alpha": a, "h": h, "n": len(pooled),
                   "eps": pooled.positive_rate if len(pooled) else float("nan")}
            if pooled.n_pos == 0 or pooled.n_neg == 0:
                # single-class cell: curves are undefined
                log.warning("sweep cell %s alpha=%g h=%d has a single label class", ind, a, h)
                row.update(auc_pr=float("nan"), auc_pr_minus_eps=float("nan"), auc_roc=float("nan"),
                           n_degenerate=len(scored))
            else:
                m = evaluate_fold_pool(scored)
                row.update(auc_pr=m.pr.auc, auc_pr_minus_eps=m.pr.auc - m.eps, auc_roc=m.roc.auc,
                           n_degenerate=len(m.degenerate_folds))
            rows.append(row)
    return rows
