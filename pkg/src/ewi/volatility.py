"""Garman-Klass daily volatility, extreme-event labels and volume ratios."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

GK_CLOSE_WEIGHT = 2.0 * math.log(2.0) - 1.0
GK_LOWER_BOUND = 1.5 - 2.0 * math.log(2.0)


@dataclass(frozen=True)
class OhlcBar:
    day: int
    open: float
    high: float
    low: float
    close: float

    def validate(self):
        prices = (self.open, self.high, self.low, self.close)
        if not all(math.isfinite(p) and p > 0 for p in prices):
            raise ValueError(f"day {self.day}: prices must be finite and positive")
        if self.low > min(self.open, self.close) or self.high < max(self.open, self.close):
            raise ValueError(f"day {self.day}: low/high do not bracket open/close")


def garman_klass_variance(bar: OhlcBar) -> float:
    bar.validate()
    log_hl = math.log(bar.high / bar.low)
    log_co = math.log(bar.close / bar.open)
    return 0.5 * log_hl**2 - GK_CLOSE_WEIGHT * log_co**2


def garman_klass(bar: OhlcBar) -> float:
    """Daily Garman-Klass volatility sigma (not sigma squared)."""
    # valid bars give variance >= (1.5 - 2 ln 2) ln(H/L)^2, so no flooring is needed
    return math.sqrt(garman_klass_variance(bar))


def garman_klass_array(open_, high, low, close) -> np.ndarray:
    """Vectorised ``garman_klass`` over aligned price arrays."""
    o, h, l, c = (np.asarray(a, dtype=float) for a in (open_, high, low, close))
    if not (np.all(np.isfinite([o, h, l, c])) and np.all(o > 0) and np.all(l > 0)):
        raise ValueError("prices must be finite and positive")
    if np.any(l > np.minimum(o, c)) or np.any(h < np.maximum(o, c)):
        raise ValueError("low/high do not bracket open/close")
    var = 0.5 * np.log(h / l) ** 2 - GK_CLOSE_WEIGHT * np.log(c / o) ** 2
    return np.sqrt(var)


@dataclass(frozen=True)
class VolatilitySeries:
    """Daily sigma on a contiguous day range; missing days hold NaN."""

    start_day: int
    sigma: np.ndarray

    @property
    def days(self) -> np.ndarray:
        return np.arange(self.start_day, self.start_day + len(self.sigma))

    @classmethod
    def from_bars(cls, bars) -> "VolatilitySeries":
        bars = sorted(bars, key=lambda b: b.day)
        if not bars:
            raise ValueError("no bars")
        start = bars[0].day
        sigma = np.full(bars[-1].day - start + 1, np.nan)
        for b in bars:
            if not np.isnan(sigma[b.day - start]):
                raise ValueError(f"duplicate bar for day {b.day}")
            sigma[b.day - start] = garman_klass(b)
        return cls(start, sigma)

    def aligned(self, days) -> np.ndarray:
        """Sigma at the requested days, NaN where no bar exists."""
        days = np.asarray(days)
        out = np.full(days.shape, np.nan)
        idx = days - self.start_day
        ok = (idx >= 0) & (idx < len(self.sigma))
        out[ok] = self.sigma[idx[ok]]
        return out


@dataclass(frozen=True)
class GroundTruthLabels:
    """Labels for anchors ``days``; ``beta[i]`` classifies days ``days[i]+1 .. days[i]+h``."""

    days: np.ndarray
    beta: np.ndarray
    alpha: float
    h: int

    def lookup(self, days) -> np.ndarray:
        """Labels for the requested anchors, -1 where undefined."""
        days = np.asarray(days)
        out = np.full(days.shape, -1, dtype=int)
        if len(self.days) == 0:
            return out
        idx = days - self.days[0]
        ok = (idx >= 0) & (idx < len(self.days))
        out[ok] = self.beta[idx[ok]]
        return out


def label_extremes(sigma: VolatilitySeries, alpha: float, h: int) -> GroundTruthLabels:
    """Label each anchor ``t`` with 1 iff some sigma in ``t+1 .. t+h`` reaches ``alpha``.

    Anchors whose segment touches a missing day get label -1 (excluded from
    evaluation). The last ``h`` days of the series have no complete segment and
    are not anchors.
    """
    if h < 1:
        raise ValueError("h must be >= 1")
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    s = np.asarray(sigma.sigma, dtype=float)
    n = len(s)
    if n < h + 1:
        raise ValueError(f"series of length {n} is shorter than h + 1 = {h + 1}")
    extreme = np.where(np.isnan(s), 0, s >= alpha).astype(int)
    missing = np.isnan(s).astype(int)
    # window sums over days t+1..t+h for anchors t = 0..n-1-h
    ext_c = np.concatenate([[0], np.cumsum(extreme)])
    mis_c = np.concatenate([[0], np.cumsum(missing)])
    anchors = np.arange(n - h)
    n_ext = ext_c[anchors + h + 1] - ext_c[anchors + 1]
    n_mis = mis_c[anchors + h + 1] - mis_c[anchors + 1]
    beta = np.where(n_mis > 0, -1, (n_ext > 0).astype(int))
    return GroundTruthLabels(days=anchors + sigma.start_day, beta=beta, alpha=alpha, h=h)


def positive_rate(labels) -> float:
    """Fraction of defined labels equal to 1."""
    beta = labels.beta if isinstance(labels, GroundTruthLabels) else np.asarray(labels)
    beta = beta[beta >= 0]
    if beta.size == 0:
        raise ValueError("no labels")
    return float(np.mean(beta == 1))


def volume_ratio(market: pd.Series, blockchain: pd.Series) -> pd.Series:
    """Elementwise ``market / blockchain``; days with zero blockchain volume become NaN."""
    if not market.index.equals(blockchain.index):
        raise ValueError("market and blockchain series are not aligned on the same days")
    vb = blockchain.astype(float)
    ratio = market.astype(float) / vb.where(vb != 0)
    return ratio.rename("volume_ratio")
