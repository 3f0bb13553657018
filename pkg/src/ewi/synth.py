"""Synthetic evolution matrices with planted factors and factor-driven volatility.

Basis networks have (mostly) disjoint sparse supports and unit column sums, so
each factor's activation equals the volume it carries. A few *signal* factors
burst at random intervals; next-day volatility is a planted non-negative
combination of their lagged activations. With ``volume_independent`` a mirror
factor takes up whatever volume the signal factors do not carry, which keeps
total daily volume free of the signal.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .ledger import EvolutionMatrix
from .volatility import OhlcBar

# 2012-01-01 as days since 1970-01-01
DEFAULT_START_DAY = 15340


@dataclass(frozen=True)
class SynthSpec:
    n_rows: int = 120
    n_days: int = 720
    k_true: int = 10
    noise_level: float = 0.01
    delta: int = 5
    n_signal: int = 2
    signal_level: float = 0.25
    volume_independent: bool = True
    overlap: float = 0.05
    burst_rate: float = 0.04
    burst_length: tuple = (3, 10)
    burst_gain: tuple = (2.0, 5.0)
    background_sd: float = 0.4
    background_ar: float = 0.5
    sigma_noise: float = 0.1
    alpha: float = 0.1
    target_rate: float = 0.1
    coupling: tuple = None  # explicit (n_signal, delta) coefficients before calibration
    start_day: int = DEFAULT_START_DAY
    price0: float = 100.0
    seed: int = 0

    def __post_init__(self):
        n_planted = self.n_signal + (1 if self.volume_independent else 0)
        if min(self.n_rows, self.n_days, self.k_true, self.delta) < 1:
            raise ValueError("all dimensions must be >= 1")
        if self.noise_level < 0 or self.sigma_noise < 0:
            raise ValueError("noise levels must be >= 0")
        if n_planted > self.k_true:
            raise ValueError(f"{n_planted} planted signal factors exceed k_true={self.k_true}")
        if self.k_true > min(self.n_rows, self.n_days):
            raise ValueError("k_true exceeds the matrix dimensions")
        if not 0 < self.target_rate < 1:
            raise ValueError("target_rate must lie in (0, 1)")
        if self.coupling is not None:
            c = np.asarray(self.coupling, dtype=float)
            if c.shape != (self.n_signal, self.delta) or np.any(c < 0):
                raise ValueError("coupling must be a non-negative (n_signal, delta) array")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["burst_length"] = list(self.burst_length)
        d["burst_gain"] = list(self.burst_gain)
        if self.coupling is not None:
            d["coupling"] = [list(r) for r in self.coupling]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        for key in ("burst_length", "burst_gain"):
            if key in d:
                d[key] = tuple(d[key])
        if d.get("coupling") is not None:
            d["coupling"] = tuple(tuple(r) for r in d["coupling"])
        return cls(**d)


@dataclass(frozen=True)
class SynthData:
    X: EvolutionMatrix
    bars: list
    sigma: np.ndarray
    W_true: np.ndarray
    H_true: np.ndarray
    c_true: np.ndarray  # (k_true, delta)
    signal_factors: tuple
    spec: SynthSpec = field(repr=False)


def _basis(rng, spec):
    M, k = spec.n_rows, spec.k_true
    # every factor owns at least one row
    owner = np.concatenate([np.arange(k), rng.integers(0, k, M - k)]) if M >= k else rng.integers(0, k, M)
    owner = rng.permutation(owner)
    W = np.zeros((M, k))
    W[np.arange(M), owner] = rng.uniform(0.5, 1.5, M)
    W += (rng.random((M, k)) < spec.overlap) * rng.uniform(0.0, 0.5, (M, k))
    return W / W.sum(axis=0)


def _ar_lognormal(rng, n, sd, phi):
    z = np.empty(n)
    z[0] = rng.standard_normal()
    innov = np.sqrt(1 - phi**2)
    for t in range(1, n):
        z[t] = phi * z[t - 1] + innov * rng.standard_normal()
    return np.exp(sd * z - 0.5 * sd**2)


def _bursts(rng, n, spec):
    gain = np.ones(n)
    t = 0
    lo, hi = spec.burst_length
    while t < n:
        t += int(rng.geometric(spec.burst_rate))
        length = int(rng.integers(lo, hi + 1))
        gain[t : t + length] += rng.uniform(*spec.burst_gain)
        t += length
    return gain


def generate(spec: SynthSpec = SynthSpec()) -> SynthData:
    rng = np.random.default_rng(spec.seed)
    k, T, d = spec.k_true, spec.n_days, spec.delta
    n = T + d  # burn-in supplies lags for the first days
    W = _basis(rng, spec)

    H = np.empty((k, n))
    levels = rng.uniform(0.5, 2.0, k)
    signal = tuple(range(spec.n_signal))
    levels[list(signal)] *= spec.signal_level
    for j in range(k):
        H[j] = levels[j] * _ar_lognormal(rng, n, spec.background_sd, spec.background_ar)
    for j in signal:
        H[j] *= _bursts(rng, n, spec)
    if spec.volume_independent:
        # one mirror factor absorbs the signal volume, so sum_j H[j] ignores the signal
        total = H[list(signal)].sum(axis=0)
        mirror = spec.n_signal
        H[mirror] = total.max() + levels[mirror] - total

    if spec.coupling is not None:
        c_sig = np.asarray(spec.coupling, dtype=float)
    else:
        decay = 0.6 ** np.arange(d)
        c_sig = rng.uniform(0.5, 1.5, (spec.n_signal, 1)) * decay
    c = np.zeros((k, d))
    c[list(signal)] = c_sig

    # raw[t] = sum_{j,l} c[j,l] H[j, t-l] drives sigma[t+1]
    raw = np.zeros(n)
    for l in range(d):
        raw[d - 1 :] += c[:, l] @ H[:, d - 1 - l : n - l]
    drive = raw[d - 1 : d - 1 + T]
    noise = spec.sigma_noise * drive.std() * rng.standard_normal(T)
    sigma = np.maximum(drive + noise, 0.0)
    q = np.quantile(sigma, 1.0 - spec.target_rate)
    scale = spec.alpha / q if q > 0 else 1.0
    sigma = sigma * scale
    c = c * scale

    H = H[:, d:]
    clean = W @ H
    rms = np.sqrt(np.mean(clean**2))
    X = np.maximum(clean + spec.noise_level * rms * rng.standard_normal(clean.shape), 0.0)

    days = np.arange(spec.start_day, spec.start_day + T)
    log_ret = 0.02 * rng.standard_normal(T)
    price = spec.price0 * np.exp(np.cumsum(log_ret))
    half = sigma / np.sqrt(2.0)
    bars = [
        OhlcBar(int(day), float(p), float(p * np.exp(hw)), float(p * np.exp(-hw)), float(p))
        for day, p, hw in zip(days, price, half)
    ]
    return SynthData(
        X=EvolutionMatrix(X, tuple(range(spec.n_rows)), days),
        bars=bars,
        sigma=sigma,
        W_true=W,
        H_true=H,
        c_true=c,
        signal_factors=signal,
        spec=spec,
    )
