"""Run configuration: a TOML file with nested sections, overridable from the environment.

Environment variables ``EWI_<SECTION>__<KEY>`` override ``[section] key``;
values are parsed as TOML literals (``EWI_MODEL__K=20``,
``EWI_SWEEP__ALPHAS="[0.1, 0.2]"``) and fall back to plain strings.
Relative paths are resolved against the directory of the config file.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import tomli

from .errors import ConfigError, MissingDataError
from .linalg import SolverOptions
from .pipeline import INDICATORS, IndicatorParams, SweepGrid

ENV_PREFIX = "EWI_"


@dataclass
class DataConfig:
    matrix: str = ""  # directory holding X.npy and its sidecars
    ledger: str = ""  # alternative to matrix: raw ledger to ingest
    ohlc: str = ""
    epoch: str = "1970-01-01"
    encoding: str = "node"
    min_tx: int = 100
    min_span: int = 600
    active_before: int = None


@dataclass
class SolverConfig:
    max_iters: int = 500
    rel_tol: float = 1e-4
    denom_floor: float = 1e-12
    warm_start_iters: int = 500
    warm_start_tol: float = 1e-6


@dataclass
class ModelConfig:
    indicator: str = "nmf_nlr"
    k: int = 10
    delta: int = 5
    lam: float = 1.0
    lam_c: float = 1e-3
    ridge: float = 1.0


@dataclass
class PartitionConfig:
    holdout_days: int = 30
    train_days: int = 150


@dataclass
class EvaluationConfig:
    alpha: float = 0.1
    h: int = 1


@dataclass
class SweepConfig:
    alphas: list = field(default_factory=lambda: [0.05, 0.1, 0.15, 0.2])
    hs: list = field(default_factory=lambda: list(range(1, 11)))
    ks: list = field(default_factory=lambda: [10])
    deltas: list = field(default_factory=lambda: [5])
    indicators: list = field(default_factory=lambda: list(INDICATORS))


@dataclass
class RunSection:
    seed: int = 0
    threads: int = 1
    out: str = ""


SECTIONS = {
    "data": DataConfig,
    "solver": SolverConfig,
    "model": ModelConfig,
    "partition": PartitionConfig,
    "evaluation": EvaluationConfig,
    "sweep": SweepConfig,
    "run": RunSection,
}

# preset sweep profiles mirroring the reported table configurations
PROFILES = {
    "table-a": {"ks": [10], "deltas": [5], "hs": [1]},
    "table-b": {"ks": [10], "deltas": [1, 10], "hs": [1], "indicators": ["nmf_nlr"]},
    "table-c": {"ks": [5, 20], "deltas": [5], "hs": [1], "indicators": ["nmf_nlr"]},
}


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    run: RunSection = field(default_factory=RunSection)

    def solver_options(self) -> SolverOptions:
        return SolverOptions(seed=self.run.seed, **asdict(self.solver))

    def indicator_params(self) -> IndicatorParams:
        m = self.model
        return IndicatorParams(m.k, m.delta, m.lam, m.lam_c, m.ridge, self.solver_options())

    def sweep_grid(self) -> SweepGrid:
        s = self.sweep
        return SweepGrid(tuple(s.alphas), tuple(s.hs), tuple(s.ks), tuple(s.deltas), tuple(s.indicators))

    def snapshot(self) -> dict:
        """Config as a plain dict, without the output location."""
        d = asdict(self)
        d["run"].pop("out", None)
        return d

    def validate(self):
        m, s = self.model, self.sweep
        if m.indicator not in INDICATORS:
            raise ConfigError(f"model.indicator must be one of {INDICATORS}, got {m.indicator!r}")
        if self.data.encoding not in ("node", "edge"):
            raise ConfigError(f"data.encoding must be 'node' or 'edge', got {self.data.encoding!r}")
        for name in ("alphas", "hs", "ks", "deltas", "indicators"):
            if not getattr(s, name):
                raise ConfigError(f"sweep.{name} must be non-empty")
        bad = set(s.indicators) - set(INDICATORS)
        if bad:
            raise ConfigError(f"unknown sweep indicators {sorted(bad)}")
        if m.k < 1 or m.delta < 1 or min(s.ks) < 1 or min(s.deltas) < 1:
            raise ConfigError("k and delta must be >= 1")
        if self.evaluation.h < 1 or min(s.hs) < 1:
            raise ConfigError("h must be >= 1")
        if not self.evaluation.alpha > 0 or min(s.alphas) <= 0:
            raise ConfigError("alpha must be > 0")
        if self.partition.holdout_days < 1 or self.partition.train_days < 1:
            raise ConfigError("partition lengths must be >= 1")
        try:
            self.solver_options()
        except ValueError as e:
            raise ConfigError(f"solver: {e}") from e

    def check_paths(self):
        d = self.data
        if not (d.matrix or d.ledger):
            raise ConfigError("data.matrix or data.ledger must be set")
        if not d.ohlc:
            raise ConfigError("data.ohlc must be set")
        for p in (d.matrix, d.ledger, d.ohlc):
            if p and not Path(p).exists():
                raise MissingDataError(f"{p} does not exist")


def _coerce(section, key, value, typ_default):
    default = typ_default
    if default is None:
        return value if value is None else int(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{section}.{key} must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{section}.{key} must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{section}.{key} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{section}.{key} must be a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{section}.{key} must be a list, got {value!r}")
        return value
    return value


def _parse_env_value(raw: str):
    try:
        return tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        return raw


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX) or "__" not in name:
            continue
        section, _, key = name[len(ENV_PREFIX):].lower().partition("__")
        out.setdefault(section, {})[key] = _parse_env_value(raw)
    return out


def from_dict(raw: dict, base_dir=None) -> RunConfig:
    cfg = RunConfig()
    profile = raw.get("sweep", {}).get("profile") if isinstance(raw.get("sweep"), dict) else None
    for section, values in raw.items():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(values, dict):
            raise ConfigError(f"[{section}] must be a table")
        target = getattr(cfg, section)
        known = {f.name for f in fields(target)}
        values = dict(values)
        if section == "sweep" and "profile" in values:
            values.pop("profile")
            if profile not in PROFILES:
                raise ConfigError(f"unknown sweep profile {profile!r}; choose from {sorted(PROFILES)}")
            values = {**PROFILES[profile], **values}
        for key, value in values.items():
            if key not in known:
                raise ConfigError(f"unknown key {section}.{key}")
            setattr(target, key, _coerce(section, key, value, getattr(target, key)))
    if base_dir is not None:
        for key in ("matrix", "ledger", "ohlc"):
            p = getattr(cfg.data, key)
            if p and not Path(p).is_absolute():
                setattr(cfg.data, key, str((Path(base_dir) / p).resolve()))
        if cfg.run.out and not Path(cfg.run.out).is_absolute():
            cfg.run.out = str((Path(base_dir) / cfg.run.out).resolve())
    cfg.validate()
    return cfg


def _merge(a: dict, b: dict) -> dict:
    out = {k: dict(v) if isinstance(v, dict) else v for k, v in a.items()}
    for k, v in b.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k].update(v)
        else:
            out[k] = v
    return out


def load_config(path=None, environ=None) -> RunConfig:
    raw = {}
    base = None
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise MissingDataError(f"config file {path} does not exist")
        try:
            raw = tomli.loads(path.read_text())
        except tomli.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from e
        base = path.parent
    raw = _merge(raw, env_overrides(environ))
    return from_dict(raw, base_dir=base)
