"""File formats: matrix dumps with index sidecars, OHLC tables, model archives, CSV outputs.

Every writer is deterministic (no timestamps, fixed float formatting) so
identical runs produce identical bytes.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import io
import json
import zipfile
from pathlib import Path

import numpy as np

from .errors import DataError, MissingDataError
from .indicator import EwiModel
from .ledger import EvolutionMatrix
from .volatility import OhlcBar

ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _entity_str(e) -> str:
    if isinstance(e, tuple):
        return "->".join(str(v) for v in e)
    return str(e)


def _parse_entity(s: str):
    if "->" in s:
        return tuple(_parse_int_or_str(p) for p in s.split("->"))
    return _parse_int_or_str(s)


def _parse_int_or_str(s):
    try:
        return int(s)
    except ValueError:
        return s


def _require(path: Path):
    if not path.exists():
        raise MissingDataError(f"{path} does not exist")
    return path


def save_array(directory, name, values, rows=None, cols=None):
    """``<name>.npy`` plus optional ``<name>.rows.txt`` / ``<name>.cols.txt`` sidecars."""
    directory = Path(directory)
    np.save(directory / f"{name}.npy", np.ascontiguousarray(values))
    for suffix, index in (("rows", rows), ("cols", cols)):
        if index is not None:
            (directory / f"{name}.{suffix}.txt").write_text("".join(_entity_str(e) + "\n" for e in index))


def load_array(directory, name):
    directory = Path(directory)
    values = np.load(_require(directory / f"{name}.npy"))
    out = [values]
    for suffix in ("rows", "cols"):
        p = directory / f"{name}.{suffix}.txt"
        out.append([_parse_entity(s) for s in p.read_text().splitlines()] if p.exists() else None)
    return tuple(out)


def save_matrix(directory, X: EvolutionMatrix, name="X"):
    save_array(directory, name, X.values, X.row_index, [int(d) for d in X.day_index])


def load_matrix(directory, name="X") -> EvolutionMatrix:
    directory = Path(directory)
    if directory.is_file() and directory.suffix == ".npy":
        directory, name = directory.parent, directory.stem
    _require(directory)
    values, rows, cols = load_array(directory, name)
    if rows is None or cols is None:
        raise DataError(f"matrix {name} in {directory} lacks row/day sidecar files")
    return EvolutionMatrix(values, rows, np.asarray(cols, dtype=np.int64))


def parse_date(s) -> dt.date:
    return s if isinstance(s, dt.date) else dt.date.fromisoformat(str(s))


def day_of(date, epoch="1970-01-01") -> int:
    return (parse_date(date) - parse_date(epoch)).days


def date_of(day, epoch="1970-01-01") -> str:
    return (parse_date(epoch) + dt.timedelta(days=int(day))).isoformat()


def read_ohlc(path, epoch="1970-01-01") -> list:
    """Bars from a CSV with columns date, open, high, low, close."""
    path = _require(Path(path))
    bars = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"date", "open", "high", "low", "close"} - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}: missing columns {sorted(missing)}")
        for i, row in enumerate(reader, 2):
            try:
                bar = OhlcBar(
                    day_of(row["date"], epoch),
                    float(row["open"]), float(row["high"]), float(row["low"]), float(row["close"]),
                )
                bar.validate()
            except ValueError as e:
                raise DataError(f"{path}:{i}: {e}") from e
            bars.append(bar)
    return bars


def write_ohlc(path, bars, epoch="1970-01-01"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "open", "high", "low", "close"])
        for b in bars:
            w.writerow([date_of(b.day, epoch), fmt(b.open), fmt(b.high), fmt(b.low), fmt(b.close)])


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if not isinstance(v, str) else v for v in r])


def read_csv_columns(path, *columns):
    path = _require(Path(path))
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        absent = set(columns) - set(reader.fieldnames or ())
        if absent:
            raise DataError(f"{path}: missing columns {sorted(absent)}")
        rows = list(reader)
    return [[r[c] for r in rows] for c in columns]


def write_curve(path, curve):
    write_csv(path, ["threshold", "x", "y"], zip(curve.thresholds, curve.x, curve.y))


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _npy_bytes(a) -> bytes:
    buf = io.BytesIO()
    np.save(buf, np.ascontiguousarray(a))
    return buf.getvalue()


def _zip_write(zf, name, data: bytes):
    info = zipfile.ZipInfo(name, date_time=ZIP_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def save_model(path, model: EwiModel, metadata=None):
    """Zip archive holding W, c, the lag history and a JSON header."""
    meta = {
        "kind": "nmf_nlr",
        "k": model.k,
        "delta": model.delta,
        "lam_enc": model.lam_enc,
        "lam_c": model.lam_c,
        "train_days": list(model.train_days),
        **(metadata or {}),
    }
    with zipfile.ZipFile(path, "w") as zf:
        _zip_write(zf, "meta.json", json.dumps(meta, indent=2, sort_keys=True, default=_json_default).encode())
        _zip_write(zf, "W.npy", _npy_bytes(model.W))
        _zip_write(zf, "c.npy", _npy_bytes(model.c))
        _zip_write(zf, "history.npy", _npy_bytes(model.history))


def load_model(path):
    """Return ``(model, meta)`` from an archive written by ``save_model``."""
    path = _require(Path(path))
    with zipfile.ZipFile(path) as zf:
        meta = json.loads(zf.read("meta.json"))
        arrays = {n: np.load(io.BytesIO(zf.read(f"{n}.npy"))) for n in ("W", "c", "history")}
    model = EwiModel(
        W=arrays["W"], c=arrays["c"], lam_enc=meta["lam_enc"], lam_c=meta["lam_c"],
        history=arrays["history"], train_days=tuple(meta.get("train_days", ())),
    )
    return model, meta


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
