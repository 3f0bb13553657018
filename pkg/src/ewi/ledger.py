"""Ledger ingestion: address merging, long-term user filtering, snapshot encoding.

Input is a normalized line-delimited JSON ledger, one transaction per line::

    {"tx_id": "...", "day": 15340, "inputs": ["addr", ...], "outputs": [["addr", 5000], ...]}

Amounts are integer satoshis and are accumulated exactly before conversion
to floating bitcoins for the evolution matrix.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .errors import DataError

SATOSHI_PER_BTC = 100_000_000


@dataclass(frozen=True)
class TransactionEvent:
    tx_id: str
    day: int
    inputs: frozenset
    outputs: tuple  # ((address, satoshis), ...)

    def __post_init__(self):
        for addr, amount in self.outputs:
            if not isinstance(amount, int) or amount < 0:
                raise DataError(f"tx {self.tx_id}: amount for {addr!r} must be a non-negative integer")

    @classmethod
    def from_record(cls, rec: dict) -> "TransactionEvent":
        try:
            return cls(
                tx_id=str(rec["tx_id"]),
                day=int(rec["day"]),
                inputs=frozenset(str(a) for a in rec.get("inputs", ())),
                outputs=tuple((str(a), int(v)) for a, v in rec.get("outputs", ())),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"malformed ledger record {rec!r}: {e}") from e

    def to_record(self) -> dict:
        return {
            "tx_id": self.tx_id,
            "day": self.day,
            "inputs": sorted(self.inputs),
            "outputs": [list(o) for o in self.outputs],
        }


def read_ledger(path) -> list:
    events = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{lineno}: {e}") from e
            events.append(TransactionEvent.from_record(rec))
    return events


def write_ledger(path, events):
    with open(path, "w") as fh:
        for ev in events:
            fh.write(json.dumps(ev.to_record(), separators=(",", ":")) + "\n")


class _UnionFind:
    def __init__(self):
        self.parent = {}

    def add(self, x):
        self.parent.setdefault(x, x)

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


@dataclass(frozen=True)
class UserMapping:
    user_of: dict  # address -> dense user id

    def __getitem__(self, address) -> int:
        return self.user_of[address]

    def __len__(self):
        return len(self.user_of)

    @property
    def n_users(self) -> int:
        return len(set(self.user_of.values()))

    def sender(self, ev: TransactionEvent):
        """User spending the inputs of ``ev``; None for coinbase-style events."""
        if not ev.inputs:
            return None
        return self.user_of[next(iter(ev.inputs))]


def _addresses_in_order(events):
    for ev in events:
        yield from sorted(ev.inputs)
        for addr, _ in ev.outputs:
            yield addr


def merge_addresses(events) -> UserMapping:
    """Common-input heuristic: addresses co-spent in one transaction share a user.

    User ids are dense and follow the first appearance of each user's addresses.
    """
    uf = _UnionFind()
    for addr in _addresses_in_order(events):
        uf.add(addr)
    for ev in events:
        ins = sorted(ev.inputs)
        for a in ins[1:]:
            uf.union(ins[0], a)
    ids = {}
    user_of = {}
    for addr in _addresses_in_order(events):
        if addr in user_of:
            continue
        root = uf.find(addr)
        if root not in ids:
            ids[root] = len(ids)
        user_of[addr] = ids[root]
    return UserMapping(user_of)


def _participants(ev, mapping):
    users = {mapping[a] for a in ev.inputs}
    users.update(mapping[a] for a, _ in ev.outputs)
    return users


def filter_long_term_users(events, mapping, min_tx=100, min_span=600, active_before=None) -> set:
    """Users in at least ``min_tx`` transactions whose activity spans ``min_span`` days.

    Statistics use the full event list; ``active_before`` (a day index), when
    given, additionally requires the first activity to precede that day.
    """
    count = defaultdict(int)
    first = {}
    last = {}
    for ev in events:
        for u in _participants(ev, mapping):
            count[u] += 1
            first[u] = min(first.get(u, ev.day), ev.day)
            last[u] = max(last.get(u, ev.day), ev.day)
    kept = set()
    for u, n in count.items():
        if n < min_tx or last[u] - first[u] < min_span:
            continue
        if active_before is not None and not first[u] < active_before:
            continue
        kept.add(u)
    return kept


@dataclass(frozen=True)
class EvolutionMatrix:
    values: np.ndarray  # (M, T)
    row_index: tuple  # user id (node) or (sender, receiver) pair (edge)
    day_index: np.ndarray  # (T,)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise DataError("evolution matrix must be 2-d")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise DataError("evolution matrix entries must be finite and non-negative")
        if v.shape != (len(self.row_index), len(self.day_index)):
            raise DataError(
                f"shape {v.shape} does not match {len(self.row_index)} rows x {len(self.day_index)} days"
            )
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "row_index", tuple(self.row_index))
        object.__setattr__(self, "day_index", np.asarray(self.day_index, dtype=np.int64))

    @property
    def shape(self):
        return self.values.shape

    def columns(self, start, stop) -> "EvolutionMatrix":
        return EvolutionMatrix(self.values[:, start:stop], self.row_index, self.day_index[start:stop])


def _transfers(ev, mapping):
    """(sender, receiver, satoshis) for each output leaving the sender's user."""
    sender = mapping.sender(ev)
    if sender is None:
        return
    for addr, amount in ev.outputs:
        receiver = mapping[addr]
        if receiver != sender:
            yield sender, receiver, amount


def observed_pairs(events, mapping, users, day_range) -> list:
    """Sorted ordered user pairs with at least one transfer inside ``day_range``."""
    lo, hi = day_range
    pairs = set()
    for ev in events:
        if lo <= ev.day < hi:
            for s, r, _ in _transfers(ev, mapping):
                if s in users and r in users:
                    pairs.add((s, r))
    return sorted(pairs)


def encode_snapshots(events, mapping, users, mode="node", day_range=None, entities=None) -> EvolutionMatrix:
    """Encode daily snapshots into an evolution matrix.

    ``node``: entry (i, t) is the bitcoin user i received from other in-universe
    users on day t. ``edge``: entry (i, t) is the bitcoin sent along ordered
    user pair i on day t; the pair universe defaults to the pairs observed in
    ``day_range`` and transfers on other pairs are dropped. Self-transfers and
    coinbase inflows are not encoded. ``day_range`` is half-open ``(lo, hi)``.
    """
    if mode not in ("node", "edge"):
        raise ValueError(f"unknown encoding mode {mode!r}")
    users = set(users)
    if not users:
        raise ValueError("user universe is empty")
    if day_range is None:
        days = [ev.day for ev in events]
        if not days:
            raise ValueError("no events and no day range")
        day_range = (min(days), max(days) + 1)
    lo, hi = day_range
    if hi <= lo:
        raise ValueError("day range is empty")

    if entities is None:
        entities = sorted(users) if mode == "node" else observed_pairs(events, mapping, users, day_range)
    row_of = {e: i for i, e in enumerate(entities)}
    sat = defaultdict(int)
    for ev in events:
        if not lo <= ev.day < hi:
            continue
        for s, r, amount in _transfers(ev, mapping):
            if s not in users or r not in users:
                continue
            key = r if mode == "node" else (s, r)
            i = row_of.get(key)
            if i is not None:
                sat[i, ev.day - lo] += amount
    values = np.zeros((len(entities), hi - lo))
    for (i, t), amount in sat.items():
        values[i, t] = amount / SATOSHI_PER_BTC
    return EvolutionMatrix(values, tuple(entities), np.arange(lo, hi))


def daily_volume(X) -> np.ndarray:
    """Total bitcoin per day: the column sums of the evolution matrix."""
    values = X.values if isinstance(X, EvolutionMatrix) else np.asarray(X, dtype=float)
    return values.sum(axis=0)
