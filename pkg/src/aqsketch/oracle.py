"""Exact rank and quantile oracle over the full input multiset."""

from __future__ import annotations

import math

import numpy as np

from .errors import EmptySketchError
from .keys import KeyKind, decode_keys, encode_keys


class ExactOracle:
    """Sorted multiset of raw keys. Ranks count keys ``<= y``; no tie-breakers.

    Keys are stored through the order-preserving u64 encoding, so u64 and f64
    streams share one code path.
    """

    def __init__(self, key_kind=KeyKind.U64):
        self.key_kind = KeyKind.parse(key_kind)
        self._sorted = np.empty(0, dtype=np.uint64)
        self._pending: list[np.ndarray] = []

    @classmethod
    def from_keys(cls, keys, key_kind=KeyKind.U64) -> "ExactOracle":
        out = cls(key_kind)
        out.extend(keys)
        return out

    @property
    def codes(self) -> np.ndarray:
        if self._pending:
            self._sorted = np.sort(np.concatenate([self._sorted] + self._pending))
            self._pending = []
        return self._sorted

    @property
    def count(self) -> int:
        return len(self._sorted) + sum(len(p) for p in self._pending)

    def __len__(self) -> int:
        return self.count

    def insert(self, key) -> None:
        self.extend([key])

    def extend(self, keys) -> None:
        codes = encode_keys(keys, self.key_kind)
        if len(codes):
            self._pending.append(codes)

    def merge(self, other: "ExactOracle") -> "ExactOracle":
        if other.key_kind != self.key_kind:
            raise ValueError("cannot merge oracles over different key kinds")
        if other.count:
            self._pending.append(other.codes)
        return self

    def rank(self, y) -> int:
        if isinstance(y, float) and math.isinf(y):
            return self.count if y > 0 else 0
        return int(self.ranks([y])[0])

    def ranks(self, ys) -> np.ndarray:
        return np.searchsorted(self.codes, encode_keys(ys, self.key_kind), side="right")

    def quantile(self, phi: float):
        """The ``ceil(phi*N)``-th smallest key (the smallest key for ``phi = 0``)."""
        n = self.count
        if not n:
            raise EmptySketchError("quantile query on an empty oracle")
        if not 0.0 <= phi <= 1.0:
            raise ValueError(f"phi must lie in [0, 1], got {phi!r}")
        idx = max(1, math.ceil(phi * n)) - 1
        return decode_keys(self.codes[idx:idx + 1], self.key_kind)[0].item()

    def key_at_rank(self, r: int):
        """The r-th smallest key (1-based)."""
        return decode_keys(self.codes[r - 1:r], self.key_kind)[0].item()


def measure_error(oracle: ExactOracle, snapshot, queries) -> list[tuple]:
    """Per query ``(rank, estrank, err, rel_err)`` with ``err = estrank - rank``.

    ``rel_err`` is ``err / rank``; for rank 0 it is 0 when the estimate is exact
    and ``inf`` otherwise.
    """
    if not len(queries):
        return []
    true = oracle.ranks(queries)
    est = snapshot.ranks(queries)
    out = []
    for r, e in zip(true.tolist(), est.tolist()):
        err = e - r
        if r:
            rel = err / r
        else:
            rel = 0.0 if err == 0 else math.inf
        out.append((r, e, err, rel))
    return out
