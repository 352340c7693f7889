"""Level hierarchy of adaptive compactors with streaming updates, merge and queries."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .compactor import AdaptiveCompactor, initial_params, merge_compactors, validate_params
from .errors import EmptySketchError, IncompatibleParametersError, ParameterError
from .keys import KeyKind, decode_key, decode_keys, encode_key, encode_keys
from .rng import MASK64, CoinSource

_cached_initial_params = functools.lru_cache(maxsize=None)(initial_params)


@dataclass(frozen=True)
class SketchParams:
    epsilon: float
    delta: float
    key_kind: KeyKind = KeyKind.U64
    lazy_factor: int = 1

    def __post_init__(self):
        validate_params(self.epsilon, self.delta)
        object.__setattr__(self, "key_kind", KeyKind.parse(self.key_kind))
        if self.lazy_factor not in (1, 2):
            raise ParameterError(f"lazy_factor must be 1 or 2, got {self.lazy_factor!r}")

    @property
    def k0(self) -> int:
        return _cached_initial_params(self.epsilon, self.delta)[0]

    @property
    def c0(self) -> int:
        return _cached_initial_params(self.epsilon, self.delta)[1]

    def compatible(self, other: "SketchParams") -> bool:
        return (self.epsilon, self.delta, self.key_kind) == (other.epsilon, other.delta, other.key_kind)


@dataclass
class QuerySnapshot:
    """All buffered items with weights ``2**level``, sorted ascending, with prefix sums."""

    keys: np.ndarray  # encoded keys, ascending
    seqs: np.ndarray
    weights: np.ndarray
    prefix: np.ndarray
    key_kind: KeyKind = KeyKind.U64

    @property
    def total_weight(self) -> int:
        return int(self.prefix[-1]) if len(self.prefix) else 0

    def __len__(self):
        return len(self.keys)

    @property
    def entries(self) -> list:
        values = decode_keys(self.keys, self.key_kind).tolist()
        return list(zip(values, self.weights.tolist()))

    def _encode_query(self, y):
        if isinstance(y, float) and math.isinf(y):
            return None if y > 0 else -1
        return encode_key(y, self.key_kind)

    def rank(self, y) -> int:
        """Estimated number of inserted items <= y."""
        code = self._encode_query(y)
        if code is None:
            return self.total_weight
        if code == -1:
            return 0
        idx = int(np.searchsorted(self.keys, np.uint64(code), side="right"))
        return int(self.prefix[idx - 1]) if idx else 0

    def ranks(self, ys) -> np.ndarray:
        codes = encode_keys(ys, self.key_kind)
        idx = np.searchsorted(self.keys, codes, side="right")
        padded = np.concatenate(([0], self.prefix))
        return padded[idx]

    def quantile(self, phi: float):
        """Smallest entry whose prefix weight reaches ceil(phi * total_weight)."""
        if not len(self.keys):
            raise EmptySketchError("quantile query on an empty sketch")
        if not 0.0 <= phi <= 1.0:
            raise ValueError(f"phi must lie in [0, 1], got {phi!r}")
        target = math.ceil(phi * self.total_weight)
        idx = int(np.searchsorted(self.prefix, target, side="left"))
        idx = min(idx, len(self.keys) - 1)
        return decode_key(int(self.keys[idx]), self.key_kind)


class Sketch:
    """Mergeable relative-error quantile sketch.

    ``observer`` may be set to an object with the hook methods used by
    :class:`aqsketch.diagnostics.EventTrace`; it is called around every insert,
    compaction and compactor merge.
    """

    def __init__(self, params: SketchParams, seed: int = 0, *, rng: CoinSource | None = None):
        self.params = params
        self.levels: list[AdaptiveCompactor] = [AdaptiveCompactor(params.c0, params.k0)]
        self.n_items = 0
        self.rng = rng if rng is not None else CoinSource.from_seed(seed)
        self.observer = None

    @classmethod
    def create(cls, epsilon: float, delta: float, seed: int = 0, *,
               key_kind=KeyKind.U64, lazy_factor: int = 1) -> "Sketch":
        return cls(SketchParams(epsilon, delta, KeyKind.parse(key_kind), lazy_factor), seed)

    def __repr__(self):
        return (f"Sketch(eps={self.params.epsilon}, delta={self.params.delta}, "
                f"N={self.n_items}, H={self.num_levels})")

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    def _next_seq(self) -> int:
        return (self.rng.seq_base + self.n_items) & MASK64

    # -- internal level operations (all observer hooks live here) ---------------

    def _insert_one(self, h: int, key: int, seq: int) -> None:
        comp = self.levels[h]
        obs = self.observer
        if obs is None:
            comp.insert(key, seq)
        else:
            token = obs.before_insert(self, h, comp)
            comp.insert(key, seq)
            obs.after_insert(self, h, comp, token)

    def _insert_batch(self, h: int, keys: np.ndarray, seqs: np.ndarray) -> None:
        comp = self.levels[h]
        obs = self.observer
        if obs is None:
            comp.insert_batch(keys, seqs)
        else:
            token = obs.before_insert(self, h, comp)
            comp.insert_batch(keys, seqs)
            obs.after_insert(self, h, comp, token)

    def _compact_level(self, h: int) -> None:
        comp = self.levels[h]
        obs = self.observer
        token = obs.before_compact(self, h, comp) if obs is not None else None
        outcome = comp.compact(self.rng)
        if obs is not None:
            obs.after_compact(self, h, comp, token, outcome)
        if h + 1 == len(self.levels):
            self.levels.append(AdaptiveCompactor(self.params.c0, self.params.k0))
        self._insert_batch(h + 1, outcome.promoted_keys, outcome.promoted_seqs)

    def _settle(self, start: int, full_pass: bool) -> None:
        lazy = self.params.lazy_factor
        h = start
        while h < len(self.levels):
            comp = self.levels[h]
            if len(comp) >= lazy * comp.capacity:
                self._compact_level(h)
            elif not full_pass:
                break
            h += 1

    # -- public API -------------------------------------------------------------

    def update(self, key) -> None:
        code = encode_key(key, self.params.key_kind)
        seq = self._next_seq()
        self.n_items += 1
        self._insert_one(0, code, seq)
        comp = self.levels[0]
        if len(comp) >= self.params.lazy_factor * comp.capacity:
            self._settle(0, full_pass=False)

    def extend(self, keys) -> None:
        """Stream many keys; identical in effect to calling :meth:`update` on each."""
        codes = encode_keys(keys, self.params.key_kind)
        m = len(codes)
        if not m:
            return
        seqs = np.arange(m, dtype=np.uint64) + np.uint64(self._next_seq())
        lazy = self.params.lazy_factor
        pos = 0
        while pos < m:
            comp = self.levels[0]
            room = lazy * comp.capacity - len(comp)
            take = min(max(room, 1), m - pos)
            self._insert_batch(0, codes[pos:pos + take], seqs[pos:pos + take])
            self.n_items += take
            pos += take
            if len(comp) >= lazy * comp.capacity:
                self._settle(0, full_pass=False)

    def merge(self, other: "Sketch") -> "Sketch":
        """Merge ``other`` into this sketch in place; ``other`` is left unchanged."""
        if not self.params.compatible(other.params):
            raise IncompatibleParametersError(
                f"cannot merge sketches with parameters {self.params} and {other.params}")
        obs = self.observer
        ha, hb = len(self.levels), len(other.levels)
        levels = []
        for h in range(max(ha, hb)):
            if h < ha and h < hb:
                a, b = self.levels[h], other.levels[h]
                token = obs.before_merge(self, h, a, b) if obs is not None else None
                merged = merge_compactors(a, b)
                if obs is not None:
                    obs.after_merge(self, h, merged, token)
                levels.append(merged)
            elif h < ha:
                levels.append(self.levels[h])
            else:
                levels.append(other.levels[h].copy())
        self.levels = levels
        self.n_items += other.n_items
        self._settle(0, full_pass=True)
        return self

    def copy(self) -> "Sketch":
        out = Sketch(self.params, rng=self.rng.copy())
        out.levels = [c.copy() for c in self.levels]
        out.n_items = self.n_items
        return out

    def snapshot(self) -> QuerySnapshot:
        ks, ss, ws = [], [], []
        for h, comp in enumerate(self.levels):
            k, s = comp.sorted_arrays()
            ks.append(k)
            ss.append(s)
            ws.append(np.full(len(k), 1 << h, dtype=np.int64))
        keys = np.concatenate(ks) if ks else np.empty(0, np.uint64)
        seqs = np.concatenate(ss) if ss else np.empty(0, np.uint64)
        weights = np.concatenate(ws) if ws else np.empty(0, np.int64)
        order = np.lexsort((seqs, keys))
        weights = weights[order]
        return QuerySnapshot(keys[order], seqs[order], weights, np.cumsum(weights),
                             self.params.key_kind)

    def rank(self, y) -> int:
        return self.snapshot().rank(y)

    def quantile(self, phi: float):
        return self.snapshot().quantile(phi)

    def memory_footprint(self) -> tuple[int, int, int]:
        """``(stored_items, stored_markers, c_max)`` over all levels."""
        items = sum(len(c) for c in self.levels)
        markers = sum(len(c.markers) for c in self.levels)
        return items, markers, max(c.capacity for c in self.levels)

    def level_stats(self) -> list[dict]:
        return [dict(level=h, size=len(c), capacity=c.capacity, section_len=c.section_len,
                     markers=len(c.markers), compactions=c.compaction_count, depth=c.depth)
                for h, c in enumerate(self.levels)]

    def to_bytes(self) -> bytes:
        from .persistence import dumps
        return dumps(self)

    @classmethod
    def from_bytes(cls, data: bytes, **kwargs) -> "Sketch":
        from .persistence import loads
        return loads(data, **kwargs)


def new_sketch(params: SketchParams, seed: int = 0) -> Sketch:
    return Sketch(params, seed)


def merge_sketches(a: Sketch, b: Sketch) -> Sketch:
    """Merged copy; neither operand is modified. The result continues ``a``'s coins."""
    return a.copy().merge(b)


def level_bound(epsilon: float, n: int) -> float:
    """Upper bound log2(eps * N) + 2 on the number of levels."""
    return math.log2(epsilon * n) + 2
