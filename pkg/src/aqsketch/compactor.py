"""Adaptive compactor: buffer, section length, capacity and marker stack.

Items are pairs ``(key, seq)`` of unsigned 64-bit integers compared
lexicographically. Physically the buffer is kept as two parallel ``uint64``
arrays sorted in *ascending* order plus a list of pending (unsorted)
insertions; the descending index ``B[i]`` used throughout the algorithm is
``asc[len - 1 - i]``. Arrays are never written in place, so slices and
concatenations can share memory freely.
"""

from __future__ import annotations

import bisect
import heapq
import math
import os
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ContractError, IncompatibleParametersError, MarkingError, ParameterError

DEBUG = os.environ.get("AQSKETCH_DEBUG", "") not in ("", "0")

STANDARD = "standard"
SPECIAL = "special"
NAIVE = "naive"

_EMPTY = np.empty(0, dtype=np.uint64)

Item = tuple  # (key, seq); plain tuples compare lexicographically


class Marker(NamedTuple):
    length: int
    ghost: tuple  # (key, seq) of the smallest item removed by the compaction


def _ghost(marker: Marker):
    return marker.ghost


def next_pow2(x: float) -> int:
    """Smallest power of two that is >= x (and >= 1)."""
    p = 1
    while p < x:
        p *= 2
    return p


def validate_params(epsilon: float, delta: float) -> None:
    if not (isinstance(epsilon, (int, float)) and 0.0 < epsilon < 1.0):
        raise ParameterError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    if not (isinstance(delta, (int, float)) and 0.0 < delta <= 0.125):
        raise ParameterError(f"delta must lie in (0, 1/8], got {delta!r}")


def initial_params(epsilon: float, delta: float) -> tuple[int, int]:
    """Initial ``(K0, C0)`` for every compactor of a sketch."""
    validate_params(epsilon, delta)
    log_inv_delta = math.log(1.0 / delta)
    k0 = next_pow2(max(math.sqrt(log_inv_delta) / epsilon, 4.0 * log_inv_delta))
    return k0, 8 * k0


@dataclass
class CompactionOutcome:
    promoted_keys: np.ndarray
    promoted_seqs: np.ndarray
    removed_count: int
    kind: str
    params_changed: bool
    size: int  # T as returned by the size computation, before parity adjustment

    @property
    def promoted(self) -> list:
        return list(zip(self.promoted_keys.tolist(), self.promoted_seqs.tolist()))


class AdaptiveCompactor:
    __slots__ = ("capacity", "section_len", "markers", "compaction_count", "depth",
                 "_keys", "_seqs", "_pend", "_pk", "_ps", "_n")

    def __init__(self, capacity: int, section_len: int):
        if capacity <= 0 or section_len <= 0:
            raise ParameterError("capacity and section length must be positive")
        self.capacity = int(capacity)
        self.section_len = int(section_len)
        self.markers: list[Marker] = []  # ascending by ghost; top of stack is markers[-1]
        self.compaction_count = 0
        self.depth = 0  # merge-tree compaction depth
        self._keys = _EMPTY
        self._seqs = _EMPTY
        self._pend: list[tuple[np.ndarray, np.ndarray]] = []
        self._pk: list[int] = []
        self._ps: list[int] = []
        self._n = 0

    def __len__(self) -> int:
        return self._n

    def __repr__(self):
        return (f"AdaptiveCompactor(C={self.capacity}, K={self.section_len}, "
                f"|B|={self._n}, |M|={len(self.markers)}, P={self.compaction_count})")

    @property
    def is_full(self) -> bool:
        return self._n >= self.capacity

    # -- buffer ---------------------------------------------------------------

    def insert(self, key: int, seq: int) -> None:
        self._pk.append(key)
        self._ps.append(seq)
        self._n += 1

    def insert_batch(self, keys, seqs) -> None:
        keys = np.asarray(keys, dtype=np.uint64)
        seqs = np.asarray(seqs, dtype=np.uint64)
        if keys.shape != seqs.shape:
            raise ValueError("keys and seqs must have the same length")
        if len(keys):
            self._pend.append((keys, seqs))
            self._n += len(keys)

    def sorted_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Buffer as ascending ``(keys, seqs)`` arrays, sorting pending items in."""
        if self._pend or self._pk:
            pend = self._pend
            if self._pk:
                pend.append((np.array(self._pk, dtype=np.uint64), np.array(self._ps, dtype=np.uint64)))
            if len(pend) == 1:
                keys = np.concatenate((self._keys, pend[0][0]))
                seqs = np.concatenate((self._seqs, pend[0][1]))
            else:
                keys = np.concatenate([self._keys] + [k for k, _ in pend])
                seqs = np.concatenate([self._seqs] + [s for _, s in pend])
            order = keys.argsort(kind="stable")
            sorted_keys = keys[order]
            if (sorted_keys[1:] == sorted_keys[:-1]).any():
                # equal keys: order ties by seq
                order = np.lexsort((seqs, keys))
                sorted_keys = keys[order]
            keys = sorted_keys
            seqs = seqs[order]
            self._keys = keys
            self._seqs = seqs
            self._pend = []
            self._pk = []
            self._ps = []
        return self._keys, self._seqs

    def items(self) -> list:
        """Buffer as a descending list of ``(key, seq)`` tuples."""
        keys, seqs = self.sorted_arrays()
        return list(zip(keys[::-1].tolist(), seqs[::-1].tolist()))

    def item_at(self, i: int) -> tuple:
        """Descending-order item ``B[i]`` (buffer must already be sorted)."""
        j = self._n - 1 - i
        return (int(self._keys[j]), int(self._seqs[j]))

    def count_less(self, item) -> int:
        """Number of buffered items strictly smaller than ``item``."""
        keys, seqs = self.sorted_arrays()
        gk = np.uint64(item[0])
        lo = int(np.searchsorted(keys, gk, side="left"))
        hi = int(np.searchsorted(keys, gk, side="right"))
        if hi > lo:
            lo += int(np.searchsorted(seqs[lo:hi], np.uint64(item[1]), side="left"))
        return lo

    def copy(self) -> "AdaptiveCompactor":
        out = AdaptiveCompactor(self.capacity, self.section_len)
        keys, seqs = self.sorted_arrays()
        out._keys = keys
        out._seqs = seqs
        out._n = self._n
        out.markers = list(self.markers)
        out.compaction_count = self.compaction_count
        out.depth = self.depth
        return out

    def marker_total(self) -> int:
        return sum(m.length for m in self.markers)

    # -- compaction -------------------------------------------------------------

    def _plan(self) -> tuple[int, str, bool]:
        """Size of the next compaction, with the marker/parameter side effects."""
        n = self._n
        C = self.capacity
        K = self.section_len
        if n < C:
            raise ContractError(f"compaction requested on a non-full buffer ({n} < {C})")
        keys, seqs = self.sorted_arrays()
        if K == 1:
            return n - C // 2, NAIVE, False
        M = self.markers
        last = n - 1
        half = n - C // 2
        T = n % K
        while True:
            if M:
                j = last - T
                unmarked = (int(keys[j]), int(seqs[j])) > M[-1].ghost
            else:
                unmarked = True
            if unmarked:
                if T < n - C + K:
                    T += K
                else:
                    j = last - (T - 1)
                    M.append(Marker(K, (int(keys[j]), int(seqs[j]))))
                    return T, STANDARD, False
            else:
                T += M.pop().length
                overlap = T - half
                if overlap >= 0:
                    T -= overlap
                    j = last - (T - 1)
                    bisect.insort(M, Marker(K + overlap, (int(keys[j]), int(seqs[j]))), key=_ghost)
                    free = C // 2 - sum(m.length for m in M)
                    if free < 2 * K:
                        if DEBUG and free != K:
                            raise ContractError(f"expected exactly K={K} unmarked items, got {free}")
                        self.section_len = K // 2
                        self.capacity = 2 * C
                        return T, SPECIAL, True
                    return T, SPECIAL, False

    def compaction_size(self) -> int:
        """Run the size computation (mutating markers and parameters) and return T."""
        return self._plan()[0]

    def compact(self, rng) -> CompactionOutcome:
        """Remove the largest T items, promoting a random-parity half."""
        T, kind, changed = self._plan()
        keys, seqs = self._keys, self._seqs
        n = self._n
        removed = T
        hi = n
        if T % 2:
            removed -= 1
            hi = n - 1  # the largest item sits out this compaction
        lo = hi - removed
        run_k = keys[lo:hi][::-1]
        run_s = seqs[lo:hi][::-1]
        parity = rng.coin()
        prom_k = run_k[parity::2]
        prom_s = run_s[parity::2]
        if hi == n:
            self._keys = keys[:lo]
            self._seqs = seqs[:lo]
        else:
            self._keys = np.concatenate((keys[:lo], keys[hi:]))
            self._seqs = np.concatenate((seqs[:lo], seqs[hi:]))
        self._n = n - removed
        self.compaction_count += 1
        self.depth += 1
        return CompactionOutcome(prom_k, prom_s, removed, kind, changed, T)


def merge_compactors(a: AdaptiveCompactor, b: AdaptiveCompactor) -> AdaptiveCompactor:
    """Union of buffers and marker stacks; parameters follow the larger capacity."""
    if a.capacity * a.section_len != b.capacity * b.section_len:
        raise IncompatibleParametersError(
            f"K*C differs: {a.section_len}*{a.capacity} vs {b.section_len}*{b.capacity}")
    big = a if a.capacity >= b.capacity else b
    out = AdaptiveCompactor(big.capacity, big.section_len)
    ak, as_ = a.sorted_arrays()
    bk, bs = b.sorted_arrays()
    out._keys = ak
    out._seqs = as_
    if len(bk):
        out._pend.append((bk, bs))
    out._n = a._n + b._n
    if not b.markers:
        out.markers = list(a.markers)
    elif not a.markers:
        out.markers = list(b.markers)
    else:
        out.markers = list(heapq.merge(a.markers, b.markers, key=_ghost))
    out.compaction_count = a.compaction_count + b.compaction_count
    out.depth = max(a.depth, b.depth)
    return out


@dataclass
class Marking:
    """Canonical marking: each marker owns a descending index range ``[start, stop)``."""

    size: int
    section_len: int
    capacity: int
    ranges: list  # (Marker, start, stop), largest marker first

    def marked_mask(self) -> np.ndarray:
        mask = np.zeros(self.size, dtype=bool)
        for _, start, stop in self.ranges:
            mask[start:stop] = True
        return mask

    def section_index(self, pos: int) -> int:
        """Section index of descending position ``pos``."""
        K = self.section_len
        return self.capacity // K - 1 - (self.size - 1 - pos) // K

    def marked_sections(self) -> set:
        K = self.section_len
        out = set()
        for _, start, stop in self.ranges:
            for pos in range(start, stop, K):
                out.add(self.section_index(pos))
        return out

    @property
    def head_unmarked(self) -> bool:
        if not self.ranges:
            return True
        return self.ranges[-1][2] <= self.size - 2 * self.section_len


def canonical_marking(compactor: AdaptiveCompactor, section_len: int | None = None,
                      capacity: int | None = None) -> Marking:
    """Greedy marking, largest marker first, onto aligned unmarked sections.

    ``section_len``/``capacity`` override the compactor's current parameters;
    diagnostics use this to look at a state just before a parameter change.
    """
    n = len(compactor)
    K = section_len or compactor.section_len
    r = n % K
    ptr = r
    ranges = []
    for m in reversed(compactor.markers):
        first_smaller = n - compactor.count_less(m.ghost)
        if first_smaller <= r:
            s = r
        else:
            s = r + -(-(first_smaller - r) // K) * K
        if ptr > s:
            s = r + -(-(ptr - r) // K) * K
        stop = s + m.length
        if stop > n:
            raise MarkingError(f"marker {m} does not fit: needs [{s}, {stop}) in a buffer of {n}")
        ranges.append((m, s, stop))
        ptr = stop
    return Marking(n, K, capacity or compactor.capacity, ranges)
