"""Shared builders for tests."""

import numpy as np

from aqsketch.compactor import AdaptiveCompactor, Marker

# criterion -> detail lines, printed by conftest at the end of the run
ACCEPTANCE: dict[str, list[str]] = {}


def record_acceptance(criterion: str, detail: str) -> None:
    ACCEPTANCE.setdefault(criterion, []).append(detail)


class FixedCoin:
    """Coin source stub that always returns the same parity."""

    def __init__(self, bit):
        self.bit = bit

    def coin(self):
        return self.bit


def compactor_with(descending_keys, capacity, section_len, ghosts=(), lengths=None):
    """Compactor whose buffer holds ``descending_keys`` (seq = position) and the given markers."""
    comp = AdaptiveCompactor(capacity, section_len)
    keys = list(descending_keys)
    comp.insert_batch(np.array(keys, dtype=np.uint64), np.arange(len(keys), dtype=np.uint64))
    lengths = lengths or [section_len] * len(ghosts)
    comp.markers = sorted((Marker(l, (g, 0)) for l, g in zip(lengths, ghosts)), key=lambda m: m.ghost)
    return comp


def fill_random(comp, rng, count, start_seq=0, high=1 << 20):
    keys = rng.integers(0, high, count, dtype=np.uint64)
    comp.insert_batch(keys, np.arange(start_seq, start_seq + count, dtype=np.uint64))
    return start_seq + count


def drive(comp, rng, coins, rounds, high=1 << 20, seq=0):
    """Alternate random refills and compactions on one compactor; yields outcomes."""
    for _ in range(rounds):
        need = comp.capacity - len(comp)
        seq = fill_random(comp, rng, max(need, 0) + int(rng.integers(0, comp.section_len + 1)), seq, high)
        yield comp.compact(coins)
