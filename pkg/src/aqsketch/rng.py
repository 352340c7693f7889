"""Coin source backed by numpy's PCG64 bit generator.

The serialized state is the generator's 128-bit state and 128-bit increment
(32 bytes), so a loaded sketch replays exactly the coins the saved one would.
"""

from __future__ import annotations

import struct

import numpy as np

MASK64 = (1 << 64) - 1
MASK128 = (1 << 128) - 1


def derive_seed(seed: int, index: int) -> int:
    """Independent substream seed for ``(seed, index)``."""
    seq = np.random.SeedSequence(seed & MASK64, spawn_key=(index & MASK64,))
    return int(seq.generate_state(1, np.uint64)[0])


class CoinSource:
    __slots__ = ("_bg", "_seq_base")

    STATE_SIZE = 32

    def __init__(self, bit_generator: np.random.PCG64):
        self._bg = bit_generator
        self._seq_base = (bit_generator.state["state"]["inc"] >> 1) & MASK64

    @classmethod
    def from_seed(cls, seed: int) -> "CoinSource":
        return cls(np.random.PCG64(seed & MASK64))

    @classmethod
    def from_state(cls, state: int, inc: int) -> "CoinSource":
        if not inc & 1:
            raise ValueError("generator increment must be odd")
        bg = np.random.PCG64(0)
        bg.state = {"bit_generator": "PCG64", "state": {"state": state & MASK128, "inc": inc & MASK128},
                    "has_uint32": 0, "uinteger": 0}
        return cls(bg)

    @property
    def state(self) -> tuple[int, int]:
        s = self._bg.state["state"]
        return s["state"], s["inc"]

    def bits64(self) -> int:
        return int(self._bg.random_raw())

    def coin(self) -> int:
        return int(self._bg.random_raw()) >> 63

    @property
    def seq_base(self) -> int:
        """Offset for item sequence numbers owned by this generator (fixed for its lifetime)."""
        return self._seq_base

    def copy(self) -> "CoinSource":
        return CoinSource.from_state(*self.state)

    def to_bytes(self) -> bytes:
        state, inc = self.state
        return struct.pack("<4Q", state & MASK64, state >> 64, inc & MASK64, inc >> 64)

    @classmethod
    def from_bytes(cls, data: bytes) -> "CoinSource":
        s0, s1, i0, i1 = struct.unpack("<4Q", data)
        return cls.from_state((s1 << 64) | s0, (i1 << 64) | i0)

    def __eq__(self, other):
        if not isinstance(other, CoinSource):
            return NotImplemented
        return self.state == other.state

    def __repr__(self):
        state, inc = self.state
        return f"CoinSource(state={state:#x}, inc={inc:#x})"
