"""Binary sketch files and input-stream readers.

File layout (all little-endian)::

    "AQSK" | u32 version=1 | u8 key_kind | f64 epsilon | f64 delta | u64 N | u32 H
    per level: u64 C | u64 K | u64 |B| | |B| x (u64 key, u64 seq) descending
               | u64 |M| | |M| x (u64 length, u64 ghost key, u64 ghost seq) ascending
    32-byte coin-source state
"""

from __future__ import annotations

import io
import os
import struct
from typing import Iterator

import numpy as np

from .compactor import AdaptiveCompactor, Marker
from .errors import (FormatError, InvalidKeyError, InvariantViolationError, ParameterError,
                     StreamParseError, TruncationError)
from .keys import KeyKind, encode_key
from .rng import CoinSource
from .sketch import Sketch, SketchParams

MAGIC = b"AQSK"
VERSION = 1
_HEADER = struct.Struct("<4sIBddQI")
_LEVEL = struct.Struct("<QQ")
_U64 = struct.Struct("<Q")
_PAIR = np.dtype([("a", "<u8"), ("b", "<u8")])
_TRIPLE = np.dtype([("length", "<u8"), ("key", "<u8"), ("seq", "<u8")])

STREAM_FORMATS = ("text-lines", "binary-u64le", "binary-f64le")


def dumps(sketch: Sketch) -> bytes:
    p = sketch.params
    parts = [_HEADER.pack(MAGIC, VERSION, int(p.key_kind), p.epsilon, p.delta,
                          sketch.n_items, len(sketch.levels))]
    for comp in sketch.levels:
        keys, seqs = comp.sorted_arrays()
        items = np.empty(len(keys), dtype=_PAIR)
        items["a"] = keys[::-1]
        items["b"] = seqs[::-1]
        parts.append(_LEVEL.pack(comp.capacity, comp.section_len))
        parts.append(_U64.pack(len(keys)))
        parts.append(items.tobytes())
        marks = np.array([(m.length, m.ghost[0], m.ghost[1]) for m in comp.markers], dtype=_TRIPLE)
        parts.append(_U64.pack(len(marks)))
        parts.append(marks.tobytes())
    parts.append(sketch.rng.to_bytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n: int, what: str) -> memoryview:
        end = self.pos + n
        if end > len(self.data):
            raise TruncationError(f"file ends inside {what} (need {n} bytes at offset {self.pos}, "
                                  f"have {len(self.data) - self.pos})")
        out = self.data[self.pos:end]
        self.pos = end
        return out

    def unpack(self, st: struct.Struct, what: str):
        return st.unpack(self.take(st.size, what))

    def array(self, count: int, dtype, what: str) -> np.ndarray:
        if count > (len(self.data) - self.pos) // dtype.itemsize:
            raise TruncationError(f"file ends inside {what} ({count} records declared)")
        return np.frombuffer(self.take(count * dtype.itemsize, what), dtype=dtype)


def _descending(keys: np.ndarray, seqs: np.ndarray) -> bool:
    # non-strict: merging a sketch with a copy of itself legitimately repeats items
    if len(keys) < 2:
        return True
    k0, k1, s0, s1 = keys[:-1], keys[1:], seqs[:-1], seqs[1:]
    return bool(((k0 > k1) | ((k0 == k1) & (s0 >= s1))).all())


def loads(data: bytes, *, lazy_factor: int = 1, check: bool = True) -> Sketch:
    """Parse a sketch file. With ``check`` the result must pass the invariant suite."""
    r = _Reader(data)
    magic, version, kind, eps, delta, n_items, H = r.unpack(_HEADER, "header")
    if magic != MAGIC:
        raise FormatError(f"bad magic {bytes(magic)!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    try:
        params = SketchParams(eps, delta, KeyKind(kind), lazy_factor)
    except (ParameterError, ValueError) as exc:
        raise FormatError(f"bad parameters in header: {exc}") from exc
    if H < 1:
        raise FormatError("a sketch has at least one level")
    levels = []
    for h in range(H):
        C, K = r.unpack(_LEVEL, f"level {h} parameters")
        (n,) = r.unpack(_U64, f"level {h} buffer length")
        items = r.array(n, _PAIR, f"level {h} buffer")
        (m,) = r.unpack(_U64, f"level {h} marker count")
        marks = r.array(m, _TRIPLE, f"level {h} markers")
        if C == 0 or K == 0:
            raise FormatError(f"level {h}: zero capacity or section length")
        keys = items["a"].astype(np.uint64)
        seqs = items["b"].astype(np.uint64)
        if not _descending(keys, seqs):
            raise FormatError(f"level {h}: buffer is not sorted descending")
        comp = AdaptiveCompactor(C, K)
        comp._keys = keys[::-1].copy()
        comp._seqs = seqs[::-1].copy()
        comp._n = int(n)
        comp.markers = [Marker(int(a), (int(b), int(c))) for a, b, c in marks.tolist()]
        if any(x.ghost > y.ghost for x, y in zip(comp.markers, comp.markers[1:])):
            raise FormatError(f"level {h}: markers are not sorted by ghost")
        levels.append(comp)
    state = r.take(CoinSource.STATE_SIZE, "generator state")
    try:
        rng = CoinSource.from_bytes(state)
    except ValueError as exc:
        raise FormatError(f"bad generator state: {exc}") from None
    if r.pos != len(r.data):
        raise FormatError(f"{len(r.data) - r.pos} trailing bytes after the sketch")
    sketch = Sketch(params, rng=rng)
    sketch.levels = levels
    sketch.n_items = n_items
    if check:
        from .diagnostics import check_invariants
        report = check_invariants(sketch)
        if not report.ok:
            raise InvariantViolationError(report)
    return sketch


def save(sketch: Sketch, sink) -> None:
    """Write to a path or a binary file object."""
    data = dumps(sketch)
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "wb") as fh:
            fh.write(data)
    else:
        sink.write(data)


def load(source, **kwargs) -> Sketch:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            data = fh.read()
    else:
        data = source.read()
    return loads(data, **kwargs)


def _text_values(lines, kind: KeyKind) -> Iterator:
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            if kind == KeyKind.F64:
                value = float(line)
            else:
                value = int(line, 10)
            encode_key(value, kind)
        except (ValueError, InvalidKeyError) as exc:
            raise StreamParseError(f"cannot parse {line!r}: {exc}", line=lineno) from None
        yield value


def read_stream(source, fmt: str = "text-lines", kind=KeyKind.U64) -> Iterator:
    """Yield keys from a path, bytes/str buffer or file object, in file order."""
    kind = KeyKind.parse(kind)
    if fmt not in STREAM_FORMATS:
        raise ValueError(f"unknown stream format {fmt!r}; expected one of {STREAM_FORMATS}")
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            yield from read_stream(fh, fmt, kind)
        return
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    if fmt == "text-lines":
        lines = (b.decode("utf-8", errors="replace") if isinstance(b, bytes) else b for b in source)
        yield from _text_values(lines, kind)
        return
    data = source.read()
    if len(data) % 8:
        raise StreamParseError(f"binary input length {len(data)} is not a multiple of 8",
                               offset=len(data) - len(data) % 8)
    if fmt == "binary-u64le":
        yield from np.frombuffer(data, dtype="<u8").tolist()
        return
    values = np.frombuffer(data, dtype="<f8")
    bad = np.flatnonzero(np.isnan(values))
    if len(bad):
        raise StreamParseError("NaN value in f64 input", offset=int(bad[0]) * 8)
    yield from values.tolist()


def read_stream_array(source, fmt: str = "text-lines", kind=KeyKind.U64) -> np.ndarray:
    """Whole stream as a numpy array of raw keys."""
    kind = KeyKind.parse(kind)
    dtype = np.float64 if kind == KeyKind.F64 else np.uint64
    return np.fromiter(read_stream(source, fmt, kind), dtype=dtype)
