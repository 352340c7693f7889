"""Key kinds and the order-preserving map from doubles to unsigned integers.

Every item is stored as a pair ``(key, seq)`` of unsigned 64-bit integers.
Double keys are mapped through the usual sign-flip bijection so that
unsigned comparison of the encoded value agrees with numeric comparison.
"""

from __future__ import annotations

import enum
import struct

import numpy as np

from .errors import InvalidKeyError

U64_MAX = (1 << 64) - 1
_SIGN = 1 << 63


class KeyKind(enum.IntEnum):
    U64 = 0
    F64 = 1

    @classmethod
    def parse(cls, value) -> "KeyKind":
        if isinstance(value, KeyKind):
            return value
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                raise ValueError(f"unknown key kind {value!r}") from None
        return cls(value)


def encode_f64(x: float) -> int:
    if x != x:
        raise InvalidKeyError("NaN keys are not allowed")
    if x == 0.0:
        x = 0.0  # fold -0.0 onto +0.0
    (bits,) = struct.unpack("<Q", struct.pack("<d", x))
    return (~bits & U64_MAX) if bits & _SIGN else bits | _SIGN


def decode_f64(code: int) -> float:
    bits = code ^ _SIGN if code & _SIGN else ~code & U64_MAX
    return struct.unpack("<d", struct.pack("<Q", bits))[0]


def encode_key(value, kind: KeyKind) -> int:
    """Encode one user key as an unsigned 64-bit integer."""
    if kind == KeyKind.F64:
        try:
            return encode_f64(float(value))
        except (TypeError, ValueError) as exc:
            raise InvalidKeyError(f"not a double: {value!r}") from exc
    if isinstance(value, (float, np.floating)):
        if not float(value).is_integer():
            raise InvalidKeyError(f"not an unsigned integer: {value!r}")
    try:
        key = int(value)
    except (TypeError, ValueError) as exc:
        raise InvalidKeyError(f"not an unsigned integer: {value!r}") from exc
    if not 0 <= key <= U64_MAX:
        raise InvalidKeyError(f"key {key} outside the unsigned 64-bit range")
    return key


def decode_key(code: int, kind: KeyKind):
    return decode_f64(code) if kind == KeyKind.F64 else int(code)


def encode_keys(values, kind: KeyKind) -> np.ndarray:
    """Vectorised :func:`encode_key`; returns a fresh ``uint64`` array."""
    if kind == KeyKind.F64:
        arr = np.asarray(values, dtype=np.float64)
        if np.isnan(arr).any():
            raise InvalidKeyError("NaN keys are not allowed")
        arr = np.where(arr == 0.0, 0.0, arr)
        bits = arr.view(np.uint64)
        neg = (bits >> np.uint64(63)).astype(bool)
        return np.where(neg, ~bits, bits | np.uint64(_SIGN))
    arr = np.asarray(values)
    if not isinstance(values, np.ndarray) and arr.dtype.kind in "fO":
        # numpy falls back to float64 for Python ints beyond int64; keep exact values
        exact = np.asarray(values, dtype=object).ravel().tolist()
        return np.fromiter((encode_key(v, kind) for v in exact), dtype=np.uint64,
                           count=arr.size)
    if arr.dtype == np.uint64:
        return arr.astype(np.uint64, copy=True).ravel()
    if arr.dtype.kind == "i":
        if arr.size and arr.min() < 0:
            raise InvalidKeyError("negative key for the u64 key kind")
        return arr.astype(np.uint64).ravel()
    if arr.dtype.kind == "f":
        if arr.size and (np.isnan(arr).any() or (arr < 0).any() or (arr >= 2.0 ** 64).any()
                         or (arr != np.floor(arr)).any()):
            raise InvalidKeyError("non-integral key for the u64 key kind")
        return arr.astype(np.uint64).ravel()
    return np.fromiter((encode_key(v, kind) for v in arr.ravel()), dtype=np.uint64)


def decode_keys(codes: np.ndarray, kind: KeyKind) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.uint64)
    if kind != KeyKind.F64:
        return codes.copy()
    neg = codes < np.uint64(_SIGN)
    bits = np.where(neg, ~codes, codes ^ np.uint64(_SIGN))
    return bits.view(np.float64)
