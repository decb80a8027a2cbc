"""Fixed-width binary image signatures.

A signature has ``n`` blocks of ``m`` bits, one block per palette color.
An image signature sets at most one bit per block: bit ``ceil(h * m)`` for a
color covering fraction ``h`` of the image. Internal S-tree nodes store the
bitwise OR of their children, so their blocks may hold several bits.

Bits live in a single Python int. Block ``j`` (0-based) occupies int bits
``j*m .. j*m + m - 1`` and bit position ``i`` (1-based, as in the weight
formula) of that block is int bit ``j*m + i - 1``. Serialized little-endian,
this puts position 1 of block 0 in the least significant bit of byte 0.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, MalformedSignature

DEFAULT_BITS_PER_BLOCK = 8
MAX_BITS_PER_BLOCK = 64

_HEADER = struct.Struct("<HH")

# slack for h * m landing a hair above an integer, e.g. 0.3 * 10
_CEIL_SLACK = 1e-9


@dataclass(frozen=True)
class Signature:
    n: int
    m: int
    bits: int = 0

    def __post_init__(self):
        if not 1 <= self.n <= 0xFFFF:
            raise ValueError(f"block count must be in 1..65535, got {self.n}")
        if not 1 <= self.m <= MAX_BITS_PER_BLOCK:
            raise ValueError(f"bits per block must be in 1..{MAX_BITS_PER_BLOCK}, got {self.m}")
        if self.bits < 0 or self.bits.bit_length() > self.n * self.m:
            raise MalformedSignature("bit pattern wider than n*m bits")

    @classmethod
    def from_positions(cls, positions: Sequence[int], m: int) -> "Signature":
        """Build an image signature from one set-bit position per block (0 = empty)."""
        bits = 0
        for j, pos in enumerate(positions):
            if not 0 <= pos <= m:
                raise MalformedSignature(f"block {j}: position {pos} outside 0..{m}")
            if pos:
                bits |= 1 << (j * m + pos - 1)
        return cls(len(positions), m, bits)

    @property
    def nbytes(self) -> int:
        return signature_nbytes(self.n, self.m)

    def block(self, j: int) -> int:
        return (self.bits >> (j * self.m)) & ((1 << self.m) - 1)

    def blocks(self) -> list:
        mask = (1 << self.m) - 1
        return [(self.bits >> (j * self.m)) & mask for j in range(self.n)]

    def is_one_hot(self) -> bool:
        """True when every block has at most one set bit (a valid image signature)."""
        return all(b & (b - 1) == 0 for b in self.blocks())

    @cached_property
    def masses(self) -> np.ndarray:
        """Per-block sum of set bit positions; the weight vector scaled by m/100."""
        out = np.zeros(self.n, dtype=np.float64)
        for j, b in enumerate(self.blocks()):
            pos = 1
            while b:
                if b & 1:
                    out[j] += pos
                b >>= 1
                pos += 1
        return out

    def is_zero(self) -> bool:
        return self.bits == 0

    def to_bytes(self) -> bytes:
        return _HEADER.pack(self.n, self.m) + self.bits.to_bytes(self.nbytes, "little")

    @classmethod
    def from_bytes(cls, data: bytes, offset: int = 0) -> "Signature":
        sig, _ = cls.unpack_from(data, offset)
        return sig

    @classmethod
    def unpack_from(cls, data: bytes, offset: int = 0):
        """Decode one serialized signature; returns ``(signature, next_offset)``."""
        if offset + _HEADER.size > len(data):
            raise MalformedSignature("truncated signature header")
        n, m = _HEADER.unpack_from(data, offset)
        offset += _HEADER.size
        size = signature_nbytes(n, m)
        if offset + size > len(data):
            raise MalformedSignature("truncated signature body")
        bits = int.from_bytes(data[offset : offset + size], "little")
        try:
            return cls(n, m, bits), offset + size
        except ValueError as exc:
            raise MalformedSignature(str(exc)) from None

    def hex(self) -> str:
        return self.to_bytes().hex()

    def __str__(self) -> str:
        # blocks left to right, each printed position 1 first
        return " ".join(format(b, f"0{self.m}b")[::-1] for b in self.blocks())


def signature_nbytes(n: int, m: int) -> int:
    return (n * m + 7) // 8


def zero(n: int, m: int) -> Signature:
    return Signature(n, m, 0)


def encode(hist, m: int = DEFAULT_BITS_PER_BLOCK) -> Signature:
    """Encode a normalized histogram: block j gets bit ceil(h_j * m), or nothing if h_j == 0."""
    h = np.asarray(hist, dtype=np.float64)
    positions = []
    for value in h:
        if value <= 0.0:
            positions.append(0)
        else:
            pos = math.ceil(value * m - _CEIL_SLACK)
            positions.append(min(max(pos, 1), m))
    return Signature.from_positions(positions, m)


def weight_vector(sig: Signature) -> np.ndarray:
    """Percent weights: set position * 100 / m per block, 0 for empty blocks."""
    if not sig.is_one_hot():
        raise MalformedSignature("weight vector needs at most one set bit per block")
    return sig.masses * (100.0 / sig.m)


def union_weights(sig: Signature) -> np.ndarray:
    """Weight vector of any signature, summing every set bit of a block."""
    return sig.masses * (100.0 / sig.m)


def _check_dims(a: Signature, b: Signature) -> None:
    if a.n != b.n or a.m != b.m:
        raise DimensionMismatch(f"signature shapes differ: {a.n}x{a.m} vs {b.n}x{b.m}")


def union(a: Signature, b: Signature) -> Signature:
    _check_dims(a, b)
    return Signature(a.n, a.m, a.bits | b.bits)


def union_all(sigs) -> Signature:
    it = iter(sigs)
    acc = next(it)
    bits = acc.bits
    for s in it:
        _check_dims(acc, s)
        bits |= s.bits
    return Signature(acc.n, acc.m, bits)


def covers(container: Signature, query: Signature) -> bool:
    """Containment test: every bit of ``query`` is set in ``container``."""
    _check_dims(container, query)
    return query.bits & container.bits == query.bits
