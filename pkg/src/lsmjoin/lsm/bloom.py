from __future__ import annotations

import hashlib
import math
import struct
from typing import Sequence

import numpy as np

_U32 = 0xFFFFFFFF
_FOOTER = struct.Struct("<QI")


def key_hashes(key: bytes) -> tuple[int, int]:
    """Split a 64-bit blake2b digest into the two halves used for double hashing."""
    d = int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")
    # odd step so every probe sequence visits distinct positions when m is a power of two
    return d & _U32, (d >> 32) | 1


def num_hashes(bits_per_key: float) -> int:
    return max(1, round(bits_per_key * math.log(2)))


class BloomFilter:
    """Bit-array Bloom filter probed with ``h1 + i*h2 mod m``."""

    __slots__ = ("num_bits", "k", "bits")

    def __init__(self, num_bits: int, k: int, bits: bytes):
        self.num_bits = num_bits
        self.k = k
        self.bits = bits

    @classmethod
    def build(cls, hashes: Sequence[tuple[int, int]], bits_per_key: float) -> BloomFilter | None:
        """Build a filter for the given key hashes; ``None`` when filtering is disabled."""
        if bits_per_key <= 0:
            return None
        num_bits = max(64, math.ceil(len(hashes) * bits_per_key / 8) * 8)
        k = num_hashes(bits_per_key)
        bitmap = np.zeros(num_bits, dtype=bool)
        if hashes:
            arr = np.asarray(hashes, dtype=np.uint64)
            h1, h2 = arr[:, 0], arr[:, 1]
            for i in range(k):
                bitmap[(h1 + np.uint64(i) * h2) % np.uint64(num_bits)] = True
        return cls(num_bits, k, np.packbits(bitmap, bitorder="little").tobytes())

    def might_contain(self, key: bytes, hashes: tuple[int, int]) -> bool:
        h1, h2 = hashes
        m = self.num_bits
        bits = self.bits
        for i in range(self.k):
            pos = (h1 + i * h2) % m
            if not bits[pos >> 3] >> (pos & 7) & 1:
                return False
        return True

    def to_bytes(self) -> bytes:
        return _FOOTER.pack(self.num_bits, self.k) + self.bits

    @classmethod
    def from_bytes(cls, buf: bytes) -> BloomFilter:
        num_bits, k = _FOOTER.unpack_from(buf)
        return cls(num_bits, k, bytes(buf[_FOOTER.size:_FOOTER.size + num_bits // 8]))


def bloom_false_positive_rate(bits_per_key: float) -> float:
    """Model FPR for an optimally configured filter, clamped to [0, 1]."""
    if bits_per_key <= 0:
        return 1.0
    return min(1.0, max(0.0, 0.6185 ** bits_per_key))
