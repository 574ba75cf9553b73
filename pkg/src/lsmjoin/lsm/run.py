"""Immutable sorted run files.

Layout (little-endian)::

    header   magic "LSMJ" | version u32 | entry_count u64 | block_size u32
    body     block groups of B bytes each (see ``records``)
    footer   fence_count u32, then per fence: block u64 | nblocks u32 | key_len u32 | key
             bloom: num_bits u64 | k u32 | bits
             footer_len u64

Decoded block groups are memoised in memory so repeated logical reads do not
re-parse the file. The memo never changes what gets charged to ``IoStats``.
"""

from __future__ import annotations

import os
import struct
from bisect import bisect_left, bisect_right
from typing import Callable, Iterable, Iterator

from .bloom import BloomFilter, key_hashes
from .records import (
    FORMAT_VERSION,
    HEADER,
    MAGIC,
    CorruptionError,
    Entry,
    decode_records,
    entry_size,
    pack_blocks,
)
from .stats import IoStats

_FENCE = struct.Struct("<QII")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


class Run:
    """A sorted run with strictly increasing keys, a fence index and a Bloom filter."""

    def __init__(
        self,
        path: str,
        block_size: int,
        entry_count: int,
        data_bytes: int,
        fence_keys: list[bytes],
        fence_blocks: list[tuple[int, int]],
        bloom: BloomFilter | None,
    ):
        self.path = path
        self.block_size = block_size
        self.entry_count = entry_count
        self.data_bytes = data_bytes
        self.fence_keys = fence_keys
        self.fence_blocks = fence_blocks
        self.bloom = bloom
        self.block_count = sum(n for _, n in fence_blocks)
        self._max_key = fence_keys[-1] if fence_keys else b""
        self._memo: dict[int, tuple[list[bytes], list[Entry]]] = {}

    @property
    def min_key(self) -> bytes:
        return self.fence_keys[0]

    @property
    def max_key(self) -> bytes:
        return self._max_key

    @classmethod
    def write(
        cls,
        path: str,
        entries: Iterable[Entry],
        block_size: int,
        bloom_bits_per_key: float,
        hasher: Callable[[bytes], tuple[int, int]] = key_hashes,
    ) -> Run | None:
        """Write sorted ``entries`` to ``path`` atomically; returns ``None`` if empty."""
        fence_keys: list[bytes] = []
        fence_blocks: list[tuple[int, int]] = []
        memo: dict[int, tuple[list[bytes], list[Entry]]] = {}
        hashes = []
        count = 0
        data_bytes = 0
        block_no = 0
        last_key = None
        tmp = path + ".tmp"
        with open(tmp, "wb") as f:
            f.write(HEADER.pack(MAGIC, FORMAT_VERSION, 0, block_size))
            for group in pack_blocks(entries, block_size):
                f.write(group.payload)
                keys = [e.key for e in group.entries]
                memo[len(fence_keys)] = (keys, group.entries)
                fence_keys.append(group.first_key)
                fence_blocks.append((block_no, group.nblocks))
                block_no += group.nblocks
                count += len(keys)
                data_bytes += group.data_bytes
                hashes.extend(map(hasher, keys))
                last_key = keys[-1]
            if not count:
                f.close()
                os.unlink(tmp)
                return None
            bloom = BloomFilter.build(hashes, bloom_bits_per_key)
            footer = [_U32.pack(len(fence_keys))]
            for key, (blk, n) in zip(fence_keys, fence_blocks):
                footer.append(_FENCE.pack(blk, n, len(key)))
                footer.append(key)
            footer.append(bloom.to_bytes() if bloom else b"")
            footer_bytes = b"".join(footer)
            f.write(footer_bytes)
            f.write(_U64.pack(len(footer_bytes)))
            f.seek(0)
            f.write(HEADER.pack(MAGIC, FORMAT_VERSION, count, block_size))
        os.replace(tmp, path)
        run = cls(path, block_size, count, data_bytes, fence_keys, fence_blocks, bloom)
        run._max_key = last_key
        run._memo = memo
        return run

    @classmethod
    def open(cls, path: str) -> Run:
        """Re-open a run from its file; blocks are decoded lazily on first read."""
        with open(path, "rb") as f:
            raw = f.read()
        if len(raw) < HEADER.size + 8:
            raise CorruptionError(f"{path}: file too short")
        magic, version, count, block_size = HEADER.unpack_from(raw)
        if magic != MAGIC or version != FORMAT_VERSION:
            raise CorruptionError(f"{path}: bad magic or version")
        (footer_len,) = _U64.unpack_from(raw, len(raw) - 8)
        pos = len(raw) - 8 - footer_len
        if pos < HEADER.size:
            raise CorruptionError(f"{path}: footer length {footer_len} out of range")
        try:
            (nfence,) = _U32.unpack_from(raw, pos)
            pos += 4
            fence_keys, fence_blocks = [], []
            for _ in range(nfence):
                blk, n, klen = _FENCE.unpack_from(raw, pos)
                pos += _FENCE.size
                fence_keys.append(raw[pos:pos + klen])
                fence_blocks.append((blk, n))
                pos += klen
            bloom = BloomFilter.from_bytes(raw[pos:len(raw) - 8]) if pos < len(raw) - 8 else None
        except struct.error as exc:
            raise CorruptionError(f"{path}: truncated footer") from exc
        if not fence_keys:
            raise CorruptionError(f"{path}: run has no blocks")
        run = cls(path, block_size, count, 0, fence_keys, fence_blocks, bloom)
        last = run._decode(len(fence_keys) - 1)
        run._max_key = last[0][-1]
        run.data_bytes = sum(entry_size(e) for e in run._iter_all_uncharged())
        run._memo.clear()
        return run

    def drop_cache(self) -> None:
        """Forget decoded blocks so the next reads parse the file again."""
        self._memo.clear()

    def _decode(self, g: int) -> tuple[list[bytes], list[Entry]]:
        blk, n = self.fence_blocks[g]
        with open(self.path, "rb") as f:
            f.seek(HEADER.size + blk * self.block_size)
            buf = f.read(n * self.block_size)
        if len(buf) != n * self.block_size:
            raise CorruptionError(f"{self.path}: short read at block {blk}")
        entries = decode_records(buf)
        decoded = ([e.key for e in entries], entries)
        self._memo[g] = decoded
        return decoded

    def _group(self, g: int, io: IoStats) -> tuple[list[bytes], list[Entry]]:
        io.blocks_read += self.fence_blocks[g][1]
        got = self._memo.get(g)
        return got if got is not None else self._decode(g)

    def _iter_all_uncharged(self) -> Iterator[Entry]:
        for g in range(len(self.fence_keys)):
            got = self._memo.get(g) or self._decode(g)
            yield from got[1]

    def might_contain(self, key: bytes, hashes: tuple[int, int]) -> bool:
        return self.bloom is None or self.bloom.might_contain(key, hashes)

    def in_range(self, key: bytes) -> bool:
        return self.fence_keys[0] <= key <= self._max_key

    def find(self, key: bytes, io: IoStats) -> Entry | None:
        """Read the one block group that may hold ``key``."""
        g = bisect_right(self.fence_keys, key) - 1
        if g < 0:
            return None
        keys, entries = self._group(g, io)
        i = bisect_left(keys, key)
        if i < len(keys) and keys[i] == key:
            return entries[i]
        return None

    def iter_from(self, lower: bytes, io: IoStats) -> Iterator[Entry]:
        """Yield entries with key >= ``lower``, charging each block group as it is entered."""
        g = max(0, bisect_right(self.fence_keys, lower) - 1) if lower else 0
        ngroups = len(self.fence_keys)
        if g < ngroups:
            keys, entries = self._group(g, io)
            yield from entries[bisect_left(keys, lower):]
            g += 1
        while g < ngroups:
            yield from self._group(g, io)[1]
            g += 1

    def entries(self) -> list[Entry]:
        """All entries, uncharged; for inspection in tests and tooling."""
        return list(self._iter_all_uncharged())

    def remove(self) -> None:
        self._memo.clear()
        try:
            os.unlink(self.path)
        except FileNotFoundError:
            pass
