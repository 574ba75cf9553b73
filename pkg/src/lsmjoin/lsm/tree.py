"""A deterministic single-writer leveled LSM-tree with logical I/O accounting.

The write buffer plays the role of level 0 (capacity ``M``). On-disk levels are
numbered from 1 and hold at most one run each; level ``i`` may hold
``M * T**i`` bytes once compaction settles. Flushes and compactions run inline.
"""

from __future__ import annotations

import heapq
from bisect import bisect_left
import itertools
import logging
import os
import shutil
import tempfile
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator

from .bloom import key_hashes
from .records import PUT, TOMBSTONE, Entry, entry_size
from .run import Run
from .stats import IoStats

logger = logging.getLogger(__name__)

PLAIN = "plain"
POSTING_LIST_MERGE = "posting-list-merge"

# (newer_value, older_value or None, at_bottom) -> merged value, or None to drop the key
MergeOperator = Callable[[bytes, "bytes | None", bool], "bytes | None"]


def _ranked(entries, rank: int) -> Iterator[tuple[bytes, int, Entry]]:
    # Binds rank eagerly; a bare generator expression would see the loop's last value.
    for e in entries:
        yield e.key, rank, e


@dataclass(frozen=True)
class StorageConfig:
    block_size: int = 4096
    write_buffer_bytes: int = 16 * 2**20
    size_ratio: int = 5
    bloom_bits_per_key: float = 10
    data_dir: str | None = None
    merge_policy: str = PLAIN

    def __post_init__(self):
        if self.block_size <= 0:
            raise ValueError("block_size must be positive")
        if self.write_buffer_bytes < self.block_size:
            raise ValueError("write buffer must hold at least one block")
        if int(self.size_ratio) != self.size_ratio or self.size_ratio < 2:
            raise ValueError("size_ratio must be an integer >= 2")
        if self.bloom_bits_per_key < 0:
            raise ValueError("bloom_bits_per_key must be >= 0")
        if self.merge_policy not in (PLAIN, POSTING_LIST_MERGE):
            raise ValueError(f"unknown merge policy {self.merge_policy!r}")

    def level_capacity(self, level: int) -> int:
        """Byte capacity of on-disk level ``level`` (1-based)."""
        return self.write_buffer_bytes * self.size_ratio**level


class LsmTree:
    """Leveled LSM-tree over byte-string keys.

    Under the posting-list-merge policy, writes to an existing key are folded
    with ``merge_operator`` instead of replacing it, both in the write buffer
    and during compaction.
    """

    def __init__(
        self,
        config: StorageConfig | None = None,
        name: str = "tree",
        merge_operator: MergeOperator | None = None,
    ):
        self.config = config or StorageConfig()
        self.name = name
        if self.config.merge_policy == POSTING_LIST_MERGE and merge_operator is None:
            raise ValueError("posting-list-merge policy needs a merge operator")
        self.merge_operator = merge_operator if self.config.merge_policy == POSTING_LIST_MERGE else None
        self._owns_dir = self.config.data_dir is None
        base = self.config.data_dir or tempfile.mkdtemp(prefix="lsmjoin-")
        self.dir = os.path.join(base, name)
        os.makedirs(self.dir, exist_ok=True)
        self._base = base
        self.memtable: dict[bytes, Entry] = {}
        self.mem_bytes = 0
        self._mem_sorted: list[Entry] | None = None
        self.levels: list[Run | None] = []
        self.io = IoStats()
        self._seq = 0
        self._file_ids = itertools.count()
        self._hash_cache: dict[bytes, tuple[int, int]] = {}

    def _hashes(self, key: bytes) -> tuple[int, int]:
        h = self._hash_cache.get(key)
        if h is None:
            h = self._hash_cache[key] = key_hashes(key)
        return h

    # -- lifecycle -----------------------------------------------------------

    def close(self) -> None:
        for run in self.levels:
            if run is not None:
                run.remove()
        self.levels = []
        shutil.rmtree(self.dir, ignore_errors=True)
        if self._owns_dir:
            shutil.rmtree(self._base, ignore_errors=True)

    def __enter__(self) -> LsmTree:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- writes ----------------------------------------------------------------

    def put(self, key: bytes, value: bytes) -> None:
        if not key:
            raise ValueError("key must be non-empty")
        self._write(key, value, PUT)

    def delete(self, key: bytes) -> None:
        if not key:
            raise ValueError("key must be non-empty")
        self._write(key, b"", TOMBSTONE)

    def _write(self, key: bytes, value: bytes, kind: int) -> None:
        self._seq += 1
        old = self.memtable.get(key)
        if old is not None:
            self.mem_bytes -= entry_size(old)
            if self.merge_operator is not None and kind == PUT and old.kind == PUT:
                value = self.merge_operator(value, old.value, False)
        entry = Entry(key, value, self._seq, kind)
        self.memtable[key] = entry
        self.mem_bytes += entry_size(entry)
        self._mem_sorted = None
        if self.mem_bytes > self.config.write_buffer_bytes:
            self.flush()

    @property
    def last_seq(self) -> int:
        return self._seq

    # -- reads -----------------------------------------------------------------

    def get(self, key: bytes) -> bytes | None:
        """Newest value for ``key``, or ``None`` if absent or deleted."""
        e = self.memtable.get(key)
        if e is not None:
            return None if e.kind == TOMBSTONE else e.value
        io = self.io
        hashes = None
        for run in self.levels:
            if run is None:
                continue
            if hashes is None:
                hashes = self._hashes(key)
            io.bloom_probes += 1
            if not run.might_contain(key, hashes):
                io.bloom_negative += 1
                continue
            if not run.in_range(key):
                io.bloom_false_positive += 1
                continue
            e = run.find(key, io)
            if e is None:
                io.bloom_false_positive += 1
                continue
            return None if e.kind == TOMBSTONE else e.value
        return None

    def collect_versions(self, key: bytes) -> list[tuple[bytes, int, int]]:
        """Every live fragment of ``key`` as ``(value, seq, level)``, newest first.

        Level 0 denotes the write buffer. Unlike ``get`` this keeps probing
        deeper levels after a hit; a tombstone ends the search.
        """
        out = []
        e = self.memtable.get(key)
        if e is not None:
            if e.kind == TOMBSTONE:
                return out
            out.append((e.value, e.seq, 0))
        io = self.io
        hashes = self._hashes(key)
        for level, run in enumerate(self.levels, start=1):
            if run is None:
                continue
            io.bloom_probes += 1
            if not run.might_contain(key, hashes):
                io.bloom_negative += 1
                continue
            if not run.in_range(key):
                io.bloom_false_positive += 1
                continue
            e = run.find(key, io)
            if e is None:
                io.bloom_false_positive += 1
                continue
            if e.kind == TOMBSTONE:
                break
            out.append((e.value, e.seq, level))
        return out

    def _sorted_memtable(self) -> list[Entry]:
        if self._mem_sorted is None:
            self._mem_sorted = sorted(self.memtable.values())
        return self._mem_sorted

    def seek(self, lower: bytes = b"") -> Iterator[Entry]:
        """Merged ascending iterator over live entries with key >= ``lower``.

        One seek is charged per run whose key range reaches ``lower``; blocks
        are charged as they are consumed. Under the posting-list-merge policy
        all same-key fragments are yielded, newest first.
        """
        sources = []
        mem = self._sorted_memtable()
        if mem:
            start = 0
            if lower:
                start = bisect_left(mem, (lower,))
            if start < len(mem):
                sources.append(_ranked(itertools.islice(mem, start, None), 0))
        io = self.io
        for rank, run in enumerate(self.levels, start=1):
            if run is None or run.max_key < lower:
                continue
            io.seeks += 1
            sources.append(_ranked(run.iter_from(lower, io), rank))
        return self._merge_sources(sources)

    def _merge_sources(self, sources: list) -> Iterator[Entry]:
        if not sources:
            return
        merged = sources[0] if len(sources) == 1 else heapq.merge(*sources)
        if self.merge_operator is not None:
            stop_key = None
            for key, _, e in merged:
                if key == stop_key:
                    continue
                if e.kind == TOMBSTONE:
                    stop_key = key
                    continue
                stop_key = None
                yield e
            return
        last = None
        for key, _, e in merged:
            if key == last:
                continue
            last = key
            if e.kind != TOMBSTONE:
                yield e

    def full_scan(self) -> Iterator[Entry]:
        return self.seek(b"")

    # -- flush & compaction ------------------------------------------------------

    def _new_path(self, level: int) -> str:
        return os.path.join(self.dir, f"L{level}-{next(self._file_ids):06d}.run")

    def _is_bottom(self, level_idx: int) -> bool:
        return all(r is None for r in self.levels[level_idx + 1:])

    def flush(self) -> None:
        """Merge the write buffer into level 1, then restore level capacities."""
        if not self.memtable:
            return
        newer = self._sorted_memtable()
        self._merge_into(0, newer)
        self.memtable = {}
        self.mem_bytes = 0
        self._mem_sorted = None
        self._settle(0)

    def compact(self, level: int) -> None:
        """Merge on-disk level ``level`` (1-based) into ``level + 1``."""
        idx = level - 1
        if idx >= len(self.levels) or self.levels[idx] is None:
            return
        src = self.levels[idx]
        self._merge_into(idx + 1, src.iter_from(b"", self.io))
        self.levels[idx] = None
        src.remove()
        while self.levels and self.levels[-1] is None:
            self.levels.pop()

    def _settle(self, idx: int) -> None:
        while idx < len(self.levels):
            run = self.levels[idx]
            if run is not None and run.data_bytes > self.config.level_capacity(idx + 1):
                logger.debug("%s: level %d over capacity (%d bytes)", self.name, idx + 1, run.data_bytes)
                self.compact(idx + 1)
            idx += 1

    def compact_all(self) -> None:
        """Flush and push everything into a single bottom run."""
        self.flush()
        for idx in range(len(self.levels) - 1):
            if self.levels[idx] is not None:
                self.compact(idx + 1)

    def _merge_into(self, idx: int, newer: Iterable[Entry]) -> None:
        while len(self.levels) <= idx:
            self.levels.append(None)
        older = self.levels[idx]
        bottom = self._is_bottom(idx)
        older_iter = older.iter_from(b"", self.io) if older is not None else iter(())
        merged = self._merge_pair(newer, older_iter, bottom)
        run = Run.write(
            self._new_path(idx + 1), merged, self.config.block_size, self.config.bloom_bits_per_key, self._hashes
        )
        if run is not None:
            self.io.blocks_written += run.block_count
        self.levels[idx] = run
        if older is not None:
            older.remove()
        while self.levels and self.levels[-1] is None:
            self.levels.pop()

    def _merge_pair(self, newer: Iterable[Entry], older: Iterator[Entry], bottom: bool) -> Iterator[Entry]:
        op = self.merge_operator
        if op is None and not bottom:
            yield from _merge_newest(newer, older)
            return
        o = next(older, None)
        for n in newer:
            while o is not None and o.key < n.key:
                yield from self._finish(o, bottom)
                o = next(older, None)
            if o is not None and o.key == n.key:
                if op is not None and n.kind == PUT and o.kind == PUT:
                    merged = op(n.value, o.value, bottom)
                    if merged is not None:
                        yield Entry(n.key, merged, n.seq, PUT)
                    o = next(older, None)
                    continue
                o = next(older, None)
            yield from self._finish(n, bottom)
        while o is not None:
            yield from self._finish(o, bottom)
            o = next(older, None)

    def _finish(self, e: Entry, bottom: bool) -> Iterator[Entry]:
        if not bottom:
            yield e
        elif e.kind != TOMBSTONE:
            if self.merge_operator is None:
                yield e
            else:
                v = self.merge_operator(e.value, None, True)
                if v is not None:
                    yield e if v == e.value else Entry(e.key, v, e.seq, PUT)

    # -- introspection -------------------------------------------------------------

    def io_stats(self) -> IoStats:
        return self.io

    def reset_io_stats(self) -> None:
        self.io.reset()

    @property
    def disk_bytes(self) -> int:
        return sum(r.data_bytes for r in self.levels if r is not None)

    @property
    def disk_blocks(self) -> int:
        return sum(r.block_count for r in self.levels if r is not None)

    @property
    def entry_count(self) -> int:
        """Physical entries on disk plus in the buffer (duplicates across levels included)."""
        return len(self.memtable) + sum(r.entry_count for r in self.levels if r is not None)

    def level_count(self) -> int:
        """Number of non-empty on-disk levels."""
        return sum(1 for r in self.levels if r is not None)

    def runs(self) -> list[tuple[int, Run]]:
        return [(i, r) for i, r in enumerate(self.levels, start=1) if r is not None]


def _merge_newest(newer: Iterable[Entry], older: Iterator[Entry]) -> Iterator[Entry]:
    """Two-way merge of unique-key sorted streams; ``newer`` wins on equal keys."""
    o = next(older, None)
    for n in newer:
        key = n.key
        while o is not None and o.key < key:
            yield o
            o = next(older, None)
        if o is not None and o.key == key:
            o = next(older, None)
        yield n
    if o is not None:
        yield o
        yield from older
