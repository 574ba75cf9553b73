"""Grace hash join: partition both inputs to disk by BKDR hash, then build and probe per partition."""

from __future__ import annotations

import math
from collections import defaultdict
from typing import Iterable, Iterator

from ..lsm.stats import IoStats
from .rows import JoinRow
from .spill import SpillDir, SpillFile, SpillWriter, Triple, triple_size

MASK64 = (1 << 64) - 1
MAX_DEPTH = 3
# odd multipliers that decorrelate the partition function at each recursion depth
_SALTS = (0, 0x9E3779B97F4A7C15, 0xC2B2AE3D27D4EB4F, 0x165667B19E3779F9)


class JoinMemoryError(RuntimeError):
    """A hash partition still exceeds the memory budget after the allowed recursion."""


def bkdr_hash(data: bytes) -> int:
    h = 0
    for c in data:
        h = (h * 131 + c) & MASK64
    return h


def partition_of(attr: bytes, parts: int, depth: int, cache: dict[bytes, int] | None = None) -> int:
    h = cache.get(attr) if cache is not None else None
    if h is None:
        h = bkdr_hash(attr)
        if cache is not None:
            cache[attr] = h
    if depth == 0:
        return h % parts
    return (((h * _SALTS[depth]) & MASK64) >> 24) % parts


def partition_count(est_bytes: int, budget: int) -> int:
    """Partitions sized with 25% headroom over the budget."""
    return max(1, math.ceil(1.25 * est_bytes / budget))


class _Partition:
    __slots__ = ("writer", "lo", "hi")

    def __init__(self, writer: SpillWriter):
        self.writer = writer
        self.lo: bytes | None = None
        self.hi: bytes | None = None

    def add(self, attr: bytes, pk: bytes, payload: bytes | None) -> None:
        self.writer.add(attr, pk, payload)
        if self.lo is None or attr < self.lo:
            self.lo = attr
        if self.hi is None or attr > self.hi:
            self.hi = attr


class _Part:
    """A closed partition file and whether it holds a single distinct attribute."""

    __slots__ = ("file", "single_attr")

    def __init__(self, p: _Partition):
        self.file: SpillFile = p.writer.close()
        self.single_attr = p.lo is not None and p.lo == p.hi


def _partition(source: Iterable[Triple], parts: int, depth: int, spill: SpillDir, io: IoStats,
               block_size: int, tag: str, cache: dict) -> list[_Part]:
    writers = [_Partition(SpillWriter(spill.new_path(f"{tag}{depth}"), block_size, io)) for _ in range(parts)]
    for attr, pk, payload in source:
        writers[partition_of(attr, parts, depth, cache)].add(attr, pk, payload)
    return [_Part(w) for w in writers]


def grace_hash_join(
    left: Iterable[Triple],
    right: Iterable[Triple],
    budget: int,
    spill: SpillDir,
    left_io: IoStats,
    right_io: IoStats,
    block_size: int,
    num_partitions: int,
) -> Iterator[JoinRow]:
    """Partition both inputs, then join partition pairs in memory.

    The smaller file of each pair is loaded into a hash table and the other
    is streamed against it. Oversized partitions are split again with a
    differently salted hash up to three times. A partition that holds a
    single attribute value cannot be split and is joined in budget-sized
    chunks instead.
    """
    cache: dict[bytes, int] = {}
    lparts = _partition(left, num_partitions, 0, spill, left_io, block_size, "hl", cache)
    rparts = _partition(right, num_partitions, 0, spill, right_io, block_size, "hr", cache)
    for lp, rp in zip(lparts, rparts):
        yield from _join_pair(lp, rp, 0, budget, spill, left_io, right_io, block_size, cache)


def _join_pair(lp: _Part, rp: _Part, depth: int, budget: int, spill: SpillDir, left_io: IoStats,
               right_io: IoStats, block_size: int, cache: dict) -> Iterator[JoinRow]:
    lf, rf = lp.file, rp.file
    try:
        if lf.count == 0 or rf.count == 0:
            return
        build_left = lf.data_bytes <= rf.data_bytes
        build, probe = (lp, rp) if build_left else (rp, lp)
        if build.file.data_bytes <= budget:
            yield from _build_probe(list(build.file), probe.file, build_left)
            return
        if build.single_attr:
            yield from _chunked(build.file, probe.file, budget, build_left)
            return
        if depth >= MAX_DEPTH:
            raise JoinMemoryError(
                f"partition of {build.file.data_bytes} bytes exceeds budget {budget} after {depth} repartitions"
            )
        parts = max(2, partition_count(build.file.data_bytes, budget))
        subl = _partition(lf, parts, depth + 1, spill, left_io, block_size, "hl", cache)
        subr = _partition(rf, parts, depth + 1, spill, right_io, block_size, "hr", cache)
        for a, b in zip(subl, subr):
            yield from _join_pair(a, b, depth + 1, budget, spill, left_io, right_io, block_size, cache)
    finally:
        lf.remove()
        rf.remove()


def _build_probe(build: list[Triple], probe: Iterable[Triple], build_left: bool) -> Iterator[JoinRow]:
    table: dict[bytes, list[tuple[bytes, bytes | None]]] = defaultdict(list)
    for attr, pk, payload in build:
        table[attr].append((pk, payload))
    for attr, pk, payload in probe:
        matches = table.get(attr)
        if not matches:
            continue
        if build_left:
            for bpk, bpay in matches:
                yield JoinRow(attr, bpk, pk, bpay, payload)
        else:
            for bpk, bpay in matches:
                yield JoinRow(attr, pk, bpk, payload, bpay)


def _chunked(build: SpillFile, probe: SpillFile, budget: int, build_left: bool) -> Iterator[JoinRow]:
    chunk: list[Triple] = []
    used = 0
    for t in build:
        chunk.append(t)
        used += triple_size(*t)
        if used >= budget:
            yield from _build_probe(chunk, probe, build_left)
            chunk, used = [], 0
    if chunk:
        yield from _build_probe(chunk, probe, build_left)
