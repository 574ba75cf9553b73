"""External sort, k-way merge and the streaming merge join over ``(attr, pk, payload)`` triples."""

from __future__ import annotations

import heapq
from itertools import chain, groupby
from operator import itemgetter
from typing import Iterable, Iterator

from ..lsm.stats import IoStats
from .rows import JoinRow
from .spill import SpillDir, SpillFile, Triple, triple_size, write_spill

_attr = itemgetter(0)


def max_fan_in(budget: int, block_size: int) -> int:
    """Runs merged per pass: one input and one output buffer per run."""
    return max(2, budget // (2 * block_size))


def external_sort(
    source: Iterable[Triple], budget: int, spill: SpillDir, io: IoStats, block_size: int
) -> list[SpillFile]:
    """Cut ``source`` into memory-sized runs, sort each by ``(attr, pk)`` and write it out.

    Input that fits in the budget still produces one run on disk.
    """
    runs = []
    buf: list[Triple] = []
    used = 0
    for t in source:
        size = triple_size(*t)
        if buf and used + size > budget:
            runs.append(_write_sorted(buf, spill, io, block_size))
            buf, used = [], 0
        buf.append(t)
        used += size
    if buf:
        runs.append(_write_sorted(buf, spill, io, block_size))
    return runs


def _write_sorted(buf: list[Triple], spill: SpillDir, io: IoStats, block_size: int) -> SpillFile:
    buf.sort(key=lambda t: (t[0], t[1]))
    return write_spill(spill.new_path("run"), buf, block_size, io)


def kway_merge(runs: list[SpillFile], k_max: int, spill: SpillDir, io: IoStats, block_size: int) -> SpillFile:
    """Merge sorted runs into one, in as many passes of fan-in ``k_max`` as needed.

    A single run is still copied, so every input goes through one full
    read-and-write merge pass. Inputs are deleted once consumed.
    """
    if k_max < 2:
        raise ValueError("k_max must be at least 2")
    if not runs:
        return write_spill(spill.new_path("merged"), (), block_size, io)
    while True:
        final = len(runs) <= k_max
        nxt = []
        for i in range(0, len(runs), k_max):
            batch = runs[i:i + k_max]
            merged = heapq.merge(*batch, key=lambda t: (t[0], t[1]))
            nxt.append(write_spill(spill.new_path("merged" if final else "pass"), merged, block_size, io))
            for r in batch:
                r.remove()
        runs = nxt
        if final:
            return runs[0]


def sort_stream(
    source: Iterable[Triple], budget: int, spill: SpillDir, io: IoStats, block_size: int
) -> Iterator[Triple]:
    """Sort an unordered source on disk and stream the merged result back."""
    runs = external_sort(source, budget, spill, io, block_size)
    merged = kway_merge(runs, max_fan_in(budget, block_size), spill, io, block_size)
    try:
        yield from merged
    finally:
        merged.remove()


def merge_join(
    left: Iterable[Triple],
    right: Iterable[Triple],
    budget: int,
    spill: SpillDir,
    io: IoStats,
    block_size: int,
) -> Iterator[JoinRow]:
    """Join two streams sorted by ``(attr, pk)``.

    Each matching right group is held in memory, or spilled to disk when it
    outgrows ``budget``, and replayed for every left row with that attribute.
    Rows come out in ``(attr, left pk, right pk)`` order.
    """
    lgroups = groupby(left, key=_attr)
    rgroups = groupby(right, key=_attr)
    lg = next(lgroups, None)
    rg = next(rgroups, None)
    while lg is not None and rg is not None:
        la, rows_l = lg
        ra, rows_r = rg
        if la < ra:
            lg = next(lgroups, None)
        elif ra < la:
            rg = next(rgroups, None)
        else:
            group, spilled = _buffer_group(rows_r, budget, spill, io, block_size)
            try:
                for _, lpk, lpay in rows_l:
                    for _, rpk, rpay in (spilled if spilled is not None else group):
                        yield JoinRow(la, lpk, rpk, lpay, rpay)
            finally:
                if spilled is not None:
                    spilled.remove()
            lg = next(lgroups, None)
            rg = next(rgroups, None)


def _buffer_group(rows, budget: int, spill: SpillDir, io: IoStats, block_size: int):
    group: list[Triple] = []
    used = 0
    for t in rows:
        group.append(t)
        used += triple_size(*t)
        if used > budget:
            return None, write_spill(spill.new_path("group"), chain(group, rows), block_size, io)
    return group, None

