"""Executes a join method over two indexed tables.

``R`` is always the left (outer) table and ``S`` the right (inner) table.
Spill and partition I/O is charged to the data tree of the side that
produced the spilled records, so a join's cost is the change in the two
tables' counters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

from ..index.table import IndexedTable, split_data_value
from .hashjoin import grace_hash_join, partition_count
from .methods import Algorithm, JoinMethod, Scenario
from .rows import JoinRow, ResultDigest
from .sort import merge_join, sort_stream
from .spill import SpillDir, Triple

DEFAULT_BUDGET = 16 * 2**20


class JoinConfigError(ValueError):
    """The tables do not provide the access paths a join method needs."""


@dataclass(frozen=True)
class JoinOptions:
    budget: int = DEFAULT_BUDGET
    # Non-covering index results carry no payloads unless this is set.
    fetch_payloads: bool = False
    spill_dir: str | None = None

    def __post_init__(self):
        if self.budget <= 0:
            raise ValueError("memory budget must be positive")


def check_tables(method: JoinMethod, r: IndexedTable, s: IndexedTable) -> None:
    for side, table, want in (("R", r, method.r_index), ("S", s, method.s_index)):
        if want is not None and table.config != want:
            have = table.config.label if table.config else "none"
            raise JoinConfigError(f"{method.id} needs index {want.label} on {side}, table has {have}")


def data_triples(t: IndexedTable) -> Iterator[Triple]:
    for pk, attr, payload in t.scan_data():
        yield attr, pk, payload


def primary_triples(t: IndexedTable) -> Iterator[Triple]:
    """The table keyed by its primary key, which doubles as the join attribute."""
    for pk, _, payload in t.scan_data():
        yield pk, pk, payload


def run_join(method: JoinMethod, r: IndexedTable, s: IndexedTable, options: JoinOptions | None = None) -> Iterator[JoinRow]:
    """Stream the rows of ``R ⋈ S`` computed with ``method``."""
    options = options or JoinOptions()
    check_tables(method, r, s)
    return _run(method, r, s, options)


def _run(method: JoinMethod, r: IndexedTable, s: IndexedTable, options: JoinOptions) -> Iterator[JoinRow]:
    if method.algorithm is Algorithm.INLJ:
        yield from inlj(method, r, s, options)
        return
    with SpillDir(options.spill_dir) as spill:
        if method.algorithm is Algorithm.SJ:
            yield from _sort_merge(method, r, s, options, spill)
        else:
            yield from _hash(method, r, s, options, spill)


def inlj(method: JoinMethod, r: IndexedTable, s: IndexedTable, options: JoinOptions) -> Iterator[JoinRow]:
    """Scan the outer side once and look every tuple up in S."""
    fetch = options.fetch_payloads
    outer = r.scan_index(fetch) if method.r_index is not None else data_triples(r)
    scen = method.scenario
    if scen.primary:
        get = s.data.get
        for attr, pk, payload in outer:
            v = get(attr)
            if v is not None:
                yield JoinRow(attr, pk, attr, payload, split_data_value(v)[1])
    elif scen is Scenario.N:
        for attr, pk, payload in outer:
            for spk, sattr, spay in s.scan_data():
                if sattr == attr:
                    yield JoinRow(attr, pk, spk, payload, spay)
    else:
        lookup = s.resolved_lookup
        for attr, pk, payload in outer:
            for spk, spay in lookup(attr, fetch):
                yield JoinRow(attr, pk, spk, payload, spay)


def _sort_merge(method: JoinMethod, r: IndexedTable, s: IndexedTable, options: JoinOptions, spill: SpillDir):
    fetch = options.fetch_payloads
    bs = r.data.config.block_size
    budget = options.budget
    if method.r_index is not None:
        left = r.scan_index(fetch)
    else:
        left = sort_stream(data_triples(r), budget, spill, r.data.io, bs)
    if method.scenario.primary:
        right = primary_triples(s)
    elif method.s_index is not None:
        right = s.scan_index(fetch)
    else:
        right = sort_stream(data_triples(s), budget, spill, s.data.io, bs)
    yield from merge_join(left, right, budget, spill, s.data.io, bs)


def _hash(method: JoinMethod, r: IndexedTable, s: IndexedTable, options: JoinOptions, spill: SpillDir):
    right = primary_triples(s) if method.scenario.primary else data_triples(s)
    smaller = min(r.data.disk_bytes + r.data.mem_bytes, s.data.disk_bytes + s.data.mem_bytes)
    parts = partition_count(smaller, options.budget)
    yield from grace_hash_join(
        data_triples(r), right, options.budget, spill, r.data.io, s.data.io, r.data.config.block_size, parts
    )


def join_digest(method: JoinMethod, r: IndexedTable, s: IndexedTable, options: JoinOptions | None = None) -> ResultDigest:
    return ResultDigest().consume(run_join(method, r, s, options))
