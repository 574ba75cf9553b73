"""Data tables with an optional secondary index on their join attribute.

A data tree maps ``primary key -> join_attr 0x00 payload``. The index tree
layout depends on the index kind:

* Eager: ``attr -> posting list``, resolved on every write (read-modify-write).
* Lazy: ``attr -> posting fragment``, appended blindly and merged on read
  and during compaction.
* Composite: ``attr 0x00 pk -> payload or b""``, looked up by prefix scan.

Synchronous tables remove stale mappings at update time; Validation tables
append blindly and filter stale candidates against the data tree at query
time.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass
from itertools import groupby
from typing import Iterator

from ..lsm import PLAIN, POSTING_LIST_MERGE, LsmTree, StorageConfig
from .posting import PostingList, decode_posting, encode_posting, lazy_merge_operator, resolve

SEP = b"\x00"


class IndexKind(str, enum.Enum):
    EAGER = "Eager"
    LAZY = "Lazy"
    COMPOSITE = "Comp"


class Strategy(str, enum.Enum):
    SYNCHRONOUS = "S"
    VALIDATION = "V"


class Coverage(str, enum.Enum):
    COVERING = "cov"
    NON_COVERING = "noncov"


@dataclass(frozen=True)
class IndexConfig:
    kind: IndexKind
    strategy: Strategy
    coverage: Coverage = Coverage.NON_COVERING

    @property
    def label(self) -> str:
        return f"{self.strategy.value}-{self.kind.value}/{self.coverage.value}"

    @property
    def covering(self) -> bool:
        return self.coverage is Coverage.COVERING

    @property
    def validating(self) -> bool:
        return self.strategy is Strategy.VALIDATION

    @classmethod
    def parse(cls, text: str) -> IndexConfig:
        """Parse labels such as ``S-Comp/cov`` or ``V-Lazy`` (non-covering by default)."""
        head, _, cov = text.partition("/")
        strategy, _, kind = head.partition("-")
        try:
            return cls(IndexKind(kind), Strategy(strategy), Coverage(cov or "noncov"))
        except ValueError as exc:
            raise ValueError(f"bad index config {text!r}") from exc

    def __str__(self) -> str:
        return self.label


def all_index_configs() -> list[IndexConfig]:
    return [
        IndexConfig(kind, strategy, coverage)
        for strategy in Strategy
        for kind in IndexKind
        for coverage in Coverage
    ]


DEFAULT_INDEX = IndexConfig(IndexKind.COMPOSITE, Strategy.SYNCHRONOUS, Coverage.COVERING)


def encode_data_value(attr: bytes, payload: bytes = b"") -> bytes:
    return attr + SEP + payload


def split_data_value(value: bytes) -> tuple[bytes, bytes]:
    attr, _, payload = value.partition(SEP)
    return attr, payload


def composite_key(attr: bytes, pk: bytes) -> bytes:
    return attr + SEP + pk


def split_composite_key(key: bytes) -> tuple[bytes, bytes]:
    attr, _, pk = key.partition(SEP)
    return attr, pk


def check_component(name: str, value: bytes) -> None:
    if not value:
        raise ValueError(f"{name} must be non-empty")
    if SEP in value:
        raise ValueError(f"{name} must not contain 0x00: {value!r}")


class IndexedTable:
    """One data table and, if ``config`` is given, its secondary index on the join attribute."""

    def __init__(self, name: str, storage: StorageConfig | None = None, config: IndexConfig | None = None):
        storage = storage or StorageConfig()
        self.name = name
        self.config = config
        self.data = LsmTree(dataclasses.replace(storage, merge_policy=PLAIN), f"{name}-data")
        self.index: LsmTree | None = None
        if config is not None:
            if config.kind is IndexKind.LAZY:
                index_storage = dataclasses.replace(storage, merge_policy=POSTING_LIST_MERGE)
                self.index = LsmTree(index_storage, f"{name}-index", merge_operator=lazy_merge_operator)
            else:
                self.index = LsmTree(dataclasses.replace(storage, merge_policy=PLAIN), f"{name}-index")

    # -- lifecycle ---------------------------------------------------------------

    def trees(self) -> list[LsmTree]:
        return [self.data] if self.index is None else [self.data, self.index]

    def flush(self) -> None:
        for t in self.trees():
            t.flush()

    def close(self) -> None:
        for t in self.trees():
            t.close()

    def __enter__(self) -> IndexedTable:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def io_total(self) -> int:
        return sum(t.io.io for t in self.trees())

    # -- updates -----------------------------------------------------------------

    def apply_update(self, pk: bytes, attr: bytes, payload: bytes = b"") -> None:
        """Upsert ``pk -> (attr, payload)``, maintaining the index first and the data last."""
        check_component("primary key", pk)
        check_component("join attribute", attr)
        cfg = self.config
        if cfg is not None:
            if cfg.strategy is Strategy.SYNCHRONOUS:
                self._sync_index(pk, attr, payload)
            else:
                self._append_index(pk, attr, payload)
        self.data.put(pk, encode_data_value(attr, payload))

    def _sync_index(self, pk: bytes, attr: bytes, payload: bytes) -> None:
        old = self.data.get(pk)
        old_attr = split_data_value(old)[0] if old is not None else None
        kind = self.config.kind
        stale = old_attr is not None and old_attr != attr
        if kind is IndexKind.EAGER:
            if stale:
                self._rewrite_posting(old_attr, remove=pk)
            self._rewrite_posting(attr, add=(pk, payload))
        elif kind is IndexKind.LAZY:
            if stale:
                self.index.put(old_attr, encode_posting(PostingList(removes={pk}, covering=self.config.covering)))
            self._append_index(pk, attr, payload)
        else:
            if stale:
                self.index.delete(composite_key(old_attr, pk))
            self._append_index(pk, attr, payload)

    def _append_index(self, pk: bytes, attr: bytes, payload: bytes) -> None:
        cfg = self.config
        kept = payload if cfg.covering else None
        if cfg.kind is IndexKind.EAGER:
            self._rewrite_posting(attr, add=(pk, payload))
        elif cfg.kind is IndexKind.LAZY:
            self.index.put(attr, encode_posting(PostingList({pk: kept}, covering=cfg.covering)))
        else:
            self.index.put(composite_key(attr, pk), kept or b"")

    def _rewrite_posting(self, attr: bytes, add: tuple[bytes, bytes] | None = None, remove: bytes | None = None):
        raw = self.index.get(attr)
        pl = decode_posting(raw) if raw is not None else PostingList(covering=self.config.covering)
        if remove is not None:
            pl.adds.pop(remove, None)
        if add is not None:
            pk, payload = add
            pl.adds[pk] = payload if self.config.covering else None
        if pl.adds:
            self.index.put(attr, encode_posting(pl))
        else:
            self.index.delete(attr)

    # -- lookups -----------------------------------------------------------------

    def index_lookup(self, attr: bytes) -> list[tuple[bytes, bytes | None]]:
        """Candidate ``(pk, payload)`` pairs under ``attr``; may be stale under Validation."""
        cfg = self._require_index()
        if cfg.kind is IndexKind.EAGER:
            raw = self.index.get(attr)
            return decode_posting(raw).items() if raw is not None else []
        if cfg.kind is IndexKind.LAZY:
            frags = self.index.collect_versions(attr)
            if not frags:
                return []
            return resolve([decode_posting(v) for v, _, _ in frags]).items()
        prefix = attr + SEP
        out = []
        cut = len(prefix)
        covering = cfg.covering
        for e in self.index.seek(prefix):
            if not e.key.startswith(prefix):
                break
            out.append((e.key[cut:], e.value if covering else None))
        return out

    def validate(self, pk: bytes, attr: bytes) -> bool:
        """True iff the data tree currently maps ``pk`` to ``attr``."""
        return self._fetch_if_current(pk, attr) is not None

    def _fetch_if_current(self, pk: bytes, attr: bytes) -> bytes | None:
        value = self.data.get(pk)
        if value is None:
            return None
        cur_attr, payload = split_data_value(value)
        return payload if cur_attr == attr else None

    def resolved_lookup(self, attr: bytes, need_payload: bool = False) -> list[tuple[bytes, bytes | None]]:
        """Live ``(pk, payload)`` pairs under ``attr``.

        Validation tables check every candidate against the data tree. A
        non-covering Synchronous table only touches the data tree when
        ``need_payload`` is set.
        """
        cfg = self._require_index()
        candidates = self.index_lookup(attr)
        if cfg.validating:
            out = []
            for pk, _ in candidates:
                payload = self._fetch_if_current(pk, attr)
                if payload is not None:
                    out.append((pk, payload))
            return out
        if need_payload and not cfg.covering:
            return [(pk, split_data_value(self.data.get(pk))[1]) for pk, _ in candidates]
        return candidates

    # -- scans -----------------------------------------------------------------

    def scan_data(self) -> Iterator[tuple[bytes, bytes, bytes]]:
        """Live records as ``(pk, attr, payload)`` in primary-key order."""
        for e in self.data.full_scan():
            attr, _, payload = e.value.partition(SEP)
            yield e.key, attr, payload

    def scan_index(self, need_payload: bool = False) -> Iterator[tuple[bytes, bytes, bytes | None]]:
        """Live ``(attr, pk, payload)`` triples in ``(attr, pk)`` order, read from the index tree.

        Under Validation each candidate is checked exactly once against the
        data tree.
        """
        cfg = self._require_index()
        if cfg.kind is IndexKind.COMPOSITE:
            covering = cfg.covering
            raw = ((*split_composite_key(e.key), e.value if covering else None) for e in self.index.full_scan())
        elif cfg.kind is IndexKind.EAGER:
            raw = (
                (e.key, pk, payload)
                for e in self.index.full_scan()
                for pk, payload in decode_posting(e.value).items()
            )
        else:
            raw = (
                (attr, pk, payload)
                for attr, frags in groupby(self.index.full_scan(), key=lambda e: e.key)
                for pk, payload in resolve([decode_posting(e.value) for e in frags]).items()
            )
        if cfg.validating:
            for attr, pk, _ in raw:
                payload = self._fetch_if_current(pk, attr)
                if payload is not None:
                    yield attr, pk, payload
        elif need_payload and not cfg.covering:
            for attr, pk, _ in raw:
                yield attr, pk, split_data_value(self.data.get(pk))[1]
        else:
            yield from raw

    def _require_index(self) -> IndexConfig:
        if self.config is None:
            raise LookupError(f"table {self.name!r} has no secondary index")
        return self.config
