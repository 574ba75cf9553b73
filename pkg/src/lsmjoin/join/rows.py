"""Join output rows, the order-independent result digest, and in-memory reference joins."""

from __future__ import annotations

import hashlib
from collections import Counter, defaultdict
from typing import Iterable, NamedTuple

_MASK64 = (1 << 64) - 1


class JoinRow(NamedTuple):
    attr: bytes
    left: bytes
    right: bytes
    left_payload: bytes | None = None
    right_payload: bytes | None = None


def row_hash(attr: bytes, left: bytes, right: bytes) -> int:
    h = hashlib.blake2b(attr + b"\x00" + left + b"\x00" + right, digest_size=8).digest()
    return int.from_bytes(h, "little")


class ResultDigest:
    """Counts rows and folds their hashes by addition mod 2^64, so emission order does not matter."""

    __slots__ = ("rows", "value")

    def __init__(self):
        self.rows = 0
        self.value = 0

    def add(self, attr: bytes, left: bytes, right: bytes) -> None:
        self.rows += 1
        self.value = (self.value + row_hash(attr, left, right)) & _MASK64

    def consume(self, rows: Iterable[JoinRow]) -> ResultDigest:
        for r in rows:
            self.add(r.attr, r.left, r.right)
        return self

    @property
    def hex(self) -> str:
        return f"{self.value:016x}"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ResultDigest) and (self.rows, self.value) == (other.rows, other.value)

    def __repr__(self) -> str:
        return f"ResultDigest(rows={self.rows}, digest={self.hex})"


EMPTY_DIGEST = ResultDigest().hex


def nested_loop_join(
    left: Iterable[tuple[bytes, bytes]], right: Iterable[tuple[bytes, bytes]]
) -> Counter[tuple[bytes, bytes, bytes]]:
    """Brute-force reference: ``left`` and ``right`` are ``(pk, attr)`` pairs of live records."""
    right = list(right)
    out: Counter = Counter()
    for lpk, lattr in left:
        for rpk, rattr in right:
            if lattr == rattr:
                out[(lattr, lpk, rpk)] += 1
    return out


def grouped_join_digest(
    left: Iterable[tuple[bytes, bytes]], right: Iterable[tuple[bytes, bytes]]
) -> ResultDigest:
    """Same result as :func:`nested_loop_join`, computed by grouping; for larger inputs."""
    by_attr: dict[bytes, list[bytes]] = defaultdict(list)
    for rpk, rattr in right:
        by_attr[rattr].append(rpk)
    d = ResultDigest()
    for lpk, lattr in left:
        for rpk in by_attr.get(lattr, ()):
            d.add(lattr, lpk, rpk)
    return d


def primary_side(records: Iterable[tuple[bytes, bytes]]) -> list[tuple[bytes, bytes]]:
    """View a table through its primary key, for joins where R references S's key."""
    return [(pk, pk) for pk, _ in records]
