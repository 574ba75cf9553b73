"""Posting-list values stored under a join-attribute key.

Byte layout::

    [count_adds u32][(len u32, pk)...][count_removes u32][(len u32, pk)...]
    [covering u8][(len u32, payload)... one per add, in add order]

Encoding is canonical: primary keys are written in sorted order, so equal
lists encode identically.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from ..lsm.records import CorruptionError

_U32 = struct.Struct("<I")


@dataclass
class PostingList:
    """Primary keys added (with optional covering payloads) and removed under one attribute."""

    adds: dict[bytes, bytes | None] = field(default_factory=dict)
    removes: set[bytes] = field(default_factory=set)
    covering: bool = False

    def keys(self) -> list[bytes]:
        return sorted(self.adds)

    def items(self) -> list[tuple[bytes, bytes | None]]:
        return sorted(self.adds.items())

    def __len__(self) -> int:
        return len(self.adds)


def encode_posting(pl: PostingList) -> bytes:
    adds = sorted(pl.adds)
    parts = [_U32.pack(len(adds))]
    for pk in adds:
        parts.append(_U32.pack(len(pk)))
        parts.append(pk)
    removes = sorted(pl.removes)
    parts.append(_U32.pack(len(removes)))
    for pk in removes:
        parts.append(_U32.pack(len(pk)))
        parts.append(pk)
    parts.append(b"\x01" if pl.covering else b"\x00")
    if pl.covering:
        for pk in adds:
            payload = pl.adds[pk] or b""
            parts.append(_U32.pack(len(payload)))
            parts.append(payload)
    return b"".join(parts)


def _read_keys(buf: bytes, pos: int) -> tuple[list[bytes], int]:
    (n,) = _U32.unpack_from(buf, pos)
    pos += 4
    keys = []
    for _ in range(n):
        (ln,) = _U32.unpack_from(buf, pos)
        pos += 4
        keys.append(buf[pos:pos + ln])
        pos += ln
    return keys, pos


def decode_posting(buf: bytes) -> PostingList:
    try:
        adds, pos = _read_keys(buf, 0)
        removes, pos = _read_keys(buf, pos)
        covering = buf[pos] == 1
        pos += 1
        if covering:
            payloads = []
            for _ in adds:
                (ln,) = _U32.unpack_from(buf, pos)
                pos += 4
                payloads.append(buf[pos:pos + ln])
                pos += ln
        else:
            payloads = [None] * len(adds)
    except (IndexError, struct.error) as exc:
        raise CorruptionError("truncated posting list") from exc
    if pos != len(buf):
        raise CorruptionError(f"posting list length mismatch ({pos} != {len(buf)})")
    return PostingList(dict(zip(adds, payloads)), set(removes), covering)


def merge_fragments(newer: PostingList, older: PostingList) -> PostingList:
    """Fold an older fragment under a newer one; the newer fragment's adds and removes win."""
    adds = {pk: v for pk, v in older.adds.items() if pk not in newer.removes}
    adds.update(newer.adds)
    removes = (older.removes - newer.adds.keys()) | newer.removes
    return PostingList(adds, removes, newer.covering or older.covering)


def resolve(fragments: list[PostingList]) -> PostingList:
    """Collapse fragments given newest first into one list with no removes."""
    out = PostingList()
    for frag in reversed(fragments):
        out = merge_fragments(frag, out)
    out.removes = set()
    return out


def lazy_merge_operator(newer: bytes, older: bytes | None, bottom: bool) -> bytes | None:
    """Merge operator for Lazy index trees.

    Removes must survive until nothing older can hold the key, so they are
    only discarded at the bottom level, where an empty list drops the key.
    """
    n = decode_posting(newer)
    merged = merge_fragments(n, decode_posting(older)) if older is not None else n
    if bottom:
        if not merged.adds:
            return None
        if merged.removes:
            merged.removes = set()
        elif older is None:
            return newer
    return encode_posting(merged)
