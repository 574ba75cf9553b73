"""Record and block encoding shared by run files and join spill files.

A record is ``[key_len varint][key][val_len varint][val][seq u64][kind u8]``.
Records are packed into fixed-size blocks and never split across blocks; a
block tail is zero-padded, and a zero length byte terminates decoding (keys
are never empty). A record larger than one block starts on a block boundary
and occupies ``ceil(size / B)`` whole blocks.
"""

from __future__ import annotations

import struct
from typing import Iterable, Iterator, NamedTuple

PUT = 0
TOMBSTONE = 1

_TAIL = struct.Struct("<QB")
HEADER = struct.Struct("<4sIQI")
MAGIC = b"LSMJ"
FORMAT_VERSION = 1


class CorruptionError(ValueError):
    """Raised when on-disk or encoded bytes cannot be decoded."""


class Entry(NamedTuple):
    key: bytes
    value: bytes
    seq: int
    kind: int = PUT

    @property
    def is_tombstone(self) -> bool:
        return self.kind == TOMBSTONE


def varint_len(n: int) -> int:
    size = 1
    while n >= 0x80:
        n >>= 7
        size += 1
    return size


def _varint(n: int) -> bytes:
    if n < 0x80:
        return bytes((n,))
    out = bytearray()
    while n >= 0x80:
        out.append((n & 0x7F) | 0x80)
        n >>= 7
    out.append(n)
    return bytes(out)


def encoded_size(key_len: int, value_len: int) -> int:
    """Bytes a record occupies on disk; this is the entry size ``e``."""
    return varint_len(key_len) + key_len + varint_len(value_len) + value_len + _TAIL.size


def entry_size(entry: Entry) -> int:
    return encoded_size(len(entry.key), len(entry.value))


def encode_record(entry: Entry) -> bytes:
    key, value = entry.key, entry.value
    return b"".join((_varint(len(key)), key, _varint(len(value)), value, _TAIL.pack(entry.seq, entry.kind)))


def decode_records(buf: bytes) -> list[Entry]:
    """Decode every record in one block group, stopping at padding."""
    out = []
    pos = 0
    end = len(buf)
    unpack_tail = _TAIL.unpack_from
    try:
        while pos < end:
            n = buf[pos]
            if n == 0:
                break
            pos += 1
            if n & 0x80:
                n &= 0x7F
                shift = 7
                while True:
                    b = buf[pos]
                    pos += 1
                    n |= (b & 0x7F) << shift
                    if not b & 0x80:
                        break
                    shift += 7
            key = buf[pos:pos + n]
            pos += n
            n = buf[pos]
            pos += 1
            if n & 0x80:
                n &= 0x7F
                shift = 7
                while True:
                    b = buf[pos]
                    pos += 1
                    n |= (b & 0x7F) << shift
                    if not b & 0x80:
                        break
                    shift += 7
            value = buf[pos:pos + n]
            pos += n
            seq, kind = unpack_tail(buf, pos)
            pos += 9
            if kind > TOMBSTONE or len(value) != n:
                raise CorruptionError(f"bad record at offset {pos}")
            out.append(Entry(key, value, seq, kind))
    except (IndexError, struct.error) as exc:
        raise CorruptionError(f"truncated record near offset {pos}") from exc
    return out


class BlockGroup(NamedTuple):
    """One fence-indexed unit: a single block, or several for an oversized record."""

    first_key: bytes
    nblocks: int
    payload: bytes
    entries: list[Entry]
    data_bytes: int


_SMALL = [bytes((i,)) for i in range(0x80)]


def pack_blocks(entries: Iterable[Entry], block_size: int) -> Iterator[BlockGroup]:
    """Pack sorted entries into block groups of ``block_size`` bytes each."""
    parts: list[bytes] = []
    group: list[Entry] = []
    used = 0
    small = _SMALL
    pack_tail = _TAIL.pack
    join = b"".join
    for entry in entries:
        key, value = entry.key, entry.value
        kl, vl = len(key), len(value)
        if kl < 0x80 and vl < 0x80:
            rec = join((small[kl], key, small[vl], value, pack_tail(entry.seq, entry.kind)))
        else:
            rec = encode_record(entry)
        size = len(rec)
        if used and used + size > block_size:
            parts.append(b"\x00" * (block_size - used))
            yield BlockGroup(group[0].key, 1, join(parts), group, used)
            parts, group, used = [], [], 0
        if size > block_size:
            nblocks = -(-size // block_size)
            yield BlockGroup(key, nblocks, rec + b"\x00" * (nblocks * block_size - size), [entry], size)
            continue
        parts.append(rec)
        group.append(entry)
        used += size
    if used:
        parts.append(b"\x00" * (block_size - used))
        yield BlockGroup(group[0].key, 1, join(parts), group, used)
