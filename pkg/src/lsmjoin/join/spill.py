"""Temporary spill files for external sorting and hash partitioning.

Spill files hold ``(attr 0x00 pk, payload)`` records in the run-file record
layout, packed into whole blocks, with no fences or filters. Every block
written or read is charged to the ``IoStats`` the file was created with,
which the join engine points at the owning table's data tree.
"""

from __future__ import annotations

import os
import shutil
import tempfile
from itertools import count
from typing import Iterable, Iterator

from ..index.table import SEP
from ..lsm.records import PUT, Entry, decode_records, encode_record, encoded_size
from ..lsm.stats import IoStats

# (join_attr, primary_key, payload)
Triple = tuple[bytes, bytes, "bytes | None"]


def triple_size(attr: bytes, pk: bytes, payload: bytes | None) -> int:
    """On-disk bytes of one spilled triple; equal to the source data entry's size."""
    return encoded_size(len(attr) + 1 + len(pk), len(payload or b""))


class SpillDir:
    """A private temporary directory that hands out fresh spill-file paths."""

    def __init__(self, parent: str | None = None):
        self.path = tempfile.mkdtemp(prefix="lsmjoin-spill-", dir=parent)
        self._ids = count()

    def new_path(self, tag: str) -> str:
        return os.path.join(self.path, f"{tag}-{next(self._ids):06d}.spill")

    def cleanup(self) -> None:
        shutil.rmtree(self.path, ignore_errors=True)

    def __enter__(self) -> SpillDir:
        return self

    def __exit__(self, *exc) -> None:
        self.cleanup()


class SpillWriter:
    """Appends triples to a spill file one block at a time."""

    def __init__(self, path: str, block_size: int, io: IoStats):
        self.path = path
        self.block_size = block_size
        self.io = io
        self._f = open(path, "wb")
        self._parts: list[bytes] = []
        self._used = 0
        self._groups: list[int] = []
        self.count = 0
        self.data_bytes = 0

    def add(self, attr: bytes, pk: bytes, payload: bytes | None) -> None:
        rec = encode_record(Entry(attr + SEP + pk, payload or b"", 0, PUT))
        size = len(rec)
        bs = self.block_size
        if self._used and self._used + size > bs:
            self._flush_block()
        self.count += 1
        self.data_bytes += size
        if size > bs:
            nblocks = -(-size // bs)
            self._emit(rec + b"\x00" * (nblocks * bs - size), nblocks)
            return
        self._parts.append(rec)
        self._used += size

    def extend(self, triples: Iterable[Triple]) -> None:
        for attr, pk, payload in triples:
            self.add(attr, pk, payload)

    def _flush_block(self) -> None:
        self._parts.append(b"\x00" * (self.block_size - self._used))
        self._emit(b"".join(self._parts), 1)
        self._parts = []
        self._used = 0

    def _emit(self, payload: bytes, nblocks: int) -> None:
        self._f.write(payload)
        self._groups.append(nblocks)
        self.io.blocks_written += nblocks

    def close(self) -> SpillFile:
        if self._used:
            self._flush_block()
        self._f.close()
        return SpillFile(self.path, self.block_size, self._groups, self.count, self.data_bytes, self.io)


class SpillFile:
    """A finished spill file; iteration streams its triples and charges each block read."""

    def __init__(self, path: str, block_size: int, groups: list[int], count: int, data_bytes: int, io: IoStats):
        self.path = path
        self.block_size = block_size
        self.groups = groups
        self.count = count
        self.data_bytes = data_bytes
        self.io = io

    @property
    def block_count(self) -> int:
        return sum(self.groups)

    def __len__(self) -> int:
        return self.count

    def __iter__(self) -> Iterator[Triple]:
        bs = self.block_size
        io = self.io
        with open(self.path, "rb") as f:
            for nblocks in self.groups:
                buf = f.read(nblocks * bs)
                io.blocks_read += nblocks
                for e in decode_records(buf):
                    attr, _, pk = e.key.partition(SEP)
                    yield attr, pk, e.value

    def remove(self) -> None:
        try:
            os.unlink(self.path)
        except FileNotFoundError:
            pass


def write_spill(path: str, triples: Iterable[Triple], block_size: int, io: IoStats) -> SpillFile:
    w = SpillWriter(path, block_size, io)
    w.extend(triples)
    return w.close()
