from __future__ import annotations

from dataclasses import asdict, dataclass, fields


@dataclass
class IoStats:
    """Logical I/O event counters.

    Only data blocks are charged; fence indexes and Bloom bits live in memory.
    Spill and partition files written by joins are charged to the stats of the
    table they were produced from.
    """

    blocks_read: int = 0
    blocks_written: int = 0
    seeks: int = 0
    bloom_probes: int = 0
    bloom_negative: int = 0
    bloom_false_positive: int = 0

    @property
    def io(self) -> int:
        """Block transfers (reads + writes), the unit the cost model predicts."""
        return self.blocks_read + self.blocks_written

    def snapshot(self) -> IoStats:
        return IoStats(**asdict(self))

    def reset(self) -> None:
        for f in fields(self):
            setattr(self, f.name, 0)

    def __sub__(self, other: IoStats) -> IoStats:
        return IoStats(**{f.name: getattr(self, f.name) - getattr(other, f.name) for f in fields(self)})

    def __add__(self, other: IoStats) -> IoStats:
        return IoStats(**{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)})

    def as_dict(self) -> dict[str, int]:
        return asdict(self)
