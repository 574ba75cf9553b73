"""Leveled LSM-tree storage engine with logical I/O accounting."""

from .bloom import BloomFilter, bloom_false_positive_rate, key_hashes
from .records import PUT, TOMBSTONE, CorruptionError, Entry, encoded_size, entry_size
from .run import Run
from .stats import IoStats
from .tree import PLAIN, POSTING_LIST_MERGE, LsmTree, StorageConfig

__all__ = [
    "BloomFilter",
    "CorruptionError",
    "Entry",
    "IoStats",
    "LsmTree",
    "PLAIN",
    "POSTING_LIST_MERGE",
    "PUT",
    "Run",
    "StorageConfig",
    "TOMBSTONE",
    "bloom_false_positive_rate",
    "encoded_size",
    "entry_size",
    "key_hashes",
]
