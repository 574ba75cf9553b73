"""Join algorithms (INLJ, sort-merge, Grace hash) over LSM data and index tables."""

from .engine import DEFAULT_BUDGET, JoinConfigError, JoinOptions, check_tables, join_digest, run_join
from .hashjoin import JoinMemoryError, bkdr_hash, grace_hash_join, partition_count
from .methods import Algorithm, JoinMethod, Scenario, all_methods, parse_methods
from .rows import EMPTY_DIGEST, JoinRow, ResultDigest, grouped_join_digest, nested_loop_join, primary_side
from .sort import external_sort, kway_merge, max_fan_in, merge_join
from .spill import SpillDir, SpillFile, SpillWriter, write_spill

__all__ = [
    "Algorithm",
    "DEFAULT_BUDGET",
    "EMPTY_DIGEST",
    "JoinConfigError",
    "JoinMemoryError",
    "JoinMethod",
    "JoinOptions",
    "JoinRow",
    "ResultDigest",
    "Scenario",
    "SpillDir",
    "SpillFile",
    "SpillWriter",
    "all_methods",
    "bkdr_hash",
    "check_tables",
    "external_sort",
    "grace_hash_join",
    "grouped_join_digest",
    "join_digest",
    "kway_merge",
    "max_fan_in",
    "merge_join",
    "nested_loop_join",
    "parse_methods",
    "partition_count",
    "primary_side",
    "run_join",
    "write_spill",
]
