"""Secondary indexes (Eager, Lazy, Composite) under Synchronous or Validation maintenance."""

from .posting import PostingList, decode_posting, encode_posting, lazy_merge_operator, merge_fragments, resolve
from .table import (
    DEFAULT_INDEX,
    SEP,
    Coverage,
    IndexConfig,
    IndexedTable,
    IndexKind,
    Strategy,
    all_index_configs,
    composite_key,
    encode_data_value,
    split_composite_key,
    split_data_value,
)

__all__ = [
    "Coverage",
    "DEFAULT_INDEX",
    "IndexConfig",
    "IndexKind",
    "IndexedTable",
    "PostingList",
    "SEP",
    "Strategy",
    "all_index_configs",
    "composite_key",
    "decode_posting",
    "encode_data_value",
    "encode_posting",
    "lazy_merge_operator",
    "merge_fragments",
    "resolve",
    "split_composite_key",
    "split_data_value",
]
