"""Shared builders for tests that need populated tables."""

from collections import Counter

from lsmjoin.index import IndexedTable
from lsmjoin.join import run_join
from lsmjoin.workload import final_state


def build(name, storage, cfg, stream):
    t = IndexedTable(name, storage, cfg)
    for u in stream:
        t.apply_update(u.pk, u.attr, u.payload)
    t.flush()
    return t


def build_pair(method, storage, stream_r, stream_s):
    return build("R", storage, method.r_index, stream_r), build("S", storage, method.s_index, stream_s)


def row_multiset(rows):
    return Counter((r.attr, r.left, r.right) for r in rows)


def oracle_multiset(stream_r, stream_s, primary):
    live_r = final_state(stream_r)
    live_s = final_state(stream_s)
    out = Counter()
    for rpk, rattr in live_r.items():
        if primary:
            if rattr in live_s:
                out[(rattr, rpk, rattr)] += 1
        else:
            for spk, sattr in live_s.items():
                if sattr == rattr:
                    out[(rattr, rpk, spk)] += 1
    return out


def join_rows(method, r, s, options=None):
    return row_multiset(run_join(method, r, s, options))
