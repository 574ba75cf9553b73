import dataclasses
import random
from collections import defaultdict

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsmjoin.index import (
    DEFAULT_INDEX,
    IndexConfig,
    IndexedTable,
    IndexKind,
    all_index_configs,
    composite_key,
    decode_posting,
    split_composite_key,
)
from lsmjoin.lsm import StorageConfig

CONFIGS = all_index_configs()
IDS = [c.label for c in CONFIGS]
STORAGE = StorageConfig(block_size=256, write_buffer_bytes=2048, size_ratio=3)


def cfg(label):
    return IndexConfig.parse(label)


class CountingGets:
    def __init__(self, tree):
        self.tree = tree
        self.calls = 0
        self.inner = tree.get

    def __call__(self, key):
        self.calls += 1
        return self.inner(key)


def count_data_gets(table, monkeypatch):
    counter = CountingGets(table.data)
    monkeypatch.setattr(table.data, "get", counter)
    return counter


def test_twelve_configs():
    assert len(CONFIGS) == 12
    assert len(set(IDS)) == 12
    for c in CONFIGS:
        assert IndexConfig.parse(c.label) == c
    assert DEFAULT_INDEX.label == "S-Comp/cov"
    assert IndexConfig.parse("V-Lazy").label == "V-Lazy/noncov"


@pytest.mark.parametrize("bad", ["X-Comp/cov", "S-Foo/cov", "SComp/cov", "S-Comp/maybe"])
def test_parse_rejects(bad):
    with pytest.raises(ValueError):
        IndexConfig.parse(bad)


def test_composite_key_round_trip():
    assert split_composite_key(composite_key(b"nA", b"p1")) == (b"nA", b"p1")
    keys = sorted([composite_key(b"a", b"z"), composite_key(b"ab", b"a"), composite_key(b"a", b"b")])
    assert [split_composite_key(k)[0] for k in keys] == [b"a", b"a", b"ab"]


@pytest.mark.parametrize("pk,attr", [(b"", b"a"), (b"p", b""), (b"p\x00", b"a"), (b"p", b"a\x00")])
def test_rejects_bad_components(pk, attr):
    with IndexedTable("t", STORAGE, DEFAULT_INDEX) as t:
        with pytest.raises(ValueError):
            t.apply_update(pk, attr)


def test_eager_append_example():
    with IndexedTable("t", STORAGE, cfg("S-Eager/noncov")) as t:
        t.apply_update(b"p1", b"n1")
        t.apply_update(b"p3", b"n1")
        assert decode_posting(t.index.get(b"n1")).keys() == [b"p1", b"p3"]


def test_validation_composite_keeps_stale_entry():
    with IndexedTable("t", STORAGE, cfg("V-Comp/noncov")) as t:
        t.apply_update(b"p1", b"nA")
        t.apply_update(b"p1", b"nB")
        keys = [e.key for e in t.index.full_scan()]
        assert keys == [composite_key(b"nA", b"p1"), composite_key(b"nB", b"p1")]
        assert t.data.get(b"p1").startswith(b"nB\x00")
        assert t.resolved_lookup(b"nA") == []


def test_synchronous_composite_removes_old_entry():
    with IndexedTable("t", STORAGE, cfg("S-Comp/noncov")) as t:
        t.apply_update(b"p1", b"nA")
        t.apply_update(b"p1", b"nB")
        assert [e.key for e in t.index.full_scan()] == [composite_key(b"nB", b"p1")]


def test_eager_absent_lookup_uses_bloom():
    with IndexedTable("t", STORAGE, cfg("S-Eager/cov")) as t:
        for i in range(200):
            t.apply_update(b"p%d" % i, b"n%d" % (i % 50))
        t.flush()
        before = t.index.io.snapshot()
        assert t.index_lookup(b"absent") == []
        delta = t.index.io - before
        assert delta.bloom_negative >= 1


def test_lazy_fragments_across_levels():
    with IndexedTable("t", STORAGE, cfg("S-Lazy/noncov")) as t:
        t.apply_update(b"p2", b"n")
        t.flush()
        t.index.compact(1)
        t.apply_update(b"p1", b"n")
        t.apply_update(b"p3", b"n")
        t.flush()
        levels = sorted(lvl for _, _, lvl in t.index.collect_versions(b"n"))
        assert levels == [1, 2]
        assert [pk for pk, _ in t.index_lookup(b"n")] == [b"p1", b"p2", b"p3"]


def test_lazy_sync_update_does_not_read_index():
    with IndexedTable("t", STORAGE, cfg("S-Lazy/noncov")) as t:
        t.apply_update(b"p1", b"n1")
        t.flush()
        before = t.index.io.snapshot()
        t.apply_update(b"p1", b"n2")
        assert (t.index.io - before).bloom_probes == 0
        assert t.resolved_lookup(b"n1") == []
        assert [pk for pk, _ in t.resolved_lookup(b"n2")] == [b"p1"]


def test_composite_prefix_lookup():
    with IndexedTable("t", STORAGE, cfg("S-Comp/noncov")) as t:
        t.apply_update(b"p1", b"nA")
        t.apply_update(b"p2", b"nA")
        t.apply_update(b"p3", b"nB")
        t.apply_update(b"p4", b"nAA")
        assert [pk for pk, _ in t.index_lookup(b"nA")] == [b"p1", b"p2"]


def test_validate_examples():
    with IndexedTable("t", STORAGE, cfg("V-Eager/noncov")) as t:
        t.apply_update(b"p1", b"n1")
        t.apply_update(b"p1", b"n2")
        assert [pk for pk, _ in t.index_lookup(b"n1")] == [b"p1"]
        assert not t.validate(b"p1", b"n1")
        assert t.validate(b"p1", b"n2")
        assert not t.validate(b"p9", b"n2")


@pytest.mark.parametrize("kind", ["Eager", "Lazy", "Comp"])
def test_validation_charges_one_lookup_per_candidate(kind, monkeypatch):
    with IndexedTable("t", STORAGE, cfg(f"V-{kind}/cov")) as t:
        t.apply_update(b"p1", b"n")
        t.apply_update(b"p2", b"n")
        t.apply_update(b"p3", b"n")
        t.apply_update(b"p2", b"m")
        t.apply_update(b"p3", b"m")
        counter = count_data_gets(t, monkeypatch)
        assert [pk for pk, _ in t.resolved_lookup(b"n")] == [b"p1"]
        assert counter.calls == 3
        counter.calls = 0
        assert t.resolved_lookup(b"zz") == []
        assert counter.calls == 0


@pytest.mark.parametrize("kind", ["Eager", "Lazy", "Comp"])
def test_synchronous_covering_skips_data_tree(kind, monkeypatch):
    with IndexedTable("t", STORAGE, cfg(f"S-{kind}/cov")) as t:
        t.apply_update(b"p1", b"n", b"pay")
        counter = count_data_gets(t, monkeypatch)
        assert t.resolved_lookup(b"n", need_payload=True) == [(b"p1", b"pay")]
        assert counter.calls == 0


def test_noncovering_fetches_payload_on_demand(monkeypatch):
    with IndexedTable("t", STORAGE, cfg("S-Comp/noncov")) as t:
        t.apply_update(b"p1", b"n", b"pay")
        counter = count_data_gets(t, monkeypatch)
        assert t.resolved_lookup(b"n") == [(b"p1", None)]
        assert counter.calls == 0
        assert t.resolved_lookup(b"n", need_payload=True) == [(b"p1", b"pay")]
        assert counter.calls == 1


def test_table_without_index():
    with IndexedTable("t", STORAGE) as t:
        t.apply_update(b"p", b"n", b"x")
        assert list(t.scan_data()) == [(b"p", b"n", b"x")]
        with pytest.raises(LookupError):
            t.index_lookup(b"n")


def _expected(data):
    inv = defaultdict(set)
    for pk, (attr, payload) in data.items():
        inv[attr].add((pk, payload))
    return inv


@pytest.mark.parametrize("config", CONFIGS, ids=IDS)
def test_freshness_after_random_updates(config):
    rng = random.Random(hash(config.label) & 0xFFFF)
    data = {}
    with IndexedTable("t", STORAGE, config) as t:
        for i in range(10_000):
            pk = b"p%03d" % rng.randrange(300)
            attr = b"a%02d" % rng.randrange(40)
            payload = b"x%d" % i
            t.apply_update(pk, attr, payload)
            data[pk] = (attr, payload)
        assert {pk: (a, p) for pk, a, p in t.scan_data()} == data
        expected = _expected(data)
        for n in range(42):
            attr = b"a%02d" % n
            got = set(t.resolved_lookup(attr, need_payload=True))
            assert got == expected.get(attr, set())
        scanned = list(t.scan_index(need_payload=True))
        assert scanned == sorted((a, pk, p) for pk, (a, p) in data.items())


@given(
    updates=st.lists(st.tuples(st.integers(0, 15), st.integers(0, 5)), max_size=120),
    label=st.sampled_from(IDS),
    flush_every=st.integers(3, 40),
)
@settings(max_examples=60)
def test_index_matches_data_property(updates, label, flush_every):
    tiny = dataclasses.replace(STORAGE, block_size=128, write_buffer_bytes=512, size_ratio=2)
    data = {}
    with IndexedTable("t", tiny, cfg(label)) as t:
        for i, (p, a) in enumerate(updates):
            pk, attr = b"p%d" % p, b"a%d" % a
            t.apply_update(pk, attr, b"v%d" % i)
            data[pk] = (attr, b"v%d" % i)
            if i % flush_every == 0:
                t.flush()
        expected = _expected(data)
        for a in range(6):
            attr = b"a%d" % a
            assert set(t.resolved_lookup(attr, need_payload=True)) == expected.get(attr, set())
        if cfg(label).kind is IndexKind.COMPOSITE and not cfg(label).validating:
            assert sum(1 for _ in t.index.full_scan()) == len(data)
