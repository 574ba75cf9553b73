import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import build, build_pair, join_rows, oracle_multiset
from lsmjoin.index import DEFAULT_INDEX, IndexConfig
from lsmjoin.join import (
    EMPTY_DIGEST,
    Algorithm,
    JoinConfigError,
    JoinMemoryError,
    JoinMethod,
    JoinOptions,
    ResultDigest,
    Scenario,
    SpillDir,
    all_methods,
    bkdr_hash,
    external_sort,
    grace_hash_join,
    join_digest,
    kway_merge,
    max_fan_in,
    merge_join,
    nested_loop_join,
    parse_methods,
    partition_count,
    run_join,
    write_spill,
)
from lsmjoin.lsm import IoStats, StorageConfig
from lsmjoin.workload import Update, WorkloadSpec, generate

STORAGE = StorageConfig(block_size=512, write_buffer_bytes=4096, size_ratio=4)
SMALL_BUDGET = JoinOptions(budget=2048)


def up(table, pk, attr, payload=b""):
    return Update(table, pk, attr, payload)


# -- method catalogue --------------------------------------------------------


def test_catalogue():
    methods = all_methods()
    assert len(methods) == 78
    assert len({m.id for m in methods}) == 78
    codes = {m.code for m in methods}
    assert codes == {
        "INLJ-P", "INLJ-PS", "INLJ-N", "INLJ-NS", "INLJ-SS",
        "SJ-P", "SJ-PS", "SJ-N", "SJ-NS", "SJ-SS", "HJ-P", "HJ-N",
    }
    assert [m.id for m in methods if m.pathological] == ["INLJ-N"]
    assert len(all_methods(include_pathological=False)) == 77
    for m in methods:
        assert JoinMethod.parse(m.id) == m


def test_scenarios_and_index_sides():
    m = JoinMethod.parse("SJ-PS/V-Lazy/cov")
    assert m.primary and m.r_index == IndexConfig.parse("V-Lazy/cov") and m.s_index is None
    m = JoinMethod.parse("INLJ-NS/S-Eager/noncov")
    assert not m.primary and m.r_index is None and m.s_index.label == "S-Eager/noncov"
    m = JoinMethod.parse("SJ-SS/S-Comp/cov")
    assert m.r_index == m.s_index == DEFAULT_INDEX


@pytest.mark.parametrize("bad", ["HJ-PS", "HJ-SS/S-Comp/cov", "SJ-P/S-Comp/cov", "XJ-P", "SJ-Q"])
def test_invalid_methods(bad):
    with pytest.raises(ValueError):
        JoinMethod.parse(bad)


def test_parse_method_lists():
    assert len(parse_methods("all")) == 78
    ms = parse_methods("INLJ-P, SJ-PS ,HJ-N")
    assert [m.id for m in ms] == ["INLJ-P", "SJ-PS/S-Comp/cov", "HJ-N"]
    with pytest.raises(ValueError):
        parse_methods("")


def test_invalid_field_combination():
    with pytest.raises(ValueError):
        JoinMethod(Algorithm.HJ, Scenario.PS, DEFAULT_INDEX)
    with pytest.raises(ValueError):
        JoinMethod(Algorithm.SJ, Scenario.NS, None)


# -- digests and oracle ----------------------------------------------------------


def test_digest_is_order_independent():
    a, b = ResultDigest(), ResultDigest()
    rows = [(b"a", b"1", b"2"), (b"b", b"3", b"4"), (b"a", b"1", b"2")]
    for r in rows:
        a.add(*r)
    for r in reversed(rows):
        b.add(*r)
    assert a == b and a.rows == 3
    c = ResultDigest()
    c.add(b"a", b"1", b"2")
    assert c != a
    assert ResultDigest().hex == EMPTY_DIGEST


def test_nested_loop_oracle_example():
    got = nested_loop_join([(b"r1", b"A"), (b"r2", b"B")], [(b"s1", b"A"), (b"s2", b"A")])
    assert got == {(b"A", b"r1", b"s1"): 1, (b"A", b"r1", b"s2"): 1}


# -- INLJ ------------------------------------------------------------------------


def test_inlj_p_example():
    r = [up("R", b"r1", b"A"), up("R", b"r2", b"B"), up("R", b"r3", b"A")]
    s = [up("S", b"A", b"x"), up("S", b"C", b"y")]
    m = JoinMethod.parse("INLJ-P")
    rt, st_ = build_pair(m, STORAGE, r, s)
    with rt, st_:
        assert join_rows(m, rt, st_) == {(b"A", b"r1", b"A"): 1, (b"A", b"r3", b"A"): 1}


def test_empty_outer_touches_nothing():
    m = JoinMethod.parse("INLJ-P")
    rt, st_ = build_pair(m, STORAGE, [], [up("S", b"k", b"a")])
    with rt, st_:
        before = st_.data.io.snapshot()
        assert join_rows(m, rt, st_) == {}
        assert (st_.data.io - before).bloom_probes == 0


def test_missing_index_fails_before_io():
    m = JoinMethod.parse("INLJ-NS/S-Eager/cov")
    with build("R", STORAGE, None, []) as r, build("S", STORAGE, DEFAULT_INDEX, []) as s:
        before = r.io_total() + s.io_total()
        with pytest.raises(JoinConfigError):
            run_join(m, r, s)
        assert r.io_total() + s.io_total() == before


def test_inlj_zero_matching_reads_only_false_positives():
    spec = WorkloadSpec(n_r=3000, n_s=3000, e=64, eps_r=0.0, eps_s=0.0, seed=3)
    stream_r, stream_s, _ = generate(spec)
    m = JoinMethod.parse("INLJ-P")
    storage = StorageConfig(block_size=4096, write_buffer_bytes=16 * 1024, size_ratio=4)
    rt, st_ = build_pair(m, storage, stream_r, stream_s)
    with rt, st_:
        before = st_.data.io.snapshot()
        assert join_rows(m, rt, st_) == {}
        delta = st_.data.io - before
        L = st_.data.level_count()
        # out-of-range probes are settled by the in-memory fences
        assert delta.blocks_read <= delta.bloom_false_positive
        assert delta.blocks_read <= 3 * 3000 * L * 0.0082 + 5


def test_inlj_cost_monotone_in_matching_rate():
    storage = StorageConfig(block_size=4096, write_buffer_bytes=16 * 1024, size_ratio=4)
    m = JoinMethod.parse("INLJ-P")
    reads = []
    for eps in (0.0, 0.25, 0.5, 1.0):
        spec = WorkloadSpec(n_r=2000, n_s=2000, e=64, eps_r=eps, eps_s=eps, seed=1)
        stream_r, stream_s, _ = generate(spec)
        rt, st_ = build_pair(m, storage, stream_r, stream_s)
        with rt, st_:
            before = st_.data.io.blocks_read
            for _ in run_join(m, rt, st_):
                pass
            reads.append(st_.data.io.blocks_read - before)
    assert reads == sorted(reads)


# -- sort ------------------------------------------------------------------------


def _triples(n, seed=0, attrs=50):
    rng = random.Random(seed)
    return [(b"a%04d" % rng.randrange(attrs), b"p%06d" % i, b"x" * rng.randrange(5, 30)) for i in range(n)]


def test_external_sort_run_counts(tmp_path):
    with SpillDir(str(tmp_path)) as spill:
        data = _triples(400)
        total = sum(len(a) + len(p) + len(x) for a, p, x in data)
        io = IoStats()
        runs = external_sort(data, 10**9, spill, io, 512)
        assert len(runs) == 1
        assert io.blocks_written == runs[0].block_count
        runs = external_sort(data, total // 4 + 1, spill, io, 512)
        assert 4 <= len(runs) <= 6
        for r in runs:
            keys = [(a, p) for a, p, _ in r]
            assert keys == sorted(keys)
        presorted = sorted(data)
        assert len(external_sort(presorted, 10**9, spill, io, 512)) == 1


def test_kway_merge_single_and_multi_pass(tmp_path):
    with SpillDir(str(tmp_path)) as spill:
        data = _triples(600, seed=2)
        io = IoStats()
        runs = external_sort(data, 800, spill, io, 256)
        assert len(runs) > 4
        merged = kway_merge(runs, 2, spill, io, 256)
        got = list(merged)
        assert [(a, p) for a, p, _ in got] == sorted((a, p) for a, p, _ in data)
        single = external_sort(data[:10], 10**6, spill, io, 256)
        before = io.snapshot()
        copy = kway_merge(single, max_fan_in(4096, 256), spill, io, 256)
        delta = io - before
        assert delta.blocks_read == delta.blocks_written == copy.block_count
        with pytest.raises(ValueError):
            kway_merge([copy], 1, spill, io, 256)


def test_merge_join_handles_groups_beyond_budget(tmp_path):
    left = [(b"a", b"l%d" % i, b"") for i in range(3)]
    right = [(b"a", b"r%03d" % i, b"y" * 40) for i in range(100)]
    with SpillDir(str(tmp_path)) as spill:
        io = IoStats()
        rows = list(merge_join(iter(left), iter(right), 500, spill, io, 256))
        assert len(rows) == 300
        assert io.blocks_written > 0


def test_sj_ss_example():
    m = JoinMethod.parse("SJ-SS/S-Comp/cov")
    r = [up("R", b"r1", b"A"), up("R", b"r3", b"A")]
    s = [up("S", b"s1", b"A"), up("S", b"s2", b"B")]
    rt, st_ = build_pair(m, STORAGE, r, s)
    with rt, st_:
        assert join_rows(m, rt, st_) == {(b"A", b"r1", b"s1"): 1, (b"A", b"r3", b"s1"): 1}


def test_sj_one_side_empty_still_scans_other():
    m = JoinMethod.parse("SJ-N")
    r = [up("R", b"r%d" % i, b"a%d" % i) for i in range(200)]
    rt, st_ = build_pair(m, STORAGE, r, [])
    with rt, st_:
        before = rt.data.io.snapshot()
        assert join_rows(m, rt, st_) == {}
        assert (rt.data.io - before).blocks_written > 0


def _passes(method, n=10_000, budget=128 * 1024):
    spec = WorkloadSpec(n_r=n, n_s=n, e=64, d_s=2, eps_r=0.8, eps_s=0.8, seed=5)
    stream_r, stream_s, _ = generate(spec)
    storage = StorageConfig(block_size=4096, write_buffer_bytes=32 * 1024, size_ratio=5)
    rt, st_ = build_pair(method, storage, stream_r, stream_s)
    with rt, st_:
        r0, s0 = rt.data.io.snapshot(), st_.data.io.snapshot()
        for _ in run_join(method, rt, st_, JoinOptions(budget=budget)):
            pass
        out = []
        for t, b in ((rt, r0), (st_, s0)):
            d = t.data.io - b
            out.append(d.io / (t.data.disk_bytes / 4096))
        return out


def test_sort_merge_five_passes():
    for p in _passes(JoinMethod.parse("SJ-N")):
        assert 4.5 <= p <= 5.5


def test_hash_join_three_passes():
    for p in _passes(JoinMethod.parse("HJ-N")):
        assert 2.5 <= p <= 3.5


# -- hash ------------------------------------------------------------------------


def test_bkdr_hash():
    assert bkdr_hash(b"") == 0
    assert bkdr_hash(b"abc") == 97 * 131**2 + 98 * 131 + 99 == 1677554
    assert bkdr_hash(b"x" * 40) < 2**64


def test_partition_count():
    assert partition_count(0, 100) == 1
    assert partition_count(100, 100) == 2
    assert partition_count(1000, 100) == 13


@pytest.mark.parametrize("parts", [1, 3, 16])
def test_grace_hash_matches_oracle(tmp_path, parts):
    left = _triples(1000, seed=7, attrs=300)
    right = _triples(1000, seed=8, attrs=300)
    expected = nested_loop_join([(p, a) for a, p, _ in left], [(p, a) for a, p, _ in right])
    with SpillDir(str(tmp_path)) as spill:
        rows = grace_hash_join(iter(left), iter(right), 4096, spill, IoStats(), IoStats(), 512, parts)
        got = {}
        for r in rows:
            got[(r.attr, r.left, r.right)] = got.get((r.attr, r.left, r.right), 0) + 1
    assert got == expected


def test_grace_hash_all_identical_attrs(tmp_path):
    left = [(b"same", b"l%04d" % i, b"p" * 20) for i in range(300)]
    right = [(b"same", b"r%04d" % i, b"q" * 20) for i in range(300)]
    with SpillDir(str(tmp_path)) as spill:
        n = sum(1 for _ in grace_hash_join(iter(left), iter(right), 1024, spill, IoStats(), IoStats(), 256, 1))
    assert n == 300 * 300


def test_grace_hash_gives_up_after_recursion(tmp_path, monkeypatch):
    import lsmjoin.join.hashjoin as hj

    monkeypatch.setattr(hj, "partition_of", lambda attr, parts, depth, cache=None: 0)
    left = [(b"a%03d" % i, b"l", b"x" * 50) for i in range(200)]
    right = [(b"a%03d" % i, b"r", b"x" * 50) for i in range(200)]
    with SpillDir(str(tmp_path)) as spill:
        with pytest.raises(JoinMemoryError):
            list(grace_hash_join(iter(left), iter(right), 512, spill, IoStats(), IoStats(), 256, 2))


# -- cross-method agreement ------------------------------------------------------------


def _check_all_methods(spec, options=SMALL_BUDGET):
    stream_r, stream_s, _ = generate(spec)
    expected = {fam: oracle_multiset(stream_r, stream_s, fam) for fam in (True, False)}
    tables = {}
    try:
        for m in all_methods():
            for side, cfg, stream in (("R", m.r_index, stream_r), ("S", m.s_index, stream_s)):
                if (side, cfg) not in tables:
                    tables[(side, cfg)] = build(side, STORAGE, cfg, stream)
            r, s = tables[("R", m.r_index)], tables[("S", m.s_index)]
            assert join_rows(m, r, s, options) == expected[m.primary], m.id
    finally:
        for t in tables.values():
            t.close()


@given(
    seed=st.integers(0, 2**31),
    d=st.sampled_from([1, 2, 5]),
    c=st.sampled_from([1, 1.5]),
    eps=st.sampled_from([0.0, 0.3, 1.0]),
    zipf=st.booleans(),
)
@settings(max_examples=8)
def test_all_methods_agree_with_oracle(seed, d, c, eps, zipf):
    spec = WorkloadSpec(
        n_r=150, n_s=150, e=40, d_r=d, d_s=d, c_r=c, c_s=c, eps_r=eps, eps_s=eps,
        distribution="zipf" if zipf else "unif", theta=0.9 if zipf else 0.0, seed=seed,
    )
    _check_all_methods(spec)


def test_join_digest_matches_oracle():
    spec = WorkloadSpec(n_r=300, n_s=300, e=48, d_s=3, eps_r=0.5, eps_s=0.5, seed=11)
    stream_r, stream_s, _ = generate(spec)
    m = JoinMethod.parse("HJ-N")
    rt, st_ = build_pair(m, STORAGE, stream_r, stream_s)
    with rt, st_:
        want = ResultDigest()
        for (a, l, r), k in oracle_multiset(stream_r, stream_s, False).items():
            for _ in range(k):
                want.add(a, l, r)
        assert join_digest(m, rt, st_, SMALL_BUDGET) == want


def test_io_counters_deterministic():
    spec = WorkloadSpec(n_r=500, n_s=500, e=64, d_s=2, eps_r=0.5, eps_s=0.5, seed=4)
    stream_r, stream_s, _ = generate(spec)
    m = JoinMethod.parse("SJ-NS/V-Lazy/noncov")
    seen = []
    for _ in range(2):
        rt, st_ = build_pair(m, STORAGE, stream_r, stream_s)
        with rt, st_:
            before = rt.io_total() + st_.io_total()
            for _ in run_join(m, rt, st_, SMALL_BUDGET):
                pass
            seen.append((before, rt.io_total() + st_.io_total() - before))
    assert seen[0] == seen[1]


def test_payloads_fetched_on_request():
    m = JoinMethod.parse("INLJ-NS/S-Comp/noncov")
    r = [up("R", b"r1", b"A", b"rp")]
    s = [up("S", b"s1", b"A", b"sp")]
    rt, st_ = build_pair(m, STORAGE, r, s)
    with rt, st_:
        (row,) = run_join(m, rt, st_, JoinOptions(fetch_payloads=True))
        assert (row.left_payload, row.right_payload) == (b"rp", b"sp")
        (row,) = run_join(m, rt, st_)
        assert row.right_payload is None


def test_budget_must_be_positive():
    with pytest.raises(ValueError):
        JoinOptions(budget=0)


def test_spill_round_trip(tmp_path):
    io = IoStats()
    data = [(b"a", b"p", None), (b"b", b"q", b"x" * 700), (b"c", b"r", b"")]
    f = write_spill(str(tmp_path / "s"), data, 256, io)
    assert io.blocks_written == f.block_count
    assert [(a, p) for a, p, _ in f] == [(b"a", b"p"), (b"b", b"q"), (b"c", b"r")]
    assert io.blocks_read == f.block_count
