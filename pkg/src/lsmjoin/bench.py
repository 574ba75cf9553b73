"""Benchmark harness: build tables, run scheduled joins, record logical I/O and compare with the model."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

from scipy.stats import spearmanr

from .cost import CostEstimate, CostParams, build_cost, scheduled_join_cost
from .index.table import IndexConfig, IndexedTable
from .join.engine import JoinOptions, run_join
from .join.methods import JoinMethod, parse_methods
from .join.rows import ResultDigest, grouped_join_digest, primary_side
from .lsm.records import encoded_size
from .lsm.tree import StorageConfig
from .workload import (
    KEY_BYTES,
    Update,
    WorkloadSpec,
    final_state,
    generate,
    interleave,
    measure_stats,
    schedule,
)

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ("method", "build_io", "build_s", "join_io", "join_s", "rows", "digest", "predicted_io")

# Desk-scale defaults: a 256 KiB write buffer keeps several levels at N=1e5.
DESK_STORAGE = StorageConfig(block_size=4096, write_buffer_bytes=256 * 2**10, size_ratio=5, bloom_bits_per_key=10)
DESK_BUDGET = 2**20


class CorrectnessError(RuntimeError):
    """A join method produced a different result multiset than the reference."""


@dataclass
class ExperimentConfig:
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    storage: StorageConfig = DESK_STORAGE
    methods: str | list[str] = "all"
    budget: int = DESK_BUDGET
    fetch_payloads: bool = False
    # INLJ-N runs only when N_R * N_S is at most this
    inlj_n_limit: int = 10**6
    check_oracle: bool = True
    repetitions: int = 1
    out_dir: str | None = None

    def method_list(self) -> list[JoinMethod]:
        text = self.methods if isinstance(self.methods, str) else ",".join(self.methods)
        methods = parse_methods(text)
        if not methods:
            raise ValueError("no join methods selected")
        return methods

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["workload"] = self.workload.to_dict()
        d["storage"] = dataclasses.asdict(self.storage)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        data = dict(data)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        if "workload" in data:
            data["workload"] = WorkloadSpec.from_dict(data["workload"])
        if "storage" in data:
            data["storage"] = dataclasses.replace(DESK_STORAGE, **data["storage"])
        if data.get("repetitions", 1) < 1:
            raise ValueError("repetitions must be >= 1")
        return cls(**data)

    @classmethod
    def load(cls, path: str) -> ExperimentConfig:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class ReportRow:
    method: str
    build_io: int
    build_s: float
    join_io: int
    join_s: float
    rows: int
    digest: str
    predicted_io: float
    predicted_build_io: float = 0.0
    breakdown: dict[str, float] = field(default_factory=dict)

    def csv_row(self) -> list:
        return [getattr(self, c) for c in REPORT_COLUMNS]


# ---------------------------------------------------------------------------
# model parameters


def _mean_entry_size(stream: Sequence[Update]) -> float:
    live = {}
    for up in stream:
        live[up.pk] = encoded_size(len(up.pk), len(up.attr) + 1 + len(up.payload))
    return sum(live.values()) / len(live) if live else float(KEY_BYTES)


def _params(storage: StorageConfig, N: float, e: float, eps: float, d: float, c: float, f: int) -> CostParams:
    return CostParams(
        N=N,
        e=max(e, 1.0),
        B=storage.block_size,
        M=storage.write_buffer_bytes,
        T=storage.size_ratio,
        bloom_bits=storage.bloom_bits_per_key,
        eps=min(1.0, max(0.0, eps)),
        d=max(1.0, d),
        c=max(1.0, c),
        f=f,
    )


def measured_params(stream_r, stream_s, storage: StorageConfig, primary: bool, f: int = 1):
    """Cost-model parameters for both tables, taken from the realized data."""
    st = measure_stats(stream_r, stream_s, primary=primary)
    nr, ns = len(final_state(stream_r)), len(final_state(stream_s))
    r = _params(storage, nr, _mean_entry_size(stream_r), st.eps_r, st.d_r, st.c_r, f)
    s = _params(storage, ns, _mean_entry_size(stream_s), st.eps_s, st.d_s, st.c_s, f)
    return r, s


def spec_params(spec: WorkloadSpec, storage: StorageConfig):
    """Cost-model parameters straight from the workload targets, without generating data."""
    r = _params(storage, spec.unique_r, spec.e, spec.eps_r, spec.d_r, spec.c_r, spec.f)
    s = _params(storage, spec.unique_s, spec.e, spec.eps_s, spec.d_s, spec.c_s, spec.f)
    return r, s


# ---------------------------------------------------------------------------
# running


def _table_name(side: str, cfg: IndexConfig | None) -> str:
    if cfg is None:
        return f"{side}-plain"
    return f"{side}-{cfg.strategy.value}-{cfg.kind.value}-{cfg.coverage.value}"


class _Built:
    """One table variant with its accumulated build cost."""

    def __init__(self, side: str, storage: StorageConfig, cfg: IndexConfig | None):
        self.table = IndexedTable(_table_name(side, cfg), storage, cfg)
        self.build_io = 0
        self.build_s = 0.0

    def apply(self, batch: Sequence[Update]) -> None:
        t = self.table
        before = t.io_total()
        start = time.perf_counter()
        for up in batch:
            t.apply_update(up.pk, up.attr, up.payload)
        t.flush()
        self.build_s += time.perf_counter() - start
        self.build_io += t.io_total() - before


def applicable(method: JoinMethod, n_r: int, n_s: int, inlj_n_limit: int) -> bool:
    return not method.pathological or n_r * n_s <= inlj_n_limit


def run_experiment(
    config: ExperimentConfig,
    streams: tuple[Sequence[Update], Sequence[Update]] | None = None,
) -> list[ReportRow]:
    """Replay the workload schedule and run every selected method after each batch.

    Each distinct table variant is built once and shared by the methods
    that use it; joins only read, so this matches building fresh tables per
    method. A result that disagrees with the in-memory reference (or, with
    ``check_oracle`` off, with other methods of the same join family) raises
    :class:`CorrectnessError`.
    """
    spec = config.workload
    if streams is None:
        stream_r, stream_s, _ = generate(spec)
    else:
        stream_r, stream_s = streams
    n_r, n_s = len(final_state(stream_r)), len(final_state(stream_s))
    methods = []
    for m in config.method_list():
        if applicable(m, n_r, n_s, config.inlj_n_limit):
            methods.append(m)
        else:
            logger.warning("skipping %s: N_R*N_S=%d exceeds inlj_n_limit", m.id, n_r * n_s)

    merged = interleave(stream_r, stream_s)
    batches = schedule(merged, spec.f) if merged else [[] for _ in range(spec.f)]
    options = JoinOptions(budget=config.budget, fetch_payloads=config.fetch_payloads)
    preds = {
        fam: (measured_params(stream_r, stream_s, config.storage, fam, spec.f))
        for fam in {m.primary for m in methods}
    }

    rows: dict[str, ReportRow] = {}
    for _ in range(config.repetitions):
        result = _run_once(config, methods, batches, options)
        for m in methods:
            row = result[m.id]
            if m.id in rows and (rows[m.id].digest, rows[m.id].join_io) != (row.digest, row.join_io):
                raise CorrectnessError(f"{m.id}: repetition changed the result or I/O")
            rows[m.id] = row
    out = []
    for m in methods:
        row = rows[m.id]
        r, s = preds[m.primary]
        join = scheduled_join_cost(m, r, s, spec.f)
        row.predicted_io = join.io_units
        row.predicted_build_io = build_cost(m, r, s).io_units
        row.breakdown = join.breakdown
        out.append(row)
    return out


def _run_once(config: ExperimentConfig, methods: list[JoinMethod], batches, options: JoinOptions) -> dict[str, ReportRow]:
    storage = config.storage
    tables: dict[tuple[str, IndexConfig | None], _Built] = {}
    for m in methods:
        for side, cfg in (("R", m.r_index), ("S", m.s_index)):
            if (side, cfg) not in tables:
                tables[(side, cfg)] = _Built(side, storage, cfg)

    acc = {m.id: [0, 0.0, ResultDigest()] for m in methods}
    state_r: dict[bytes, bytes] = {}
    state_s: dict[bytes, bytes] = {}
    try:
        for batch in batches:
            r_batch = [u for u in batch if u.table == "R"]
            s_batch = [u for u in batch if u.table == "S"]
            for (side, _), built in tables.items():
                built.apply(r_batch if side == "R" else s_batch)
            for u in r_batch:
                state_r[u.pk] = u.attr
            for u in s_batch:
                state_s[u.pk] = u.attr
            expected = {}
            for fam in {m.primary for m in methods}:
                if config.check_oracle:
                    right = list(state_s.items())
                    expected[fam] = grouped_join_digest(
                        list(state_r.items()), primary_side(right) if fam else right
                    )
            for m in methods:
                r = tables[("R", m.r_index)].table
                s = tables[("S", m.s_index)].table
                before = r.io_total() + s.io_total()
                start = time.perf_counter()
                got = ResultDigest().consume(run_join(m, r, s, options))
                elapsed = time.perf_counter() - start
                a = acc[m.id]
                a[0] += r.io_total() + s.io_total() - before
                a[1] += elapsed
                want = expected.get(m.primary)
                if want is None:
                    want = expected.setdefault(m.primary, got)
                if got != want:
                    raise CorrectnessError(f"{m.id}: result digest {got.hex} ({got.rows} rows) != {want.hex} ({want.rows} rows)")
                d = a[2]
                d.rows += got.rows
                d.value = (d.value + got.value) & ((1 << 64) - 1)
    finally:
        for built in tables.values():
            built.table.close()

    out = {}
    for m in methods:
        br, bs = tables[("R", m.r_index)], tables[("S", m.s_index)]
        join_io, join_s, digest = acc[m.id]
        out[m.id] = ReportRow(
            method=m.id,
            build_io=br.build_io + bs.build_io,
            build_s=round(br.build_s + bs.build_s, 6),
            join_io=join_io,
            join_s=round(join_s, 6),
            rows=digest.rows,
            digest=digest.hex,
            predicted_io=0.0,
        )
    return out


# ---------------------------------------------------------------------------
# prediction and comparison


def predict(config: ExperimentConfig) -> list[tuple[JoinMethod, CostEstimate, CostEstimate]]:
    """Model-only ``(method, join cost over f joins, build cost)`` for every selected method."""
    r, s = spec_params(config.workload, config.storage)
    f = config.workload.f
    out = []
    for m in config.method_list():
        if not applicable(m, config.workload.unique_r, config.workload.unique_s, config.inlj_n_limit):
            continue
        out.append((m, scheduled_join_cost(m, r, s, f), build_cost(m, r, s)))
    return out


def compare(measured: dict[str, float], predicted: dict[str, float]) -> dict:
    """Spearman rank correlation and measured/predicted ratios over the methods present in both."""
    common = [k for k in measured if k in predicted]
    ratios = {k: (measured[k] / predicted[k] if predicted[k] else math.inf) for k in common}
    if len(common) < 2:
        rho = math.nan
    else:
        rho = float(spearmanr([predicted[k] for k in common], [measured[k] for k in common]).statistic)
    return {"spearman_rho": rho, "ratios": ratios, "methods": len(common)}


def compare_rows(rows: Sequence[ReportRow]) -> dict:
    return compare({r.method: r.join_io for r in rows}, {r.method: r.predicted_io for r in rows})


# ---------------------------------------------------------------------------
# reports


def emit_report(rows: Sequence[ReportRow], fmt: str, path: str) -> None:
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_COLUMNS)
            for r in rows:
                w.writerow(r.csv_row())
    elif fmt == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump([dataclasses.asdict(r) for r in rows], fh, indent=2)
            fh.write("\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def load_report(path: str) -> list[ReportRow]:
    """Read a report written by :func:`emit_report` in either format."""
    if path.endswith(".json"):
        with open(path, encoding="utf-8") as fh:
            return [ReportRow(**d) for d in json.load(fh)]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
            raise ValueError(f"{path}: unexpected report columns {reader.fieldnames}")
        return [
            ReportRow(
                method=d["method"],
                build_io=int(d["build_io"]),
                build_s=float(d["build_s"]),
                join_io=int(d["join_io"]),
                join_s=float(d["join_s"]),
                rows=int(d["rows"]),
                digest=d["digest"],
                predicted_io=float(d["predicted_io"]),
            )
            for d in reader
        ]
