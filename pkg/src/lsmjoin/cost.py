"""Analytic I/O cost model for LSM operations, secondary indexes and join methods.

All costs are in block I/Os with constant factors taken as 1. Index costs
return the empty lookup, non-empty lookup and per-update cost of one index
variant. Join costs name every term in a breakdown so a report can show
which one dominates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

from .index.table import IndexConfig, IndexKind, Strategy
from .join.methods import Algorithm, JoinMethod, Scenario, all_methods
from .lsm.records import encoded_size

# ---------------------------------------------------------------------------
# LSM primitives


def levels(N: float, e: float, M: float, T: float) -> int:
    """Smallest L with ``M * T**L >= N * e``; zero when the data fits in the write buffer."""
    if T < 2 or M <= 0:
        raise ValueError("need T >= 2 and M > 0")
    total = N * e
    L, cap = 0, float(M)
    while cap < total:
        cap *= T
        L += 1
    return L


def bloom_fpr(bits_per_key: float) -> float:
    if bits_per_key <= 0:
        return 1.0
    return min(1.0, max(0.0, 0.6185 ** bits_per_key))


def update_cost(L: float, T: float, e: float, B: float) -> float:
    return L * T * e / B


def z0(L: float, p: float) -> float:
    return L * p


def z1(L: float, p: float, e: float, B: float) -> float:
    return L * p + math.ceil(e / B)


def range_seek(L: float) -> float:
    return float(L)


def range_read(d: float, e: float, B: float) -> float:
    return d * e / B


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class CostParams:
    """One data table as the model sees it.

    ``N`` counts live records, ``c`` the versions written per primary key
    (so ``u = N * c`` updates by default), ``d`` the records sharing a join
    attribute value and ``eps`` the fraction of records with a join partner.
    """

    N: float
    e: float
    B: int = 4096
    M: int = 16 * 2**20
    T: int = 5
    bloom_bits: float = 10.0
    eps: float = 1.0
    d: float = 1.0
    c: float = 1.0
    f: int = 1
    u: float | None = None
    key_bytes: int = 10
    attr_bytes: int = 10
    e_index: float | None = None

    def __post_init__(self):
        if self.N < 0 or self.e <= 0 or self.B <= 0 or self.M <= 0:
            raise ValueError("N must be >= 0 and e, B, M positive")
        if self.T < 2:
            raise ValueError("size ratio T must be >= 2")
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError("matching rate must lie in [0, 1]")
        if self.d < 1 or self.c < 1 or self.f < 1:
            raise ValueError("d, c and f must be >= 1")

    @property
    def p(self) -> float:
        return bloom_fpr(self.bloom_bits)

    @property
    def L(self) -> int:
        return levels(self.N, self.e, self.M, self.T)

    @property
    def updates(self) -> float:
        return self.N * self.c if self.u is None else self.u

    @property
    def payload_bytes(self) -> float:
        return max(0.0, self.e - encoded_size(self.key_bytes, self.attr_bytes + 1))

    def scaled(self, fraction: float) -> CostParams:
        """The same table after only ``fraction`` of its updates have been applied."""
        u = None if self.u is None else self.u * fraction
        return replace(self, N=self.N * fraction, u=u)


class IndexShape(NamedTuple):
    """Physical shape of one index tree: entry count, lookup entry size, per-update entry size, levels."""

    N: float
    e: float
    e_update: float
    L: int
    candidates: float


def _posting_bytes(k: float, params: CostParams, covering: bool) -> float:
    body = 4 + k * (4 + params.key_bytes) + 4 + 1
    if covering:
        body += k * (4 + params.payload_bytes)
    return encoded_size(params.attr_bytes, int(math.ceil(body)))


def index_shape(config: IndexConfig, params: CostParams) -> IndexShape:
    """Entry count and sizes of the index tree built over ``params``'s table.

    Synchronous indexes hold only live mappings. Validation indexes also
    keep every stale mapping, so each attribute value carries ``d * c``
    candidates.
    """
    validating = config.strategy is Strategy.VALIDATION
    k = params.d * params.c if validating else params.d
    covering = config.covering
    per_pk = encoded_size(
        params.attr_bytes + 1 + params.key_bytes, int(params.payload_bytes) if covering else 0
    )
    if config.kind is IndexKind.COMPOSITE:
        n = params.updates if validating else params.N
        e = e_upd = per_pk
    else:
        n = params.N / params.d
        e = _posting_bytes(k, params, covering)
        e_upd = e if config.kind is IndexKind.EAGER else _posting_bytes(1, params, covering)
    if params.e_index is not None:
        e = e_upd = params.e_index
    return IndexShape(n, e, e_upd, levels(n, e, params.M, params.T), k)


# ---------------------------------------------------------------------------
# secondary index costs


class IndexCost(NamedTuple):
    z0: float
    z1: float
    u: float


def index_cost(config: IndexConfig, params: CostParams) -> IndexCost:
    """Empty lookup, non-empty lookup and update cost of one index variant."""
    shape = index_shape(config, params)
    L, p, e, B, T = params.L, params.p, params.e, params.B, params.T
    Li, ei, eu, d = shape.L, shape.e, shape.e_update, shape.candidates
    data_lookup = L * p + math.ceil(e / B)
    index_lookup = Li * p + math.ceil(ei / B)
    index_write = Li * T * eu / B
    empty = Li * p
    kind, strategy = config.kind, config.strategy
    if strategy is Strategy.SYNCHRONOUS:
        if kind is IndexKind.EAGER:
            return IndexCost(empty, index_lookup, data_lookup + index_lookup + index_write)
        if kind is IndexKind.LAZY:
            return IndexCost(empty, Li * math.ceil(ei / B), data_lookup + index_write)
        return IndexCost(empty, Li + d * ei / B, data_lookup + index_write)
    validate = d * data_lookup
    if kind is IndexKind.EAGER:
        return IndexCost(empty, validate + index_lookup, index_lookup + index_write)
    if kind is IndexKind.LAZY:
        return IndexCost(empty, validate + Li * math.ceil(ei / B), index_write)
    return IndexCost(empty, validate + Li + d * ei / B, index_write)


# ---------------------------------------------------------------------------
# join costs


@dataclass
class CostEstimate:
    breakdown: dict[str, float] = field(default_factory=dict)

    @property
    def io_units(self) -> float:
        return sum(self.breakdown.values())

    def dominant(self) -> str:
        return max(self.breakdown, key=self.breakdown.get) if self.breakdown else ""

    def __add__(self, other: CostEstimate) -> CostEstimate:
        out = dict(self.breakdown)
        for k, v in other.breakdown.items():
            out[k] = out.get(k, 0.0) + v
        return CostEstimate(out)

    def scaled(self, factor: float) -> CostEstimate:
        return CostEstimate({k: v * factor for k, v in self.breakdown.items()})


def _scan(params: CostParams) -> float:
    return params.N * params.e / params.B


def _index_scan(config: IndexConfig, params: CostParams, side: str, out: dict[str, float]) -> None:
    shape = index_shape(config, params)
    out[f"scan_{side}'"] = shape.N * shape.e / params.B
    if config.strategy is Strategy.VALIDATION:
        # every candidate streamed out of a validating index is checked once
        candidates = shape.candidates * params.N / params.d
        out[f"validate_{side}"] = candidates * z1(params.L, params.p, params.e, params.B)


def join_cost(method: JoinMethod, r: CostParams, s: CostParams) -> CostEstimate:
    """Cost of one join; ``r`` is the outer (left) table and ``s`` the inner."""
    alg, scen = method.algorithm, method.scenario
    out: dict[str, float] = {}
    if alg is Algorithm.HJ:
        out["hash_S"] = 3 * _scan(s)
        out["hash_R"] = 3 * _scan(r)
        return CostEstimate(out)
    if alg is Algorithm.SJ:
        if scen.primary:
            out["scan_S"] = _scan(s)
        elif method.s_index is not None:
            _index_scan(method.s_index, s, "S", out)
        else:
            out["sort_S"] = 5 * _scan(s)
        if method.r_index is not None:
            _index_scan(method.r_index, r, "R", out)
        else:
            out["sort_R"] = 5 * _scan(r)
        return CostEstimate(out)
    # INLJ
    if method.r_index is not None:
        _index_scan(method.r_index, r, "R", out)
    else:
        out["scan_R"] = _scan(r)
    eps = r.eps
    if scen is Scenario.N:
        out["nested_scan_S"] = r.N * _scan(s)
    elif scen.primary:
        out["probe_empty_S"] = r.N * (1 - eps) * z0(s.L, s.p)
        out["probe_hit_S"] = r.N * eps * z1(s.L, s.p, s.e, s.B)
    else:
        ic = index_cost(method.s_index, s)
        out["probe_empty_S'"] = r.N * (1 - eps) * ic.z0
        out["probe_hit_S'"] = r.N * eps * ic.z1
    return CostEstimate(out)


def space_estimate(method: JoinMethod, r: CostParams, s: CostParams) -> float:
    """Bytes held during the join: data tables, index tables and sort or hash spill."""
    def D(p: CostParams) -> float:
        return p.N * p.e

    def Di(cfg: IndexConfig, p: CostParams) -> float:
        shape = index_shape(cfg, p)
        return shape.N * shape.e

    alg, scen = method.algorithm, method.scenario
    dr, ds = D(r), D(s)
    if alg is Algorithm.HJ:
        return 2 * dr + 2 * ds
    extra_r = Di(method.r_index, r) if method.r_index is not None else 0.0
    extra_s = Di(method.s_index, s) if method.s_index is not None else 0.0
    if alg is Algorithm.INLJ:
        return dr + ds + extra_r + extra_s
    return {
        Scenario.P: 2 * dr + 2 * ds,
        Scenario.PS: dr + 2 * ds + extra_r,
        Scenario.N: 2 * dr + 2 * ds,
        Scenario.NS: 2 * dr + ds + extra_s,
        Scenario.SS: dr + ds + extra_r + extra_s,
    }[scen]


def expected_result_rows(r: CostParams, s: CostParams, primary: bool, theta: float = 0.0) -> float | None:
    """Join cardinality under uniform attributes; ``None`` when skew leaves no closed form.

    ``r.eps`` is the fraction of R's live records that find a partner. In
    the primary case each such record matches exactly one S record.
    """
    if theta > 0:
        return None
    unique_r = r.updates / r.c
    return unique_r * r.eps if primary else unique_r * r.eps * s.d


# ---------------------------------------------------------------------------
# build cost and end-to-end prediction


def data_update_cost(params: CostParams) -> float:
    return params.updates * update_cost(params.L, params.T, params.e, params.B)


def build_cost(method: JoinMethod, r: CostParams, s: CostParams) -> CostEstimate:
    """Writing both data tables plus maintaining whichever indexes the method uses."""
    out = {"update_R": data_update_cost(r), "update_S": data_update_cost(s)}
    if method.r_index is not None:
        out["index_R'"] = r.updates * index_cost(method.r_index, r).u
    if method.s_index is not None:
        out["index_S'"] = s.updates * index_cost(method.s_index, s).u
    return CostEstimate(out)


def scheduled_join_cost(method: JoinMethod, r: CostParams, s: CostParams, f: int) -> CostEstimate:
    """Total over ``f`` joins, the i-th running after ``i/f`` of the updates."""
    total = CostEstimate()
    for i in range(1, f + 1):
        frac = i / f
        total = total + join_cost(method, r.scaled(frac), s.scaled(frac))
    return total


def effective_duplication(N: float, d: float, theta: float) -> float:
    """Expected partners of a random record when ``N/d`` attribute values follow Zipf(theta)."""
    n = max(1, int(round(N / d)))
    if theta <= 0:
        return N / n
    w = [i ** -theta for i in range(1, n + 1)]
    total = sum(w)
    return max(1.0, N * sum((x / total) ** 2 for x in w))


# ---------------------------------------------------------------------------
# advisor


@dataclass(frozen=True)
class Workload:
    """What the advisor needs: both tables, join frequency, join family and skew."""

    r: CostParams
    s: CostParams
    f: int = 1
    primary: bool = False
    theta: float = 0.0
    include_pathological: bool = False


@dataclass(frozen=True)
class Advice:
    method: JoinMethod
    total: float
    build: float
    join: float
    rationale: str


def candidate_methods(primary: bool, include_pathological: bool = False) -> list[JoinMethod]:
    return [m for m in all_methods(include_pathological) if m.primary == primary]


def advise(workload: Workload) -> list[Advice]:
    """Rank applicable methods by build cost plus ``f`` joins, cheapest first."""
    r, s = workload.r, workload.s
    if workload.theta > 0:
        r = replace(r, d=effective_duplication(r.N, r.d, workload.theta))
        s = replace(s, d=effective_duplication(s.N, s.d, workload.theta))
    f = workload.f
    out = []
    for m in candidate_methods(workload.primary, workload.include_pathological):
        build = build_cost(m, r, s)
        join = join_cost(m, r, s)
        total = build.io_units + f * join.io_units
        joined = (build + join.scaled(f)).breakdown
        index_terms = {k: v for k, v in joined.items() if not k.startswith("update_")}
        dom = max(index_terms, key=index_terms.get) if index_terms else max(joined, key=joined.get)
        share = joined[dom] / total if total else 0.0
        why = f"{dom} dominates ({share:.0%} of {total:.4g} I/Os: build {build.io_units:.4g}, {f} x join {join.io_units:.4g})"
        out.append(Advice(m, total, build.io_units, f * join.io_units, why))
    out.sort(key=lambda a: (a.total, a.method.id))
    return out
