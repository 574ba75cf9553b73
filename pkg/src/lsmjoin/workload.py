"""Synthetic update streams with controlled duplication, matching rate and skew.

Keys and attribute values are 10-digit zero-padded decimal ids, so byte order
equals numeric order. Ids are laid out so one generated pair of tables
serves both join families:

* S primary keys are ids ``0 .. U_S-1`` and S attribute values are drawn
  from ids ``0 .. U_S/d_s - 1``, so every S attribute value is also a live
  S primary key.
* R records that should find a partner take attribute values from a shared
  prefix of S's attribute values; the others take ids at or above ``U_S``,
  which no S key or attribute uses.

A matched R record therefore meets ``d_s`` S records on the join attribute
and exactly one S record on S's primary key.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .join.rows import ResultDigest, grouped_join_digest, primary_side
from .lsm.records import encoded_size

KEY_BYTES = 10
DISTRIBUTIONS = ("unif", "zipf")


class WorkloadError(ValueError):
    """Infeasible generator parameters or malformed input data."""


class Update(NamedTuple):
    table: str
    pk: bytes
    attr: bytes
    payload: bytes


UpdateStream = list[Update]


@dataclass(frozen=True)
class WorkloadSpec:
    n_r: int = 100_000
    n_s: int = 100_000
    e: int = 64
    distribution: str = "unif"
    theta: float = 0.0
    c_r: float = 1.0
    c_s: float = 1.0
    d_r: float = 1.0
    d_s: float = 1.0
    eps_r: float = 1.0
    eps_s: float = 1.0
    f: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.distribution not in DISTRIBUTIONS:
            raise WorkloadError(f"distribution must be one of {DISTRIBUTIONS}, got {self.distribution!r}")
        if self.n_r < 0 or self.n_s < 0:
            raise WorkloadError("update counts must be non-negative")
        for name in ("c_r", "c_s", "d_r", "d_s"):
            if getattr(self, name) < 1:
                raise WorkloadError(f"{name} must be >= 1")
        for name in ("eps_r", "eps_s"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise WorkloadError(f"{name} must lie in [0, 1]")
        if self.theta < 0:
            raise WorkloadError("theta must be >= 0")
        if self.f < 1:
            raise WorkloadError("join frequency must be >= 1")
        if self.e < min_entry_size():
            raise WorkloadError(f"entry size {self.e} cannot hold a key and an attribute (min {min_entry_size()})")

    @property
    def unique_r(self) -> int:
        return _unique(self.n_r, self.c_r)

    @property
    def unique_s(self) -> int:
        return _unique(self.n_s, self.c_s)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> WorkloadSpec:
        known = cls.__dataclass_fields__
        unknown = set(data) - set(known)
        if unknown:
            raise WorkloadError(f"unknown workload fields: {sorted(unknown)}")
        return cls(**data)


def _unique(n: int, c: float) -> int:
    return 0 if n == 0 else max(1, int(round(n / c)))


def min_entry_size() -> int:
    return encoded_size(KEY_BYTES, KEY_BYTES + 1)


def payload_length(e: int) -> int:
    """Largest payload whose data entry is at most ``e`` bytes."""
    lo = e - min_entry_size()
    while lo > 0 and encoded_size(KEY_BYTES, KEY_BYTES + 1 + lo) > e:
        lo -= 1
    return max(0, lo)


def encode_id(i: int) -> bytes:
    if i < 0 or i >= 10**KEY_BYTES:
        raise WorkloadError(f"id {i} does not fit in {KEY_BYTES} digits")
    return b"%010d" % i


@dataclass(frozen=True)
class DatasetStats:
    d_r: float
    d_s: float
    c_r: float
    c_s: float
    eps_r: float
    eps_s: float
    theta_r: float
    theta_s: float


@dataclass(frozen=True)
class GroundTruth:
    stats: DatasetStats
    rows_nonprimary: int
    rows_primary: int

    def rows(self, primary: bool) -> int:
        return self.rows_primary if primary else self.rows_nonprimary


# ---------------------------------------------------------------------------
# sampling


@lru_cache(maxsize=32)
def _zipf_cdf(n_items: int, theta: float) -> np.ndarray:
    w = np.arange(1, n_items + 1, dtype=np.float64) ** -theta
    cdf = np.cumsum(w)
    return cdf / cdf[-1]


def zipf_sample(rng: np.random.Generator, n_items: int, theta: float, size: int | None = None):
    """Ranks in ``1..n_items`` with ``P(i)`` proportional to ``i**-theta``."""
    if n_items < 1:
        raise WorkloadError("n_items must be >= 1")
    if theta < 0:
        raise WorkloadError("theta must be >= 0")
    u = rng.random(size)
    ranks = np.searchsorted(_zipf_cdf(n_items, float(theta)), u, side="right") + 1
    ranks = np.minimum(ranks, n_items)
    return int(ranks) if size is None else ranks


def _assign(rng: np.random.Generator, count: int, values: np.ndarray, theta: float, skewed: bool) -> np.ndarray:
    """Give ``count`` records attribute ids from ``values``.

    Uniform assignment is exactly balanced (every value used ``count/len``
    times, up to rounding) and shuffled. Skewed assignment samples ranks from
    Zipf(theta), rank ``i`` mapping to ``values[i-1]``.
    """
    if count == 0:
        return np.empty(0, dtype=np.int64)
    if len(values) == 0:
        raise WorkloadError("no attribute values available")
    if skewed:
        return values[zipf_sample(rng, len(values), theta, count) - 1]
    reps = np.resize(np.arange(len(values)), count)
    return values[rng.permutation(reps)]


# ---------------------------------------------------------------------------
# generation


def generate(spec: WorkloadSpec) -> tuple[UpdateStream, UpdateStream, GroundTruth]:
    """Build the R and S update streams and the exact result of joining their final states."""
    rng = np.random.default_rng(spec.seed)
    skewed = spec.distribution == "zipf"
    u_r, u_s = spec.unique_r, spec.unique_s
    if u_r + u_s >= 10**KEY_BYTES:
        raise WorkloadError("record counts exceed the 10-digit id space")

    # S: attribute domain sized for d_s, a subset of S's own primary keys
    dom_s = max(1, int(round(u_s / spec.d_s))) if u_s else 0
    s_values = np.arange(dom_s, dtype=np.int64)
    s_attrs = _assign(rng, u_s, s_values, spec.theta, skewed)

    # R: matched records use a shared prefix of the values S actually holds
    used_s = np.unique(s_attrs)
    shared = int(round(spec.eps_s * len(used_s)))
    if spec.eps_s > 0 and len(used_s):
        shared = max(1, shared)
    # a match needs a partner on both sides, so either rate being zero rules matches out
    matched = int(round(spec.eps_r * u_r)) if shared else 0
    unmatched = u_r - matched
    shared_values = used_s[:shared]
    # size the unmatched domain so R as a whole has about u_r / d_r distinct values
    distinct = max(1, int(round(u_r / spec.d_r))) if u_r else 0
    dom_ru = min(unmatched, max(1, distinct - min(shared, matched))) if unmatched else 0
    if u_s + dom_ru >= 10**KEY_BYTES:
        raise WorkloadError("attribute domain exceeds the 10-digit id space")
    r_attrs = np.concatenate([
        _assign(rng, matched, shared_values, spec.theta, skewed),
        _assign(rng, unmatched, np.arange(u_s, u_s + dom_ru, dtype=np.int64), spec.theta, skewed),
    ])
    r_attrs = r_attrs[rng.permutation(u_r)] if u_r else r_attrs

    plen = payload_length(spec.e)
    stream_r = _versions(rng, "R", spec.n_r, r_attrs, plen, skewed, spec.theta)
    stream_s = _versions(rng, "S", spec.n_s, s_attrs, plen, skewed, spec.theta)
    return stream_r, stream_s, ground_truth(stream_r, stream_s)


def _versions(rng: np.random.Generator, table: str, n: int, final_attrs: np.ndarray, plen: int,
              skewed: bool, theta: float) -> UpdateStream:
    """Write every key ``n / U`` times in shuffled order; each key's last write carries its final attribute.

    Earlier writes of a key carry attributes drawn from the table's own
    final attribute multiset, so they become stale mappings once overwritten.
    """
    u = len(final_attrs)
    if n == 0 or u == 0:
        return []
    counts = np.full(u, n // u, dtype=np.int64)
    extra = n - int(counts.sum())
    if extra:
        counts[rng.choice(u, size=extra, replace=False)] += 1
    order = rng.permutation(np.repeat(np.arange(u, dtype=np.int64), counts))
    stale = final_attrs[rng.integers(0, u, size=n)]
    seen = np.zeros(u, dtype=bool)
    attrs = np.empty(n, dtype=np.int64)
    for i in range(n - 1, -1, -1):
        k = order[i]
        if seen[k]:
            attrs[i] = stale[i]
        else:
            attrs[i] = final_attrs[k]
            seen[k] = True
    filler = b"x" * plen
    ids = [b"%010d" % k for k in range(u)]
    return [Update(table, ids[k], b"%010d" % a, filler) for k, a in zip(order.tolist(), attrs.tolist())]


# ---------------------------------------------------------------------------
# measurement


def final_state(stream: Iterable[Update]) -> dict[bytes, bytes]:
    """Live ``pk -> attr`` after replaying the stream."""
    state: dict[bytes, bytes] = {}
    for up in stream:
        state[up.pk] = up.attr
    return state


def fit_zipf_exponent(counts: Sequence[int], min_count: float = 10.0) -> float:
    """Zipf exponent from a log-log rank-frequency regression; 0 for flat or tiny samples.

    Sorted frequencies are averaged over rank bins ``[2^j, 2^(j+1))`` before
    fitting, and bins averaging fewer than ``min_count`` occurrences are
    dropped, since sampling noise alone tilts the sorted tail.
    """
    freq = np.sort(np.asarray([c for c in counts if c > 0], dtype=np.float64))[::-1]
    xs, ys = [], []
    lo = 1
    while lo <= len(freq):
        hi = min(2 * lo, len(freq) + 1)
        mean = freq[lo - 1:hi - 1].mean()
        if mean < min_count:
            break
        xs.append(0.5 * math.log(lo * (hi - 1)))
        ys.append(math.log(mean))
        lo = hi
    if len(xs) < 3:
        return 0.0
    slope = np.polyfit(xs, ys, 1)[0]
    return max(0.0, float(-slope))


def measure_stats(stream_r: Sequence[Update], stream_s: Sequence[Update], primary: bool = False) -> DatasetStats:
    """Realized duplication, matching rates and skew of the final table states.

    With ``primary`` set, R's attribute is matched against S's primary keys
    and S's matching rate counts S keys that some R record references.
    """
    live_r, live_s = final_state(stream_r), final_state(stream_s)

    def dup(live: dict[bytes, bytes]) -> float:
        return len(live) / len(set(live.values())) if live else 1.0

    def repl(stream: Sequence[Update], live: dict) -> float:
        return len(stream) / len(live) if live else 1.0

    r_vals = set(live_r.values())
    s_keys = set(live_s) if primary else set(live_s.values())
    eps_r = sum(1 for a in live_r.values() if a in s_keys) / len(live_r) if live_r else 0.0
    if primary:
        eps_s = sum(1 for k in live_s if k in r_vals) / len(live_s) if live_s else 0.0
    else:
        eps_s = sum(1 for a in live_s.values() if a in r_vals) / len(live_s) if live_s else 0.0
    return DatasetStats(
        d_r=dup(live_r),
        d_s=dup(live_s),
        c_r=repl(stream_r, live_r),
        c_s=repl(stream_s, live_s),
        eps_r=eps_r,
        eps_s=eps_s,
        theta_r=fit_zipf_exponent(Counter(live_r.values()).values()),
        theta_s=fit_zipf_exponent(Counter(live_s.values()).values()),
    )


def oracle_digest(stream_r: Iterable[Update], stream_s: Iterable[Update], primary: bool) -> ResultDigest:
    """Exact join of the final states, computed in memory."""
    left = list(final_state(stream_r).items())
    right = list(final_state(stream_s).items())
    return grouped_join_digest(left, primary_side(right) if primary else right)


def oracle_rows(stream_r: Iterable[Update], stream_s: Iterable[Update], primary: bool) -> int:
    """Exact row count of the final-state join, by grouping rather than enumerating."""
    live_s = final_state(stream_s)
    per_attr = Counter(live_s.keys()) if primary else Counter(live_s.values())
    return sum(per_attr.get(a, 0) for a in final_state(stream_r).values())


def ground_truth(stream_r: Sequence[Update], stream_s: Sequence[Update]) -> GroundTruth:
    return GroundTruth(
        measure_stats(stream_r, stream_s),
        oracle_rows(stream_r, stream_s, primary=False),
        oracle_rows(stream_r, stream_s, primary=True),
    )


# ---------------------------------------------------------------------------
# CSV and scheduling


def _check(value: bytes, what: str, lineno: int) -> None:
    if not value:
        raise WorkloadError(f"line {lineno}: empty {what}")
    if b"\x00" in value:
        raise WorkloadError(f"line {lineno}: {what} contains a 0x00 byte")


def load_csv(path: str, table_tag: str) -> UpdateStream:
    """Read ``primary_key,join_attr[,payload]`` lines in file order."""
    out: UpdateStream = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        while True:
            try:
                row = next(reader, None)
            except csv.Error as exc:
                raise WorkloadError(f"line {reader.line_num}: {exc}") from exc
            if row is None:
                break
            lineno = reader.line_num
            if not row:
                continue
            if len(row) not in (2, 3):
                raise WorkloadError(f"line {lineno}: expected 2 or 3 fields, got {len(row)}")
            pk, attr = row[0].encode(), row[1].encode()
            payload = row[2].encode() if len(row) == 3 else b""
            _check(pk, "primary key", lineno)
            _check(attr, "join attribute", lineno)
            if b"\x00" in payload:
                raise WorkloadError(f"line {lineno}: payload contains a 0x00 byte")
            out.append(Update(table_tag, pk, attr, payload))
    return out


def dump_csv(stream: Iterable[Update], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for up in stream:
            w.writerow([up.pk.decode(), up.attr.decode(), up.payload.decode()])


def interleave(stream_r: Sequence[Update], stream_s: Sequence[Update]) -> UpdateStream:
    """Merge two streams so each keeps its order and both progress at the same relative pace."""
    nr, ns = len(stream_r), len(stream_s)
    out: UpdateStream = []
    i = j = 0
    while i < nr or j < ns:
        # take from R while its progress lags S's
        if j >= ns or (i < nr and (i + 1) * ns <= (j + 1) * nr):
            out.append(stream_r[i])
            i += 1
        else:
            out.append(stream_s[j])
            j += 1
    return out


def schedule(stream: Sequence[Update], f: int) -> list[UpdateStream]:
    """Split into ``f`` batches of equal size, the last taking the remainder; a join follows each."""
    if f < 1:
        raise WorkloadError("join frequency must be >= 1")
    n = len(stream)
    if f > max(n, 1):
        raise WorkloadError(f"cannot split {n} updates into {f} non-empty batches")
    size = n // f
    batches = [list(stream[i * size:(i + 1) * size]) for i in range(f - 1)]
    batches.append(list(stream[(f - 1) * size:]))
    return batches


__all__ = [
    "DatasetStats",
    "GroundTruth",
    "Update",
    "UpdateStream",
    "WorkloadError",
    "WorkloadSpec",
    "dump_csv",
    "encode_id",
    "final_state",
    "fit_zipf_exponent",
    "generate",
    "ground_truth",
    "interleave",
    "load_csv",
    "measure_stats",
    "oracle_digest",
    "oracle_rows",
    "payload_length",
    "schedule",
    "zipf_sample",
]
