"""Join method identifiers: algorithm, scenario and (where used) an index variant.

Scenario codes describe how each side can be accessed. ``R`` is the outer
(left) table and ``S`` the inner (right) table.

==========  =====================  =========================
scenario    S accessed by           R accessed by
==========  =====================  =========================
P           primary key             data scan
PS          primary key             secondary index on R
N           data scan               data scan
NS          secondary index on S    data scan
SS          secondary index on S    secondary index on R
==========  =====================  =========================

In P and PS the join attribute of R references S's primary key. Method ids
look like ``HJ-N`` or ``SJ-PS/V-Lazy/cov``; in SS both indexes share one
configuration.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from ..index.table import DEFAULT_INDEX, IndexConfig, all_index_configs


class Algorithm(str, enum.Enum):
    INLJ = "INLJ"
    SJ = "SJ"
    HJ = "HJ"


class Scenario(str, enum.Enum):
    P = "P"
    PS = "PS"
    N = "N"
    NS = "NS"
    SS = "SS"

    @property
    def primary(self) -> bool:
        """True when R's join attribute references S's primary key."""
        return self in (Scenario.P, Scenario.PS)

    @property
    def indexed(self) -> bool:
        return self in (Scenario.PS, Scenario.NS, Scenario.SS)


_VALID = {
    Algorithm.INLJ: set(Scenario),
    Algorithm.SJ: set(Scenario),
    Algorithm.HJ: {Scenario.P, Scenario.N},
}


@dataclass(frozen=True)
class JoinMethod:
    algorithm: Algorithm
    scenario: Scenario
    index: IndexConfig | None = None

    def __post_init__(self):
        if self.scenario not in _VALID[self.algorithm]:
            raise ValueError(f"{self.algorithm.value} does not support scenario {self.scenario.value}")
        if self.scenario.indexed and self.index is None:
            raise ValueError(f"scenario {self.scenario.value} needs an index configuration")
        if not self.scenario.indexed and self.index is not None:
            raise ValueError(f"scenario {self.scenario.value} uses no secondary index")

    @property
    def id(self) -> str:
        base = f"{self.algorithm.value}-{self.scenario.value}"
        return base if self.index is None else f"{base}/{self.index.label}"

    def __str__(self) -> str:
        return self.id

    @property
    def code(self) -> str:
        """The cost-table row code, e.g. ``SJ-PS``."""
        return f"{self.algorithm.value}-{self.scenario.value}"

    @property
    def primary(self) -> bool:
        return self.scenario.primary

    @property
    def r_index(self) -> IndexConfig | None:
        return self.index if self.scenario in (Scenario.PS, Scenario.SS) else None

    @property
    def s_index(self) -> IndexConfig | None:
        return self.index if self.scenario in (Scenario.NS, Scenario.SS) else None

    @property
    def pathological(self) -> bool:
        """INLJ without any index scans all of S once per outer tuple."""
        return self.algorithm is Algorithm.INLJ and self.scenario is Scenario.N

    @classmethod
    def parse(cls, text: str) -> JoinMethod:
        head, _, idx = text.strip().partition("/")
        alg, _, scen = head.partition("-")
        try:
            algorithm, scenario = Algorithm(alg.upper()), Scenario(scen.upper())
        except ValueError as exc:
            raise ValueError(f"bad join method {text!r}") from exc
        index = IndexConfig.parse(idx) if idx else None
        return cls(algorithm, scenario, index)


def all_methods(include_pathological: bool = True) -> list[JoinMethod]:
    """Every algorithm/scenario pair crossed with every index variant it admits."""
    out = []
    for alg in Algorithm:
        for scen in Scenario:
            if scen not in _VALID[alg]:
                continue
            if scen.indexed:
                out.extend(JoinMethod(alg, scen, cfg) for cfg in all_index_configs())
            else:
                m = JoinMethod(alg, scen)
                if include_pathological or not m.pathological:
                    out.append(m)
    return out


def parse_methods(text: str) -> list[JoinMethod]:
    """Parse ``all``, a comma-separated id list, or bare codes such as ``SJ-PS`` (default index)."""
    if text.strip().lower() == "all":
        return all_methods()
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        scen = part.split("/", 1)[0].partition("-")[2].upper()
        if "/" not in part and scen in (Scenario.PS.value, Scenario.NS.value, Scenario.SS.value):
            part = f"{part}/{DEFAULT_INDEX.label}"
        out.append(JoinMethod.parse(part))
    if not out:
        raise ValueError("no join methods selected")
    return out
