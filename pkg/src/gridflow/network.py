"""Network case model: parsing, validation and serialization.

A case document is UTF-8 JSON with top-level keys ``base_mva``, ``psp``,
``v0``, ``buses`` and ``branches``.  All electrical quantities in the
document are per-unit on ``base_mva`` (impedances on the system impedance
base, powers on the power base).  Optional keys are omitted, never null.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

DEFAULT_V_MIN = 0.9
DEFAULT_V_MAX = 1.1
DEFAULT_DELTA_CAP = math.radians(10.0)


class CaseError(ValueError):
    """Raised when a case document violates the schema or its invariants."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class BusRecord:
    id: str
    p_demand: float = 0.0
    q_demand: float = 0.0
    dg_p: float = 0.0
    dg_q: float = 0.0
    has_dg: bool = False
    svc_q_min: float = 0.0
    svc_q_max: float = 0.0
    has_svc: bool = False
    v_min: float = DEFAULT_V_MIN
    v_max: float = DEFAULT_V_MAX

    def __post_init__(self):
        if not self.v_min < self.v_max:
            raise CaseError("v_min must be < v_max", field=f"bus {self.id}")
        if self.has_svc and not self.svc_q_min <= self.svc_q_max:
            raise CaseError("svc q_min must be <= q_max", field=f"bus {self.id}")


@dataclass(frozen=True)
class BranchRecord:
    from_bus: str
    to_bus: str
    r: float
    x: float
    switchable: bool = False
    normally_open: bool = False
    p_cap: float | None = None
    q_cap: float | None = None
    i_cap: float | None = None
    delta_cap: float = DEFAULT_DELTA_CAP

    @property
    def name(self) -> str:
        return f"{self.from_bus}-{self.to_bus}"

    def __post_init__(self):
        if self.r < 0 or self.x < 0:
            raise CaseError("impedances must be >= 0", field=f"branch {self.name}")
        if self.r == 0 and self.x == 0:
            raise CaseError("zero-impedance branch", field=f"branch {self.name}")
        if self.normally_open and not self.switchable:
            raise CaseError("normally_open branch must be switchable",
                            field=f"branch {self.name}")


@dataclass(frozen=True)
class Network:
    """Immutable per-unit description of a distribution feeder."""

    base_mva: float
    psp_bus: str
    v0: float
    buses: tuple[BusRecord, ...]
    branches: tuple[BranchRecord, ...]

    def __post_init__(self):
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise CaseError(f"duplicate bus id(s): {dup}")
        known = set(ids)
        if self.psp_bus not in known:
            raise CaseError(f"psp bus {self.psp_bus!r} not defined")
        for br in self.branches:
            for end in (br.from_bus, br.to_bus):
                if end not in known:
                    raise CaseError(f"unknown bus {end!r}", field=f"branch {br.name}")
        if self.base_mva <= 0:
            raise CaseError("base_mva must be positive")
        if self.v0 <= 0:
            raise CaseError("v0 must be positive")
        self._check_connected()

    def _check_connected(self):
        if not self.buses:
            raise CaseError("case has no buses")
        adj: dict[str, list[str]] = {b.id: [] for b in self.buses}
        for br in self.branches:
            adj[br.from_bus].append(br.to_bus)
            adj[br.to_bus].append(br.from_bus)
        seen = {self.psp_bus}
        stack = [self.psp_bus]
        while stack:
            for v in adj[stack.pop()]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        missing = [b.id for b in self.buses if b.id not in seen]
        if missing:
            raise CaseError(f"bus(es) {missing} unreachable from psp even with all "
                            "branches in service")

    # -- index helpers -------------------------------------------------

    @cached_property
    def bus_index(self) -> dict[str, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def branch_index(self) -> dict[str, int]:
        return {br.name: k for k, br in enumerate(self.branches)}

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    @cached_property
    def root_index(self) -> int:
        return self.bus_index[self.psp_bus]

    @cached_property
    def from_idx(self) -> np.ndarray:
        return np.array([self.bus_index[br.from_bus] for br in self.branches], dtype=np.int64)

    @cached_property
    def to_idx(self) -> np.ndarray:
        return np.array([self.bus_index[br.to_bus] for br in self.branches], dtype=np.int64)

    @cached_property
    def r(self) -> np.ndarray:
        return np.array([br.r for br in self.branches])

    @cached_property
    def x(self) -> np.ndarray:
        return np.array([br.x for br in self.branches])

    @cached_property
    def p_injection(self) -> np.ndarray:
        """Net active injection per bus (generation minus demand), p.u."""
        return np.array([b.dg_p - b.p_demand for b in self.buses])

    @cached_property
    def q_injection(self) -> np.ndarray:
        return np.array([b.dg_q - b.q_demand for b in self.buses])

    def normally_closed(self) -> np.ndarray:
        return np.array([not br.normally_open for br in self.branches], dtype=bool)

    @cached_property
    def svc_buses(self) -> tuple[int, ...]:
        return tuple(i for i, b in enumerate(self.buses) if b.has_svc)

    @cached_property
    def dg_buses(self) -> tuple[int, ...]:
        return tuple(i for i, b in enumerate(self.buses) if b.has_dg)

    # -- derived cases -------------------------------------------------

    def scale_loads(self, factor: float) -> "Network":
        """Return a copy with all demands multiplied by ``factor`` (DG unchanged)."""
        if factor <= 0:
            raise CaseError("load scale must be positive")
        buses = tuple(replace(b, p_demand=b.p_demand * factor, q_demand=b.q_demand * factor)
                      for b in self.buses)
        return replace(self, buses=buses)

    def with_injection(self, bus_id: str, p: float, q: float) -> "Network":
        """Return a copy with (p, q) added to the DG injection at ``bus_id``."""
        i = self.bus_index[bus_id]
        b = self.buses[i]
        nb = replace(b, dg_p=b.dg_p + p, dg_q=b.dg_q + q, has_dg=True)
        return replace(self, buses=self.buses[:i] + (nb,) + self.buses[i + 1:])


# -- parsing -----------------------------------------------------------

_BUS_KEYS = {"id", "p", "q", "dg", "svc", "v_min", "v_max"}
_BRANCH_KEYS = {"from", "to", "r", "x", "switchable", "normally_open",
                "p_cap", "q_cap", "i_cap", "delta_cap"}


def _num(obj: Mapping, key: str, where: str, default=None, required=False) -> float | None:
    if key not in obj:
        if required:
            raise CaseError(f"missing required key '{key}'", field=where)
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise CaseError(f"'{key}' must be a number", field=where)
    return float(v)


def _parse_bus(obj: Mapping, pos: int) -> BusRecord:
    where = f"buses[{pos}]"
    if "id" not in obj:
        raise CaseError("missing required key 'id'", field=where)
    unknown = set(obj) - _BUS_KEYS
    if unknown:
        raise CaseError(f"unknown key(s) {sorted(unknown)}", field=where)
    bid = str(obj["id"])
    kw = dict(
        id=bid,
        p_demand=_num(obj, "p", where, 0.0),
        q_demand=_num(obj, "q", where, 0.0),
        v_min=_num(obj, "v_min", where, DEFAULT_V_MIN),
        v_max=_num(obj, "v_max", where, DEFAULT_V_MAX),
    )
    if "dg" in obj:
        dg = obj["dg"]
        if not isinstance(dg, Mapping):
            raise CaseError("'dg' must be an object", field=where)
        kw.update(dg_p=_num(dg, "p", where + ".dg", 0.0),
                  dg_q=_num(dg, "q", where + ".dg", 0.0), has_dg=True)
    if "svc" in obj:
        svc = obj["svc"]
        if not isinstance(svc, Mapping):
            raise CaseError("'svc' must be an object", field=where)
        kw.update(svc_q_min=_num(svc, "q_min", where + ".svc", required=True),
                  svc_q_max=_num(svc, "q_max", where + ".svc", required=True),
                  has_svc=True)
    return BusRecord(**kw)


def _parse_branch(obj: Mapping, pos: int) -> BranchRecord:
    where = f"branches[{pos}]"
    for key in ("from", "to"):
        if key not in obj:
            raise CaseError(f"missing required key '{key}'", field=where)
    unknown = set(obj) - _BRANCH_KEYS
    if unknown:
        raise CaseError(f"unknown key(s) {sorted(unknown)}", field=where)
    return BranchRecord(
        from_bus=str(obj["from"]),
        to_bus=str(obj["to"]),
        r=_num(obj, "r", where, required=True),
        x=_num(obj, "x", where, required=True),
        switchable=bool(obj.get("switchable", False)),
        normally_open=bool(obj.get("normally_open", False)),
        p_cap=_num(obj, "p_cap", where),
        q_cap=_num(obj, "q_cap", where),
        i_cap=_num(obj, "i_cap", where),
        delta_cap=_num(obj, "delta_cap", where, DEFAULT_DELTA_CAP),
    )


def parse_case(document: Mapping | str | Path) -> Network:
    """Build a :class:`Network` from a case document.

    ``document`` may be an already-decoded mapping, a JSON string, or a
    path to a JSON file.
    """
    if isinstance(document, Path):
        document = json.loads(document.read_text(encoding="utf-8"))
    elif isinstance(document, str):
        p = Path(document)
        if p.suffix == ".json" or p.exists():
            document = json.loads(p.read_text(encoding="utf-8"))
        else:
            document = json.loads(document)
    if not isinstance(document, Mapping):
        raise CaseError("case document must be a JSON object")
    for key in ("base_mva", "psp", "buses", "branches"):
        if key not in document:
            raise CaseError(f"missing required top-level key '{key}'")
    buses = tuple(_parse_bus(b, i) for i, b in enumerate(document["buses"]))
    branches = tuple(_parse_branch(b, i) for i, b in enumerate(document["branches"]))
    return Network(
        base_mva=float(document["base_mva"]),
        psp_bus=str(document["psp"]),
        v0=float(document.get("v0", 1.0)),
        buses=buses,
        branches=branches,
    )


def serialize_case(network: Network) -> dict:
    """Inverse of :func:`parse_case`; omits keys that hold their defaults."""
    buses = []
    for b in network.buses:
        obj: dict = {"id": b.id}
        if b.p_demand:
            obj["p"] = b.p_demand
        if b.q_demand:
            obj["q"] = b.q_demand
        if b.has_dg:
            obj["dg"] = {"p": b.dg_p, "q": b.dg_q}
        if b.has_svc:
            obj["svc"] = {"q_min": b.svc_q_min, "q_max": b.svc_q_max}
        if b.v_min != DEFAULT_V_MIN:
            obj["v_min"] = b.v_min
        if b.v_max != DEFAULT_V_MAX:
            obj["v_max"] = b.v_max
        buses.append(obj)
    branches = []
    for br in network.branches:
        obj = {"from": br.from_bus, "to": br.to_bus, "r": br.r, "x": br.x}
        if br.switchable:
            obj["switchable"] = True
        if br.normally_open:
            obj["normally_open"] = True
        for key, val in (("p_cap", br.p_cap), ("q_cap", br.q_cap), ("i_cap", br.i_cap)):
            if val is not None:
                obj[key] = val
        if br.delta_cap != DEFAULT_DELTA_CAP:
            obj["delta_cap"] = br.delta_cap
        branches.append(obj)
    return {
        "base_mva": network.base_mva,
        "psp": network.psp_bus,
        "v0": network.v0,
        "buses": buses,
        "branches": branches,
    }


def save_case(network: Network, path: str | Path) -> None:
    Path(path).write_text(json.dumps(serialize_case(network), indent=1) + "\n",
                          encoding="utf-8")
