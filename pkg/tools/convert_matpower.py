#!/usr/bin/env python3
"""Convert MATPOWER .m feeder data into the package's JSON case format.

Usage:  python3 tools/convert_matpower.py <matpower-data-dir> <output-dir>

Produces four fixtures:

* case33.json        -- 33-bus feeder, 37 switchable branches, 5 tie lines
* case33_dg.json     -- same feeder with one distributed generator at bus 10
* case33_dg_svc.json -- two generators (buses 16, 30) plus a static VAR
                        compensator at bus 22
* case141.json       -- 141-bus feeder, fixed topology

All output quantities are per-unit on the case MVA base.  The 141-bus file
stores demand as apparent power in kVA at 0.85 lagging power factor; the
33-bus file stores kW/kvar directly.
"""
from __future__ import annotations

import json
import math
import re
import sys
from pathlib import Path

import numpy as np


def parse_m(path: Path):
    txt = path.read_text()

    def block(name: str) -> np.ndarray:
        m = re.search(r"mpc\.%s\s*=\s*\[(.*?)\];" % name, txt, re.S)
        rows = []
        for line in m.group(1).splitlines():
            line = line.split("%")[0].strip().rstrip(";")
            if line:
                rows.append([float(t) for t in line.split()])
        return np.array(rows)

    base = float(re.search(r"mpc\.baseMVA\s*=\s*([\d.]+)", txt).group(1))
    return base, block("bus"), block("branch")


def build_case(base: float, bus: np.ndarray, br: np.ndarray, kv: float,
               demand_kva_pf: float | None, switchable: bool, v0: float) -> dict:
    zbase = kv * kv / base
    buses = []
    for row in bus:
        bid = str(int(row[0]))
        if demand_kva_pf is None:
            p = row[2] / 1e3 / base
            q = row[3] / 1e3 / base
        else:
            s = row[2] / 1e3 / base
            p = s * demand_kva_pf
            q = s * math.sin(math.acos(demand_kva_pf))
        obj = {"id": bid}
        if p:
            obj["p"] = p
        if q:
            obj["q"] = q
        buses.append(obj)
    branches = []
    for row in br:
        obj = {
            "from": str(int(row[0])),
            "to": str(int(row[1])),
            "r": row[2] / zbase,
            "x": row[3] / zbase,
        }
        if switchable:
            obj["switchable"] = True
        if int(row[10]) == 0:
            obj["switchable"] = True
            obj["normally_open"] = True
        branches.append(obj)
    return {"base_mva": base, "psp": str(int(bus[0, 0])), "v0": v0,
            "buses": buses, "branches": branches}


def add_dg(case: dict, bus_id: str, p: float, q: float) -> None:
    for b in case["buses"]:
        if b["id"] == bus_id:
            b["dg"] = {"p": p, "q": q}
            return
    raise KeyError(bus_id)


def add_svc(case: dict, bus_id: str, q_min: float, q_max: float) -> None:
    for b in case["buses"]:
        if b["id"] == bus_id:
            b["svc"] = {"q_min": q_min, "q_max": q_max}
            return
    raise KeyError(bus_id)


def dump(case: dict, path: Path) -> None:
    path.write_text(json.dumps(case, indent=1) + "\n", encoding="utf-8")
    print("wrote", path)


def main() -> None:
    src = Path(sys.argv[1])
    out = Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)

    base33, bus33, br33 = parse_m(src / "case33bw.m")
    c33 = build_case(base33, bus33, br33, kv=12.66, demand_kva_pf=None,
                     switchable=True, v0=1.05)
    dump(c33, out / "case33.json")

    c33_dg = json.loads(json.dumps(c33))
    add_dg(c33_dg, "10", 0.8 / base33, 0.5 / base33)
    dump(c33_dg, out / "case33_dg.json")

    c33_svc = json.loads(json.dumps(c33))
    add_dg(c33_svc, "16", 0.5 / base33, 0.25 / base33)
    add_dg(c33_svc, "30", 0.5 / base33, 0.25 / base33)
    add_svc(c33_svc, "22", -0.5 / base33, 0.5 / base33)
    dump(c33_svc, out / "case33_dg_svc.json")

    base141, bus141, br141 = parse_m(src / "case141.m")
    c141 = build_case(base141, bus141, br141, kv=12.47, demand_kva_pf=0.85,
                      switchable=False, v0=1.05)
    dump(c141, out / "case141.json")


if __name__ == "__main__":
    main()
