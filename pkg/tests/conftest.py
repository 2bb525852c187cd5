"""Shared fixtures and independent oracle implementations.

The oracles here deliberately avoid reusing the library's algorithms:
the AC reference solves the nodal mismatch equations with a general
root-finder instead of a sweep, cycles are detected by union-find, and
root paths are re-derived by explicit parent walking.
"""
from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

import gridflow as gf
from gridflow.network import BranchRecord, BusRecord, Network


# ---------------------------------------------------------------------------
# bundled fixtures
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def case33() -> Network:
    return gf.load_case("case33")


@pytest.fixture(scope="session")
def case33_dg() -> Network:
    return gf.load_case("case33_dg")


@pytest.fixture(scope="session")
def case33_dg_svc() -> Network:
    return gf.load_case("case33_dg_svc")


@pytest.fixture(scope="session")
def case141() -> Network:
    return gf.load_case("case141")


@pytest.fixture(scope="session")
def all_cases(case33, case33_dg, case33_dg_svc, case141):
    return {"case33": case33, "case33_dg": case33_dg,
            "case33_dg_svc": case33_dg_svc, "case141": case141}


# ---------------------------------------------------------------------------
# hand-built small networks
# ---------------------------------------------------------------------------

def make_network(edges, loads=None, *, v0=1.05, base_mva=10.0, psp="0",
                 ties=(), r=0.02, x=0.02, bus_kwargs=None):
    """Build a small network from (from, to) edge pairs.

    ``loads`` maps bus id -> (p, q); ``ties`` lists (from, to) pairs that
    are switchable and normally open; ``bus_kwargs`` maps bus id -> extra
    BusRecord fields (e.g. an SVC range).
    """
    loads = loads or {}
    bus_kwargs = bus_kwargs or {}
    ids: list[str] = []
    for a, b in list(edges) + list(ties):
        for e in (str(a), str(b)):
            if e not in ids:
                ids.append(e)
    buses = tuple(BusRecord(id=i, p_demand=loads.get(i, (0.0, 0.0))[0],
                            q_demand=loads.get(i, (0.0, 0.0))[1],
                            **bus_kwargs.get(i, {}))
                  for i in ids)
    branches = tuple(
        [BranchRecord(from_bus=str(a), to_bus=str(b), r=r, x=x)
         for a, b in edges]
        + [BranchRecord(from_bus=str(a), to_bus=str(b), r=r, x=x,
                        switchable=True, normally_open=True)
           for a, b in ties])
    return Network(base_mva=base_mva, psp_bus=psp, v0=v0,
                   buses=buses, branches=branches)


@pytest.fixture(scope="session")
def fig5_network() -> Network:
    """The 6-bus radial figure: root 0; bus 1 has children 2 and 4."""
    edges = [("0", "1"), ("1", "2"), ("2", "3"), ("1", "4"), ("4", "5")]
    loads = {i: (0.03, 0.015) for i in "12345"}
    return make_network(edges, loads)


def random_small_network(seed: int, *, max_bus: int = 15,
                         max_ties: int = 4) -> Network:
    """Random radial feeder with ties, random loads and occasionally one SVC."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, max_bus + 1))
    buses = [BusRecord(id="0")]
    branches = []
    edges = set()
    for i in range(1, n):
        p = float(rng.uniform(0.002, 0.04))
        buses.append(BusRecord(id=str(i), p_demand=p,
                               q_demand=p * float(rng.uniform(0.3, 0.8))))
        parent = int(rng.integers(0, i))
        branches.append(BranchRecord(
            from_bus=str(parent), to_bus=str(i),
            r=float(rng.uniform(0.01, 0.05)), x=float(rng.uniform(0.01, 0.05)),
            switchable=bool(rng.random() < 0.5)))
        edges.add(frozenset((parent, i)))
    want = int(rng.integers(1, max_ties + 1))
    for _ in range(200):
        if want == 0:
            break
        a, b = int(rng.integers(0, n)), int(rng.integers(0, n))
        if a == b or frozenset((a, b)) in edges:
            continue
        edges.add(frozenset((a, b)))
        branches.append(BranchRecord(
            from_bus=str(a), to_bus=str(b),
            r=float(rng.uniform(0.01, 0.05)), x=float(rng.uniform(0.01, 0.05)),
            switchable=True, normally_open=True))
        want -= 1
    if rng.random() < 0.3:
        j = int(rng.integers(1, n))
        buses[j] = replace(buses[j], svc_q_min=-0.03, svc_q_max=0.03,
                           has_svc=True)
    return Network(base_mva=10.0, psp_bus="0", v0=1.05,
                   buses=tuple(buses), branches=tuple(branches))


# ---------------------------------------------------------------------------
# independent oracles
# ---------------------------------------------------------------------------

def nodal_acpf_oracle(net: Network, closed=None, extra_q=None) -> np.ndarray:
    """Exact complex bus voltages from the nodal mismatch equations.

    Assembles the bus admittance matrix and solves ``V conj(Y V) = S`` for
    the non-root buses with a general-purpose root finder — no sweep, no
    tree ordering, nothing shared with the library implementation.
    """
    from scipy.optimize import fsolve
    if closed is None:
        closed = net.normally_closed()
    closed = np.asarray(closed, dtype=bool)
    n, root = net.n_bus, net.root_index
    Y = np.zeros((n, n), dtype=complex)
    for k in np.flatnonzero(closed):
        a, b = net.from_idx[k], net.to_idx[k]
        y = 1.0 / (net.r[k] + 1j * net.x[k])
        Y[a, a] += y
        Y[b, b] += y
        Y[a, b] -= y
        Y[b, a] -= y
    s = (net.p_injection + 1j * net.q_injection).astype(complex)
    if extra_q:
        for bid, q in extra_q.items():
            s[net.bus_index[bid]] += 1j * q
    idx = [i for i in range(n) if i != root]
    h = len(idx)

    def mismatch(u):
        v = np.full(n, complex(net.v0))
        v[idx] = u[:h] + 1j * u[h:]
        res = v * np.conj(Y @ v) - s
        return np.concatenate([res[idx].real, res[idx].imag])

    u0 = np.concatenate([np.full(h, float(net.v0)), np.zeros(h)])
    u, info, ier, msg = fsolve(mismatch, u0, xtol=1e-13, full_output=True)
    assert ier == 1, f"oracle root-finder failed: {msg}"
    v = np.full(n, complex(net.v0))
    v[idx] = u[:h] + 1j * u[h:]
    return v


def union_find_has_cycle(net: Network, closed) -> bool:
    """Cycle detection over the closed branches by union-find."""
    parent = list(range(net.n_bus))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for k in np.flatnonzero(np.asarray(closed, dtype=bool)):
        a, b = find(int(net.from_idx[k])), find(int(net.to_idx[k]))
        if a == b:
            return True
        parent[a] = b
    return False


def root_paths_by_walking(topo) -> dict[str, set[str]]:
    """Bus id -> set of branch names on its root path, by parent walking."""
    net = topo.network
    out: dict[str, set[str]] = {}
    for i in range(net.n_bus):
        path: set[str] = set()
        j = i
        while topo.parent_bus[j] >= 0:
            path.add(net.branches[topo.parent_branch[j]].name)
            j = int(topo.parent_bus[j])
        out[net.buses[i].id] = path
    return out


def model_objective_of_config(net: Network, weights, closed, q_svc=None):
    """Exact linear-model objective of one topology at given SVC setpoints.

    ``q_svc`` maps bus id -> physical reactive setpoint.  Used as the
    reference when grid-searching adjustable sources.
    """
    sol = gf.solve_closed_form(net, closed, extra_q=q_svc)
    dev = float(np.sum((1.0 - sol.v_mag) ** 2))
    switches = int(np.sum(np.asarray(closed, bool) != net.normally_closed()))
    return (weights.loss_scale(net.base_mva) * sol.p_loss
            + weights.beta * switches + weights.gamma * dev)


def normalize_branch_names(names) -> frozenset[frozenset[str]]:
    """Branch names as orientation-free endpoint sets, for comparisons."""
    return frozenset(frozenset(n.split("-", 1)) for n in names)
