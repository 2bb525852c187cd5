"""Joint VAR optimization and network reconfiguration as an MIQP.

The decision variables are one binary per switchable branch plus the
continuous state of the linear branch-flow model (normalized flows, the
reciprocal-voltage proxy ``w``, and adjustable reactive setpoints).  The
MIQP is solved exactly by best-first branch-and-bound with convex-QP node
relaxations (OSQP); an exhaustive enumeration over all radial topologies
serves as an independent validation oracle.
"""
from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field
from math import comb
from typing import Sequence

import numpy as np
import scipy.sparse as sp

import osqp

from . import _kernels
from .acpf import PowerFlowError, solve_acpf
from .network import Network
from .topology import (DisconnectedError, LoopStructure, NotRadialError,
                       build_tree, loop_structure)

_INF = np.inf

#: branch-and-bound switches to exhaustive evaluation of a subtree once at
#: most this many switch combinations remain under it
_TAIL_CONFIGS = 3000


class NothingToOptimize(Exception):
    """No switchable branch and no adjustable source: nothing to decide."""


class TooLarge(Exception):
    """The enumeration space exceeds the configured cap."""


class Infeasible(Exception):
    """No feasible configuration exists."""

    def __init__(self, hint: str):
        super().__init__(f"problem is infeasible ({hint})")
        self.hint = hint


@dataclass(frozen=True)
class ObjectiveWeights:
    """Weights of the reconfiguration objective.

    ``alpha`` prices energy loss [$ per MWh], ``beta`` prices each switching
    operation [$ per operation] and ``gamma`` weighs the total squared
    voltage deviation from 1.0 p.u.  Losses are integrated over
    ``horizon_hours`` (default one hour).
    """

    alpha: float = 1.0
    beta: float = 0.0
    gamma: float = 0.0
    horizon_hours: float = 1.0

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0 or self.horizon_hours <= 0:
            raise ValueError("objective weights must be non-negative, horizon positive")
        if self.alpha == self.beta == self.gamma == 0:
            raise ValueError("at least one objective weight must be positive")

    def loss_scale(self, base_mva: float) -> float:
        """$ per unit of per-unit loss: alpha * base * horizon."""
        return self.alpha * base_mva * self.horizon_hours


@dataclass(frozen=True)
class SolveOptions:
    loop_cuts: bool = True
    #: minimum squared power factor at the supply point (0, 1); None disables.
    pf_limit: float | None = None
    #: relative optimality gap for branch-and-bound.
    gap: float = 1e-6
    max_nodes: int = 200_000
    time_limit: float | None = None
    enumeration_cap: int = 1_000_000
    feastol: float = 1e-9

    def __post_init__(self):
        if self.pf_limit is not None and not 0.0 < self.pf_limit < 1.0:
            raise ValueError("pf_limit must lie strictly between 0 and 1")
        if self.gap <= 0:
            raise ValueError("gap must be positive")


@dataclass
class ReconfigSolution:
    open_branches: tuple[str, ...]
    closed: np.ndarray
    #: normalized setpoint per adjustable-source bus id.
    svc_hat: dict[str, float]
    #: physical setpoint (normalized divided by the local voltage proxy).
    svc_physical: dict[str, float]
    objective_model: float
    loss_model: float
    switch_count: int
    deviation_model: float
    gap: float
    status: str
    method: str
    nodes: int = 0
    configs: int = 0
    wall_time: float = 0.0
    objective_acpf: float | None = None
    loss_acpf_kw: float | None = None
    v_avg_acpf: float | None = None

    def to_json_dict(self, weights: ObjectiveWeights, base_mva: float) -> dict:
        return {
            "open_branches": sorted(self.open_branches),
            "svc_setpoints": {b: {"normalized": self.svc_hat[b],
                                  "physical": self.svc_physical[b]}
                              for b in self.svc_hat},
            "objective": {
                "model": self.objective_model,
                "loss_term": weights.loss_scale(base_mva) * self.loss_model,
                "switch_term": weights.beta * self.switch_count,
                "deviation_term": weights.gamma * self.deviation_model,
                "acpf": self.objective_acpf,
            },
            "loss_acpf_kw": self.loss_acpf_kw,
            "v_avg_acpf": self.v_avg_acpf,
            "switch_count": self.switch_count,
            "gap": self.gap,
            "status": self.status,
            "method": self.method,
            "nodes": self.nodes,
            "configs": self.configs,
            "wall_time": self.wall_time,
        }


def closed_mask_from_open(network: Network, open_branches: Sequence[str]) -> np.ndarray:
    """Branch mask with exactly the named branches open."""
    closed = np.ones(network.n_branch, dtype=bool)
    for name in open_branches:
        closed[network.branch_index[name]] = False
    return closed


# ---------------------------------------------------------------------------
# shared problem data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _ProblemData:
    g: np.ndarray            # net active injection per bus
    h: np.ndarray            # net reactive injection per bus
    w_lo: np.ndarray         # 2 - v_max per bus
    w_hi: np.ndarray         # 2 - v_min per bus
    sind: np.ndarray         # sin(angle cap) per branch
    p_cap: np.ndarray        # NO_CAP where unlimited
    q_cap: np.ndarray
    i_cap: np.ndarray
    svc: tuple[tuple[int, float, float], ...]   # (bus index, q_min, q_max)
    pf_c: float              # sqrt(eta/(1-eta)); negative disables


def _problem_data(network: Network, options: SolveOptions) -> _ProblemData:
    nb = network.n_bus
    w_lo = np.array([2.0 - b.v_max for b in network.buses])
    w_hi = np.array([2.0 - b.v_min for b in network.buses])
    sind = np.array([math.sin(br.delta_cap) for br in network.branches])
    cap = _kernels.NO_CAP
    p_cap = np.array([br.p_cap if br.p_cap is not None else cap for br in network.branches])
    q_cap = np.array([br.q_cap if br.q_cap is not None else cap for br in network.branches])
    i_cap = np.array([br.i_cap if br.i_cap is not None else cap for br in network.branches])
    svc = tuple((i, network.buses[i].svc_q_min, network.buses[i].svc_q_max)
                for i in network.svc_buses)
    pf_c = -1.0
    if options.pf_limit is not None:
        pf_c = math.sqrt(options.pf_limit / (1.0 - options.pf_limit))
    return _ProblemData(g=network.p_injection, h=network.q_injection,
                        w_lo=w_lo, w_hi=w_hi, sind=sind,
                        p_cap=p_cap, q_cap=q_cap, i_cap=i_cap,
                        svc=svc, pf_c=pf_c)


def _switch_count(network: Network, closed: np.ndarray) -> int:
    return int(np.sum(closed != network.normally_closed()))


# ---------------------------------------------------------------------------
# exact evaluation of a fixed topology (fix-and-resolve)
# ---------------------------------------------------------------------------

def _config_state(network: Network, closed: np.ndarray,
                  qc_hat: dict[int, float]):
    """Exact linear-model state on one topology via a dense linear solve.

    ``qc_hat`` maps bus index to a *normalized* reactive setpoint (treated as
    a constant additive term of the normalized injection).  Returns
    ``(topology, w, p_hat, q_hat)`` with flows oriented parent -> child.
    """
    topo = build_tree(network, closed)
    T = topo.path_incidence()
    rows = topo.tree_branches
    cols = topo.non_root_buses
    g = network.p_injection[cols]
    h = network.q_injection[cols]
    TR = T.T * network.r[rows]
    TX = T.T * network.x[rows]
    A = np.eye(len(cols)) + (TR @ T) * g + (TX @ T) * h
    rhs = np.full(len(cols), 2.0 - network.v0)
    qc_col = np.zeros(len(cols))
    col_of = {b: j for j, b in enumerate(cols)}
    for bus, qc in qc_hat.items():
        if bus in col_of:           # a setpoint at the root has no effect
            qc_col[col_of[bus]] = qc
    rhs -= TX @ (T @ qc_col)
    w_r = np.linalg.solve(A, rhs)
    w = np.full(network.n_bus, 2.0 - network.v0)
    w[cols] = w_r
    p_hat = np.zeros(network.n_branch)
    q_hat = np.zeros(network.n_branch)
    p_hat[rows] = -(T @ (g * w_r))
    q_hat[rows] = -(T @ (h * w_r + qc_col))
    return topo, w, p_hat, q_hat


def _config_violation(network: Network, data: _ProblemData, topo,
                      w: np.ndarray, p_hat: np.ndarray, q_hat: np.ndarray,
                      qc_hat: dict[int, float]) -> float:
    """Largest constraint violation of a solved topology state."""
    viol = 0.0
    r, x = network.r, network.x
    for i in topo.order[1:]:
        k = topo.parent_branch[i]
        p = topo.parent_bus[i]
        jt = network.to_idx[k]
        viol = max(viol, data.w_lo[i] - w[i], w[i] - data.w_hi[i])
        viol = max(viol, abs(x[k] * p_hat[k] - r[k] * q_hat[k])
                   - (2.0 - w[jt]) * data.sind[k])
        if data.p_cap[k] < _kernels.NO_CAP:
            viol = max(viol, abs(p_hat[k]) - data.p_cap[k] * w[p])
        if data.q_cap[k] < _kernels.NO_CAP:
            viol = max(viol, abs(q_hat[k]) - data.q_cap[k] * w[p])
        if data.i_cap[k] < _kernels.NO_CAP:
            viol = max(viol, p_hat[k] ** 2 + q_hat[k] ** 2 - data.i_cap[k] ** 2)
        if data.pf_c >= 0.0 and p == topo.order[0]:
            viol = max(viol, data.pf_c * abs(q_hat[k]) - p_hat[k])
    for bus, qmin, qmax in data.svc:
        qc = qc_hat.get(bus, 0.0)
        viol = max(viol, qmin * w[bus] - qc, qc - qmax * w[bus])
    return float(viol)


def _objective_terms(network: Network, weights: ObjectiveWeights,
                     closed: np.ndarray, w: np.ndarray,
                     p_hat: np.ndarray, q_hat: np.ndarray):
    loss = float(np.sum(network.r * (p_hat ** 2 + q_hat ** 2)))
    sw = _switch_count(network, closed)
    dev = float((network.v0 - 1.0) ** 2)
    root = network.root_index
    for i in range(network.n_bus):
        if i != root:
            dev += (1.0 - w[i]) ** 2
    obj = weights.loss_scale(network.base_mva) * loss + weights.beta * sw \
        + weights.gamma * dev
    return obj, loss, sw, dev


def _evaluate_config(network: Network, data: _ProblemData,
                     weights: ObjectiveWeights, options: SolveOptions,
                     closed: np.ndarray):
    """Exactly solve one topology, optimizing a single adjustable source.

    Returns ``(feasible, objective, qc_hat, (topo, w, p_hat, q_hat))``.
    Topologies with more than one adjustable source are rejected here; the
    branch-and-bound falls back to the QP value in that case.
    """
    if len(data.svc) > 1:
        raise ValueError("exact evaluation supports at most one adjustable source")
    if not data.svc:
        topo, w, p_hat, q_hat = _config_state(network, closed, {})
        viol = _config_violation(network, data, topo, w, p_hat, q_hat, {})
        obj, *_ = _objective_terms(network, weights, closed, w, p_hat, q_hat)
        return viol <= options.feastol, obj, {}, (topo, w, p_hat, q_hat)

    bus, qmin, qmax = data.svc[0]
    probe = qmax if abs(qmax) > 1e-12 else (qmin if abs(qmin) > 1e-12 else 1.0)
    topo, w0, p0, q0 = _config_state(network, closed, {bus: 0.0})
    _, w1, p1, q1 = _config_state(network, closed, {bus: probe})
    sc = 1.0 / probe
    dw = (w1 - w0) * sc
    dp = (p1 - p0) * sc
    dq = (q1 - q0) * sc
    lo, hi = -_INF, _INF
    ft = options.feastol

    def cut(c0: float, dc: float):
        """Intersect the interval with {q : c0 + q*dc <= 0}."""
        nonlocal lo, hi
        if dc > 1e-15:
            hi = min(hi, -c0 / dc)
        elif dc < -1e-15:
            lo = max(lo, -c0 / dc)
        elif c0 > ft:
            lo, hi = 1.0, 0.0

    r, x = network.r, network.x
    root = topo.order[0]
    for i in topo.order[1:]:
        k = topo.parent_branch[i]
        p = topo.parent_bus[i]
        jt = network.to_idx[k]
        cut(w0[i] - data.w_hi[i], dw[i])
        cut(data.w_lo[i] - w0[i], -dw[i])
        ang0 = x[k] * p0[k] - r[k] * q0[k]
        dang = x[k] * dp[k] - r[k] * dq[k]
        cut(ang0 - (2.0 - w0[jt]) * data.sind[k], dang + dw[jt] * data.sind[k])
        cut(-ang0 - (2.0 - w0[jt]) * data.sind[k], -dang + dw[jt] * data.sind[k])
        if data.p_cap[k] < _kernels.NO_CAP:
            for s in (1.0, -1.0):
                cut(s * p0[k] - data.p_cap[k] * w0[p], s * dp[k] - data.p_cap[k] * dw[p])
        if data.q_cap[k] < _kernels.NO_CAP:
            for s in (1.0, -1.0):
                cut(s * q0[k] - data.q_cap[k] * w0[p], s * dq[k] - data.q_cap[k] * dw[p])
        if data.i_cap[k] < _kernels.NO_CAP:
            qa = dp[k] ** 2 + dq[k] ** 2
            qb = 2.0 * (p0[k] * dp[k] + q0[k] * dq[k])
            qc0 = p0[k] ** 2 + q0[k] ** 2 - data.i_cap[k] ** 2
            if qa > 1e-18:
                disc = qb * qb - 4.0 * qa * qc0
                if disc < 0:
                    lo, hi = 1.0, 0.0
                else:
                    sq = math.sqrt(disc)
                    lo = max(lo, (-qb - sq) / (2.0 * qa))
                    hi = min(hi, (-qb + sq) / (2.0 * qa))
            else:
                cut(qc0, qb)
        if data.pf_c >= 0.0 and p == root:
            for s in (1.0, -1.0):
                cut(s * data.pf_c * q0[k] - p0[k], s * data.pf_c * dq[k] - dp[k])
    # source box: qmin*w_bus <= q <= qmax*w_bus, w_bus affine in q
    cut(-qmax * w0[bus], 1.0 - qmax * dw[bus])          # q - qmax*w <= 0
    cut(qmin * w0[bus], qmin * dw[bus] - 1.0)           # qmin*w - q <= 0
    if lo > hi:
        return False, _INF, {bus: 0.0}, None
    # quadratic objective in the setpoint
    alpha_s = weights.loss_scale(network.base_mva)
    rows = topo.tree_branches
    A2 = float(np.sum(alpha_s * network.r[rows] * (dp[rows] ** 2 + dq[rows] ** 2)))
    A1 = float(np.sum(alpha_s * network.r[rows] * 2.0
                      * (p0[rows] * dp[rows] + q0[rows] * dq[rows])))
    cols = topo.non_root_buses
    A2 += weights.gamma * float(np.sum(dw[cols] ** 2))
    A1 += weights.gamma * float(np.sum(2.0 * (w0[cols] - 1.0) * dw[cols]))
    if A2 > 1e-18:
        qstar = -A1 / (2.0 * A2)
    else:
        qstar = lo if A1 > 0 else hi
    qstar = min(max(qstar, lo), hi)
    topo, w, p_hat, q_hat = _config_state(network, closed, {bus: qstar})
    viol = _config_violation(network, data, topo, w, p_hat, q_hat, {bus: qstar})
    obj, *_ = _objective_terms(network, weights, closed, w, p_hat, q_hat)
    return viol <= options.feastol, obj, {bus: qstar}, (topo, w, p_hat, q_hat)


def _make_solution(network: Network, weights: ObjectiveWeights,
                   closed: np.ndarray, qc_hat: dict[int, float],
                   objective_model: float, gap: float, status: str,
                   method: str, nodes: int = 0, configs: int = 0,
                   wall_time: float = 0.0) -> ReconfigSolution:
    topo, w, p_hat, q_hat = _config_state(network, closed, qc_hat)
    _, loss, sw, dev = _objective_terms(network, weights, closed, w, p_hat, q_hat)
    opened = tuple(sorted(network.branches[k].name
                          for k in np.flatnonzero(~closed)))
    svc_hat = {network.buses[b].id: float(qc) for b, qc in qc_hat.items()}
    svc_phys = {network.buses[b].id: float(qc / w[b]) for b, qc in qc_hat.items()}
    return ReconfigSolution(open_branches=opened, closed=closed,
                            svc_hat=svc_hat, svc_physical=svc_phys,
                            objective_model=objective_model,
                            loss_model=loss, switch_count=sw,
                            deviation_model=dev, gap=gap, status=status,
                            method=method, nodes=nodes, configs=configs,
                            wall_time=wall_time)


# ---------------------------------------------------------------------------
# exhaustive enumeration oracle
# ---------------------------------------------------------------------------

def enumerate_radial(network: Network, weights: ObjectiveWeights,
                     options: SolveOptions = SolveOptions()) -> ReconfigSolution:
    """Globally solve by evaluating every radial topology.

    Candidate open sets are drawn from the switchable branches that lie on
    fundamental loops; each spanning-tree candidate is solved with the
    compiled fixed-point kernel and adjustable sources are optimized in
    closed form.  Intended as the validation oracle for :func:`solve_miqp`.
    """
    t0 = time.perf_counter()
    data = _problem_data(network, options)
    if len(data.svc) > 1:
        raise ValueError("enumeration supports at most one adjustable source")
    ls = loop_structure(network)
    theta = [k for k in ls.loop_branches if network.branches[k].switchable]
    n_open = network.n_branch - (network.n_bus - 1)
    if n_open == 0:
        closed = np.ones(network.n_branch, dtype=bool)
        feasible, obj, qc, _ = _evaluate_config(network, data, weights, options, closed)
        if not feasible:
            raise Infeasible("the only radial topology violates operating limits")
        return _make_solution(network, weights, closed, qc, obj, 0.0,
                              "optimal", "enumeration", configs=1,
                              wall_time=time.perf_counter() - t0)
    if n_open > len(theta):
        raise Infeasible("not enough switchable loop branches to break all cycles")
    total = comb(len(theta), n_open)
    if total > options.enumeration_cap:
        raise TooLarge(f"{total} candidate topologies exceed the cap "
                       f"of {options.enumeration_cap}")
    theta_arr = np.array(theta, dtype=np.int64)
    combos = np.array(list(itertools.combinations(range(len(theta)), n_open)),
                      dtype=np.int64)
    ok = _kernels.filter_radial(combos, theta_arr, network.from_idx,
                                network.to_idx, network.n_bus, network.n_branch)
    valid = combos[ok == 1]
    if len(valid) == 0:
        raise Infeasible("no switch assignment yields a radial topology")
    ptr, adj_e, adj_v = _csr_adjacency(network)
    if data.svc:
        svc_bus, svc_lo, svc_hi = data.svc[0]
    else:
        svc_bus, svc_lo, svc_hi = -1, 0.0, 0.0
    best, bestc, bestq, nfeas = _kernels.evaluate_configs(
        valid, theta_arr, network.n_bus, network.n_branch,
        ptr, adj_e, adj_v, network.to_idx,
        network.r, network.x, data.g, data.h,
        network.normally_closed().astype(np.uint8), network.root_index,
        network.v0, weights.loss_scale(network.base_mva), weights.beta,
        weights.gamma, svc_bus, svc_lo, svc_hi,
        data.w_lo, data.w_hi, data.sind,
        data.p_cap, data.q_cap, data.i_cap, data.pf_c, options.feastol)
    if bestc < 0:
        raise Infeasible("every radial topology violates operating limits")
    closed = np.ones(network.n_branch, dtype=bool)
    closed[theta_arr[valid[bestc]]] = False
    qc_hat = {svc_bus: float(bestq)} if svc_bus >= 0 else {}
    return _make_solution(network, weights, closed, qc_hat, float(best), 0.0,
                          "optimal", "enumeration", configs=len(valid),
                          wall_time=time.perf_counter() - t0)


def _csr_adjacency(network: Network):
    n, m = network.n_bus, network.n_branch
    deg = np.zeros(n + 1, dtype=np.int64)
    for k in range(m):
        deg[network.from_idx[k] + 1] += 1
        deg[network.to_idx[k] + 1] += 1
    ptr = np.cumsum(deg)
    adj_e = np.zeros(ptr[-1], dtype=np.int64)
    adj_v = np.zeros(ptr[-1], dtype=np.int64)
    fill = ptr[:-1].copy()
    for k in range(m):
        a, b = network.from_idx[k], network.to_idx[k]
        adj_e[fill[a]] = k
        adj_v[fill[a]] = b
        fill[a] += 1
        adj_e[fill[b]] = k
        adj_v[fill[b]] = a
        fill[b] += 1
    return ptr, adj_e, adj_v


# ---------------------------------------------------------------------------
# MIQP assembly
# ---------------------------------------------------------------------------

@dataclass
class MiqpModel:
    network: Network
    weights: ObjectiveWeights
    options: SolveOptions
    data: _ProblemData
    loops: LoopStructure
    n_var: int
    fp_var: np.ndarray
    fq_var: np.ndarray
    w_var: np.ndarray          # -1 for the root bus
    qc_var: dict[int, int]     # svc bus index -> variable
    x_var: np.ndarray
    u_var: np.ndarray | None   # connectivity-commodity variables
    P: sp.csc_matrix
    q: np.ndarray
    const: float
    A: sp.csc_matrix
    l: np.ndarray
    u: np.ndarray
    x_row: np.ndarray          # constraint row holding each binary's bounds
    x_lo0: np.ndarray          # root-node lower bounds after presolve fixing
    x_hi0: np.ndarray
    free_x: np.ndarray         # branch indices still binary after fixing
    thermal: np.ndarray        # branch indices with a thermal limit
    z_lo: np.ndarray           # valid box on every variable (for dual bounds)
    z_hi: np.ndarray


def overlap_loop_cuts(loops: LoopStructure) -> list[tuple[tuple[int, ...], int]]:
    """Equality cuts: within each overlap set, exactly ``n_loops`` branches open.

    Returned as ``(branch_indices, n_closed)`` pairs meaning
    ``sum(x[branches]) == n_closed``.
    """
    return [(ov.branches, ov.n_branches - ov.n_loops)
            for ov in loops.overlap_sets]


def build_miqp(network: Network, weights: ObjectiveWeights,
               options: SolveOptions = SolveOptions()) -> MiqpModel:
    """Assemble the mixed-integer quadratic program.

    Constraint groups: normalized power balance per bus, big-M voltage and
    flow coupling to the binaries, bus voltage limits, branch capacity and
    angle limits, adjustable-source boxes, the spanning-tree cardinality
    equality, a single-commodity connectivity flow sourced at generator and
    compensator buses, optional supply power-factor constraint, and optional
    loop cuts.  Thermal (quadratic) limits are enforced by supporting
    hyperplanes added during the solve.
    """
    data = _problem_data(network, options)
    ls = loop_structure(network)
    loop_set = set(ls.loop_branches)
    nb, m = network.n_bus, network.n_branch
    root = network.root_index
    switch_free = [k for k in range(m)
                   if network.branches[k].switchable and k in loop_set]
    if not switch_free and not data.svc:
        raise NothingToOptimize("no switchable branch and no adjustable source")

    # variable layout
    fp_var = np.arange(m)
    fq_var = np.arange(m, 2 * m)
    w_var = np.full(nb, -1, dtype=np.int64)
    nv = 2 * m
    for i in range(nb):
        if i != root:
            w_var[i] = nv
            nv += 1
    qc_var = {}
    for bus, _, _ in data.svc:
        qc_var[bus] = nv
        nv += 1
    x_var = np.arange(nv, nv + m)
    nv += m
    sources = sorted({b for b in network.dg_buses if b != root}
                     | {b for b, _, _ in data.svc if b != root})
    u_var = None
    if sources:
        u_var = np.arange(nv, nv + m)
        nv += m

    # big-M constants
    s_p = float(np.sum(np.abs(data.g)))
    s_q = float(np.sum(np.abs(data.h))) + sum(max(abs(lo), abs(hi))
                                              for _, lo, hi in data.svc)
    w_top = max(float(np.max(data.w_hi)), 2.0 - network.v0)
    cap = _kernels.NO_CAP
    m_fp = np.minimum(data.p_cap, s_p) * w_top
    m_fq = np.minimum(data.q_cap, s_q) * w_top
    w_span = float(np.max(data.w_hi) - np.min(data.w_lo))
    m_v = w_span + network.r * m_fp + network.x * m_fq

    rows: list[dict[int, float]] = []
    lo_b: list[float] = []
    hi_b: list[float] = []

    def add(coefs: dict[int, float], lo: float, hi: float) -> int:
        rows.append(coefs)
        lo_b.append(lo)
        hi_b.append(hi)
        return len(rows) - 1

    w0 = 2.0 - network.v0

    def w_term(coefs: dict[int, float], bus: int, coef: float) -> float:
        """Add coef*w_bus; returns the constant contributed if bus is root."""
        if bus == root:
            return coef * w0
        v = w_var[bus]
        coefs[v] = coefs.get(v, 0.0) + coef
        return 0.0

    # binary bound rows (first, so the solver can retune them per node)
    x_row = np.array([add({int(x_var[k]): 1.0}, 0.0, 1.0) for k in range(m)])

    # normalized power balance at every non-root bus
    out_br = [[] for _ in range(nb)]
    in_br = [[] for _ in range(nb)]
    for k in range(m):
        out_br[network.from_idx[k]].append(k)
        in_br[network.to_idx[k]].append(k)
    for i in range(nb):
        if i == root:
            continue
        cp: dict[int, float] = {}
        cq: dict[int, float] = {}
        for k in out_br[i]:
            cp[int(fp_var[k])] = 1.0
            cq[int(fq_var[k])] = 1.0
        for k in in_br[i]:
            cp[int(fp_var[k])] = cp.get(int(fp_var[k]), 0.0) - 1.0
            cq[int(fq_var[k])] = cq.get(int(fq_var[k]), 0.0) - 1.0
        cp[int(w_var[i])] = -data.g[i]
        cq[int(w_var[i])] = cq.get(int(w_var[i]), 0.0) - data.h[i]
        if i in qc_var:
            cq[qc_var[i]] = -1.0
        add(cp, 0.0, 0.0)
        add(cq, 0.0, 0.0)

    # voltage coupling with big-M release on open branches
    for k in range(m):
        base: dict[int, float] = {int(fp_var[k]): -network.r[k],
                                  int(fq_var[k]): -network.x[k]}
        const = w_term(base, int(network.to_idx[k]), 1.0)
        const += w_term(base, int(network.from_idx[k]), -1.0)
        up = dict(base)
        up[int(x_var[k])] = m_v[k]
        add(up, -_INF, m_v[k] - const)
        dn = dict(base)
        dn[int(x_var[k])] = -m_v[k]
        add(dn, -m_v[k] - const, _INF)

    # flows forced to zero on open branches
    for k in range(m):
        add({int(fp_var[k]): 1.0, int(x_var[k]): -m_fp[k]}, -_INF, 0.0)
        add({int(fp_var[k]): 1.0, int(x_var[k]): m_fp[k]}, 0.0, _INF)
        add({int(fq_var[k]): 1.0, int(x_var[k]): -m_fq[k]}, -_INF, 0.0)
        add({int(fq_var[k]): 1.0, int(x_var[k]): m_fq[k]}, 0.0, _INF)

    # bus voltage limits
    for i in range(nb):
        if i != root:
            add({int(w_var[i]): 1.0}, data.w_lo[i], data.w_hi[i])

    # angle-difference limits (inactive when the branch is open: flows are 0)
    for k in range(m):
        for sgn in (1.0, -1.0):
            coefs = {int(fp_var[k]): sgn * network.x[k],
                     int(fq_var[k]): -sgn * network.r[k]}
            const = w_term(coefs, int(network.to_idx[k]), data.sind[k])
            add(coefs, -_INF, 2.0 * data.sind[k] - const)

    # branch capacity limits scaled by the sending-end proxy
    for k in range(m):
        i = int(network.from_idx[k])
        if data.p_cap[k] < cap:
            for sgn in (1.0, -1.0):
                coefs = {int(fp_var[k]): sgn}
                const = w_term(coefs, i, -data.p_cap[k])
                add(coefs, -_INF, -const)
        if data.q_cap[k] < cap:
            for sgn in (1.0, -1.0):
                coefs = {int(fq_var[k]): sgn}
                const = w_term(coefs, i, -data.q_cap[k])
                add(coefs, -_INF, -const)

    # adjustable-source boxes
    for bus, qmin, qmax in data.svc:
        coefs = {qc_var[bus]: 1.0}
        const = w_term(coefs, bus, -qmax)
        add(coefs, -_INF, -const)
        coefs = {qc_var[bus]: 1.0}
        const = w_term(coefs, bus, -qmin)
        add(coefs, -const, _INF)

    # supply power-factor limit on branches incident to the root
    if data.pf_c >= 0.0:
        for k in range(m):
            s = 0.0
            if network.from_idx[k] == root:
                s = 1.0
            elif network.to_idx[k] == root:
                s = -1.0
            if s:
                for sgn in (1.0, -1.0):
                    add({int(fp_var[k]): s, int(fq_var[k]): -sgn * data.pf_c * s},
                        0.0, _INF)

    # spanning-tree cardinality
    add({int(x_var[k]): 1.0 for k in range(m)}, nb - 1.0, nb - 1.0)

    # single-commodity connectivity flow from generator/compensator buses
    if sources:
        ns = float(len(sources))
        for k in range(m):
            add({int(u_var[k]): 1.0, int(x_var[k]): -ns}, -_INF, 0.0)
            add({int(u_var[k]): 1.0, int(x_var[k]): ns}, 0.0, _INF)
        src = set(sources)
        for i in range(nb):
            if i == root:
                continue
            coefs = {}
            for k in out_br[i]:
                coefs[int(u_var[k])] = 1.0
            for k in in_br[i]:
                coefs[int(u_var[k])] = coefs.get(int(u_var[k]), 0.0) - 1.0
            rhs = 1.0 if i in src else 0.0
            add(coefs, rhs, rhs)

    # loop cuts: necessary conditions for radiality
    if options.loop_cuts:
        for branches, n_closed in overlap_loop_cuts(ls):
            add({int(x_var[k]): 1.0 for k in branches},
                float(n_closed), float(n_closed))
        for loop in ls.loops:
            add({int(x_var[k]): 1.0 for k in loop},
                -_INF, float(len(loop) - 1))

    # objective: 0.5 z'Pz + q'z + const
    p_diag = np.zeros(nv)
    q_lin = np.zeros(nv)
    alpha_s = weights.loss_scale(network.base_mva)
    p_diag[fp_var] = 2.0 * alpha_s * network.r
    p_diag[fq_var] = 2.0 * alpha_s * network.r
    const = weights.gamma * (network.v0 - 1.0) ** 2
    for i in range(nb):
        if i != root:
            p_diag[w_var[i]] = 2.0 * weights.gamma
            q_lin[w_var[i]] = -2.0 * weights.gamma
            const += weights.gamma
    x0 = network.normally_closed().astype(float)
    p_diag[x_var] = 2.0 * weights.beta
    q_lin[x_var] = -2.0 * weights.beta * x0
    const += weights.beta * float(np.sum(x0 ** 2))

    # presolve: branches that are unswitchable or on no loop stay closed
    x_lo0 = np.zeros(m)
    x_hi0 = np.ones(m)
    for k in range(m):
        if k not in switch_free:
            x_lo0[k] = x_hi0[k] = 1.0

    data_rows = []
    data_cols = []
    data_vals = []
    for rix, coefs in enumerate(rows):
        for v, c in coefs.items():
            data_rows.append(rix)
            data_cols.append(v)
            data_vals.append(c)
    A = sp.csc_matrix((data_vals, (data_rows, data_cols)),
                      shape=(len(rows), nv))

    # componentwise box containing every feasible point, for dual bounding
    z_lo = np.full(nv, -_INF)
    z_hi = np.full(nv, _INF)
    z_lo[fp_var], z_hi[fp_var] = -m_fp, m_fp
    z_lo[fq_var], z_hi[fq_var] = -m_fq, m_fq
    for i in range(nb):
        if i != root:
            z_lo[w_var[i]] = data.w_lo[i]
            z_hi[w_var[i]] = data.w_hi[i]
    for bus, qmin, qmax in data.svc:
        qb = max(abs(qmin), abs(qmax)) * w_top
        z_lo[qc_var[bus]], z_hi[qc_var[bus]] = -qb, qb
    z_lo[x_var], z_hi[x_var] = 0.0, 1.0
    if u_var is not None:
        ns = float(len(sources))
        z_lo[u_var], z_hi[u_var] = -ns, ns
    return MiqpModel(network=network, weights=weights, options=options,
                     data=data, loops=ls, n_var=nv,
                     fp_var=fp_var, fq_var=fq_var, w_var=w_var,
                     qc_var=qc_var, x_var=x_var, u_var=u_var,
                     P=sp.diags(p_diag, format="csc"), q=q_lin, const=const,
                     A=A, l=np.array(lo_b), u=np.array(hi_b),
                     x_row=x_row, x_lo0=x_lo0, x_hi0=x_hi0,
                     free_x=np.array(sorted(switch_free), dtype=np.int64),
                     thermal=np.flatnonzero(data.i_cap < cap),
                     z_lo=z_lo, z_hi=z_hi)


# ---------------------------------------------------------------------------
# branch and bound
# ---------------------------------------------------------------------------

class _NodeQp:
    """OSQP wrapper whose binary bounds are retuned per node.

    Globally valid cut rows (no-good cuts for non-radial integer points and
    thermal supporting hyperplanes) are appended by rebuilding the solver.
    """

    def __init__(self, model: MiqpModel):
        self.model = model
        self.cut_rows: list[dict[int, float]] = []
        self.cut_lo: list[float] = []
        self.cut_hi: list[float] = []
        self._build()

    def _build(self):
        m = self.model
        if self.cut_rows:
            data_r, data_c, data_v = [], [], []
            for rix, coefs in enumerate(self.cut_rows):
                for v, c in coefs.items():
                    data_r.append(rix)
                    data_c.append(v)
                    data_v.append(c)
            extra = sp.csc_matrix((data_v, (data_r, data_c)),
                                  shape=(len(self.cut_rows), m.n_var))
            A = sp.vstack([m.A, extra], format="csc")
            lo = np.concatenate([m.l, self.cut_lo])
            hi = np.concatenate([m.u, self.cut_hi])
        else:
            A, lo, hi = m.A, m.l.copy(), m.u.copy()
        self.lo = np.asarray(lo, dtype=float).copy()
        self.hi = np.asarray(hi, dtype=float).copy()
        self.Afull = sp.csc_matrix(A)
        self.prob = osqp.OSQP()
        self.prob.setup(P=m.P, q=m.q, A=self.Afull, l=self.lo, u=self.hi,
                        verbose=False, polishing=False, eps_abs=3e-4,
                        eps_rel=3e-4, rho=0.02, max_iter=3000)

    def add_cut(self, coefs: dict[int, float], lo: float, hi: float):
        self.cut_rows.append(coefs)
        self.cut_lo.append(lo)
        self.cut_hi.append(hi)
        self._build()

    def solve(self, x_lo: np.ndarray, x_hi: np.ndarray,
              warm: tuple[np.ndarray, np.ndarray] | None = None):
        """Solve one node relaxation, warm-started from the parent iterates.

        Returns ``(kind, objective, z, y)`` where ``kind`` is ``"solved"``,
        ``"infeasible"``, or ``"unknown"`` (iteration limit; the primal
        iterate is still usable for branching).  The objective reported by
        the solver is approximate either way; rigorous pruning must go
        through :meth:`dual_bound`.
        """
        m = self.model
        self.lo[m.x_row] = x_lo
        self.hi[m.x_row] = x_hi
        self.prob.update(l=self.lo, u=self.hi)
        if warm is not None:
            z0, y0 = warm
            if len(y0) < len(self.lo):
                y0 = np.concatenate([y0, np.zeros(len(self.lo) - len(y0))])
            self.prob.warm_start(x=z0, y=y0)
        res = self.prob.solve(raise_error=False)
        status = res.info.status
        obj = float(res.info.obj_val) + m.const
        z = np.asarray(res.x) if res.x is not None else None
        y = np.asarray(res.y) if res.y is not None else None
        if status in ("solved", "solved inaccurate"):
            return "solved", obj, z, y
        if "infeasible" in status and "inaccurate" not in status:
            return "infeasible", None, None, None
        return "unknown", obj, z, y

    def dual_bound(self, y: np.ndarray):
        """Rigorous node lower bound from a dual vector via weak duality.

        For any multipliers ``y`` the Lagrangian ``min_z 0.5 z'Pz + q'z +
        y'(Az - b)`` relaxed over the valid variable box is a lower bound
        on the node optimum, independent of how accurately the QP was
        solved.  Multiplier entries pushing against an infinite bound are
        projected to zero, which keeps the bound valid.  Uses the row
        bounds installed by the last :meth:`solve` call.

        Returns ``(bound, d_open, d_closed)`` where the per-branch deltas
        give the (nonnegative) amount the bound rises when that switch
        binary is fixed open respectively closed -- the bound stays valid
        under box restriction, which enables reduced-cost fixing and
        bound-driven branching.
        """
        m = self.model
        big = _INF / 2
        ypos = np.where((y > 0.0) & (self.hi < big), y, 0.0)
        yneg = np.where((y < 0.0) & (self.lo > -big), y, 0.0)
        y_eff = ypos + yneg
        shift = float(ypos @ np.where(self.hi < big, self.hi, 0.0)
                      + yneg @ np.where(self.lo > -big, self.lo, 0.0))
        r = m.q + self.Afull.T @ y_eff
        pd = m.P.diagonal()
        lo = m.z_lo.copy()
        hi = m.z_hi.copy()
        lo[m.x_var] = self.lo[m.x_row]
        hi[m.x_var] = self.hi[m.x_row]
        c = np.where(pd > 0.0, np.clip(np.divide(-r, pd, where=pd > 0.0,
                                                 out=np.zeros_like(r)), lo, hi),
                     np.where(r > 0.0, lo, hi))
        terms = 0.5 * pd * c * c + r * c
        bound = float(np.sum(terms)) - shift + m.const
        xs = m.x_var
        d_open = -terms[xs]
        d_closed = 0.5 * pd[xs] + r[xs] - terms[xs]
        return bound, d_open, d_closed


def _propagate(network: Network, x_lo: np.ndarray, x_hi: np.ndarray):
    """Fix switch binaries implied by radiality; ``None`` if contradictory.

    Three rules run to a fixed point: an undecided branch whose endpoints
    are already connected through fixed-closed branches must open (cycle
    rule); a bridge of the graph without the fixed-open branches must close
    (bridge rule, which also detects disconnection); and once the number of
    fixed-open or fixed-closed branches reaches its spanning-tree quota the
    remaining branches are forced (counting rule).
    """
    n, m = network.n_bus, network.n_branch
    fr, to = network.from_idx, network.to_idx
    n_open_req = m - (n - 1)
    x_lo = x_lo.copy()
    x_hi = x_hi.copy()
    while True:
        changed = False
        closed_fix = x_lo > 0.5
        open_fix = x_hi < 0.5
        if int(open_fix.sum()) > n_open_req or int(closed_fix.sum()) > n - 1:
            return None
        # cycle rule via union-find over the fixed-closed branches
        parent = list(range(n))

        def find(a: int) -> int:
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for k in range(m):
            if closed_fix[k]:
                a, b = find(fr[k]), find(to[k])
                if a == b:
                    return None
                parent[a] = b
        for k in range(m):
            if not closed_fix[k] and not open_fix[k] and find(fr[k]) == find(to[k]):
                x_hi[k] = 0.0
                changed = True
        # counting rules
        open_fix = x_hi < 0.5
        if int(open_fix.sum()) == n_open_req:
            for k in range(m):
                if not open_fix[k] and x_lo[k] < 0.5:
                    x_lo[k] = 1.0
                    changed = True
        closed_fix = x_lo > 0.5
        if int(closed_fix.sum()) == n - 1:
            for k in range(m):
                if not closed_fix[k] and x_hi[k] > 0.5:
                    x_hi[k] = 0.0
                    changed = True
        # bridge rule on the graph without the fixed-open branches
        open_fix = x_hi < 0.5
        adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        for k in range(m):
            if not open_fix[k]:
                adj[fr[k]].append((to[k], k))
                adj[to[k]].append((fr[k], k))
        disc = [0] * n
        low = [0] * n
        seen = [False] * n
        timer = 1
        seen[0] = True
        disc[0] = low[0] = timer
        stack = [(0, -1, iter(adj[0]))]
        while stack:
            u, pk, it = stack[-1]
            advanced = False
            for v, k in it:
                if k == pk:
                    continue
                if seen[v]:
                    low[u] = min(low[u], disc[v])
                else:
                    timer += 1
                    seen[v] = True
                    disc[v] = low[v] = timer
                    stack.append((v, k, iter(adj[v])))
                    advanced = True
                    break
            if not advanced:
                stack.pop()
                if stack:
                    pu = stack[-1][0]
                    low[pu] = min(low[pu], low[u])
                    if low[u] > disc[pu] and x_lo[pk] < 0.5:
                        x_lo[pk] = 1.0
                        changed = True
        if not all(seen):
            return None
        if not changed:
            return x_lo, x_hi


def _tree_path_edges(topo, a: int, b: int) -> list[int]:
    """Branch indices on the tree path between buses ``a`` and ``b``."""
    edges: list[int] = []
    while topo.depth[a] > topo.depth[b]:
        edges.append(int(topo.parent_branch[a]))
        a = int(topo.parent_bus[a])
    while topo.depth[b] > topo.depth[a]:
        edges.append(int(topo.parent_branch[b]))
        b = int(topo.parent_bus[b])
    while a != b:
        edges.append(int(topo.parent_branch[a]))
        edges.append(int(topo.parent_branch[b]))
        a = int(topo.parent_bus[a])
        b = int(topo.parent_bus[b])
    return edges


def _no_good_cut(model: MiqpModel, x_int: np.ndarray) -> tuple[dict[int, float], float, float]:
    """Exclude one binary assignment: sum over flipped literals >= 1."""
    coefs = {}
    rhs = 1.0
    for k in model.free_x:
        if x_int[k] > 0.5:
            coefs[int(model.x_var[k])] = -1.0
            rhs -= 1.0
        else:
            coefs[int(model.x_var[k])] = 1.0
    return coefs, rhs, _INF


def solve_miqp(model: MiqpModel) -> ReconfigSolution:
    """Best-first branch-and-bound over the switch binaries.

    Node relaxations keep the binaries in [0, 1] and are convex QPs.
    Integer points must pass a spanning-tree verification; non-radial ones
    are excluded with no-good cuts, so the commodity-flow constraints never
    need to be sufficient on their own.  Incumbent objectives are recomputed
    by an exact fixed-topology resolve.  Returns a proven optimum within the
    configured relative gap, or the incumbent with status ``incomplete``
    when the node or time budget runs out.
    """
    t0 = time.perf_counter()
    net = model.network
    opts = model.options
    weights = model.weights
    data = model.data
    qp = _NodeQp(model)
    exact_ok = len(data.svc) <= 1

    def eval_config(closed: np.ndarray):
        if exact_ok:
            return _evaluate_config(net, data, weights, opts, closed)
        x_fix = closed.astype(float)
        kind, obj, z, _ = qp.solve(x_fix, x_fix)
        if kind in ("infeasible", "unknown"):
            return False, _INF, {}, None
        qc = {bus: float(z[v]) for bus, v in model.qc_var.items()}
        return True, obj, qc, None

    switchable = np.zeros(net.n_branch, dtype=bool)
    switchable[model.free_x] = True

    def local_search(closed: np.ndarray, obj: float, qc: dict[int, float]):
        """Greedy branch exchange: close one tie, reopen one loop branch."""
        while True:
            topo = build_tree(net, closed)
            best = (obj, None, None, qc)
            for t in np.flatnonzero(~closed & switchable):
                a, b = net.from_idx[t], net.to_idx[t]
                for k in _tree_path_edges(topo, a, b):
                    if not switchable[k]:
                        continue
                    trial = closed.copy()
                    trial[t] = True
                    trial[k] = False
                    feas, o, q, _ = eval_config(trial)
                    if feas and o < best[0] - 1e-12:
                        best = (o, t, k, q)
            if best[1] is None:
                return closed, obj, qc
            obj, qc = best[0], best[3]
            closed = closed.copy()
            closed[best[1]] = True
            closed[best[2]] = False

    n_open_req = net.n_branch - (net.n_bus - 1)
    if exact_ok:
        ptr, adj_e, adj_v = _csr_adjacency(net)
        closed0_u8 = net.normally_closed().astype(np.uint8)
        if data.svc:
            svc_bus, svc_lo, svc_hi = data.svc[0]
        else:
            svc_bus, svc_lo, svc_hi = -1, 0.0, 0.0
    configs = 0

    inc_obj = _INF
    inc_closed = None
    inc_qc: dict[int, float] = {}
    # seed with the base configuration when it is radial and feasible, then
    # improve it by exact branch-exchange local search
    base_closed = net.normally_closed()
    try:
        build_tree(net, base_closed)
        feas, obj, qc, _ = eval_config(base_closed)
        if feas:
            inc_closed, inc_obj, inc_qc = local_search(base_closed, obj, qc)
    except (NotRadialError, DisconnectedError):
        pass

    seq = itertools.count()
    heap = [(-_INF, next(seq), model.x_lo0.copy(), model.x_hi0.copy(), None)]
    nodes = 0
    proven_lb = -_INF
    status = "optimal"

    def tol_abs() -> float:
        return max(opts.gap, opts.gap * abs(inc_obj)) if np.isfinite(inc_obj) \
            else opts.gap

    def try_incumbent(closed: np.ndarray):
        nonlocal inc_obj, inc_closed, inc_qc
        feas, exact_obj, qc, _ = eval_config(closed)
        if feas and exact_obj < inc_obj - 1e-12:
            inc_obj, inc_closed, inc_qc = exact_obj, closed, qc
        return feas

    out_of_budget = False
    while heap:
        lb, _, x_lo, x_hi, warm = heapq.heappop(heap)
        proven_lb = lb
        if lb >= inc_obj - tol_abs():
            proven_lb = inc_obj
            break
        if out_of_budget:
            break
        # depth-first dive along one branching chain: each child differs
        # from its parent by a single bound, so the warm starts stay hot;
        # since every node below the cutoff must be processed eventually,
        # the dive order costs no extra nodes
        while True:
            if nodes >= opts.max_nodes or (opts.time_limit is not None
                                           and time.perf_counter() - t0 > opts.time_limit):
                status = "incomplete"
                out_of_budget = True
                break
            # logical propagation: fix binaries implied by radiality
            prop = _propagate(net, x_lo, x_hi)
            if prop is None:
                break
            x_lo, x_hi = prop
            free = model.free_x[x_lo[model.free_x] < x_hi[model.free_x]]
            if len(free) == 0:
                # fully fixed: bypass the QP and evaluate the point exactly
                closed = x_lo > 0.5
                try:
                    build_tree(net, closed)
                except (NotRadialError, DisconnectedError):
                    break
                try_incumbent(closed)
                break
            # exhaustive tail: once few enough switch combinations remain,
            # resolve the whole subtree exactly with the compiled kernel
            if exact_ok:
                fixed_open = np.flatnonzero(x_hi < 0.5)
                s_left = n_open_req - len(fixed_open)
                if s_left > len(free):
                    break
                if comb(len(free), s_left) <= _TAIL_CONFIGS:
                    theta_arr = np.concatenate([free, fixed_open])
                    combos = np.empty((comb(len(free), s_left),
                                       s_left + len(fixed_open)), dtype=np.int64)
                    for ci, sub in enumerate(itertools.combinations(
                            range(len(free)), s_left)):
                        combos[ci, :s_left] = sub
                        combos[ci, s_left:] = np.arange(
                            len(free), len(theta_arr))
                    ok = _kernels.filter_radial(combos, theta_arr,
                                                net.from_idx, net.to_idx,
                                                net.n_bus, net.n_branch)
                    valid = combos[ok == 1]
                    configs += len(valid)
                    if len(valid):
                        best, bestc, _, _ = _kernels.evaluate_configs(
                            valid, theta_arr, net.n_bus, net.n_branch,
                            ptr, adj_e, adj_v, net.to_idx,
                            net.r, net.x, data.g, data.h, closed0_u8,
                            net.root_index, net.v0,
                            weights.loss_scale(net.base_mva), weights.beta,
                            weights.gamma, svc_bus, svc_lo, svc_hi,
                            data.w_lo, data.w_hi, data.sind,
                            data.p_cap, data.q_cap, data.i_cap,
                            data.pf_c, opts.feastol)
                        if bestc >= 0 and best < inc_obj - 1e-12:
                            closed = np.ones(net.n_branch, dtype=bool)
                            closed[theta_arr[valid[bestc]]] = False
                            try_incumbent(closed)
                    break
            nodes += 1
            kind, obj, z, y = qp.solve(x_lo, x_hi, warm)
            if kind == "infeasible":
                break
            if y is not None:
                g, d_open, d_closed = qp.dual_bound(y)
                node_lb = max(g, lb)
            else:
                g, d_open, d_closed = -_INF, None, None
                node_lb = lb
            cutoff = inc_obj - tol_abs()
            if node_lb >= cutoff:
                break
            if kind == "unknown":
                # iteration limit: keep the dual bound and split the node
                if z is not None:
                    frac = np.abs(z[model.x_var] - np.round(z[model.x_var]))
                    k = int(free[np.argmax(frac[free])])
                else:
                    k = int(free[0])
                left_hi = x_hi.copy()
                left_hi[k] = 0.0
                right_lo = x_lo.copy()
                right_lo[k] = 1.0
                heapq.heappush(heap, (node_lb, next(seq), x_lo, left_hi, warm))
                heapq.heappush(heap, (node_lb, next(seq), right_lo, x_hi, warm))
                break
            # thermal limits: add supporting hyperplanes where violated,
            # then resolve the same node
            if len(model.thermal):
                violated = False
                for k in model.thermal:
                    fp = z[model.fp_var[k]]
                    fq = z[model.fq_var[k]]
                    nrm = math.hypot(fp, fq)
                    if nrm ** 2 > data.i_cap[k] ** 2 + 1e-8:
                        qp.add_cut({int(model.fp_var[k]): fp / nrm,
                                    int(model.fq_var[k]): fq / nrm},
                                   -_INF, float(data.i_cap[k]))
                        violated = True
                if violated:
                    lb, warm = node_lb, (z, y)
                    continue
            xv = z[model.x_var]
            frac = np.abs(xv - np.round(xv))
            if np.max(frac[model.free_x]) < 1e-5:
                x_int = np.round(xv)
                x_int[model.x_lo0 == 1.0] = 1.0
                closed = x_int > 0.5
                try:
                    build_tree(net, closed)
                    radial = True
                except (NotRadialError, DisconnectedError):
                    radial = False
                if radial and try_incumbent(closed):
                    break
                qp.add_cut(*_no_good_cut(model, x_int))
                lb, warm = node_lb, None
                continue
            # reduced-cost fixing: fix binaries whose opposite value is
            # already proven worse than the incumbent by the dual bound
            if d_open is not None and np.isfinite(inc_obj):
                x_lo = x_lo.copy()
                x_hi = x_hi.copy()
                for k in free:
                    if g + d_open[k] >= cutoff:
                        x_lo[k] = 1.0
                    elif g + d_closed[k] >= cutoff:
                        x_hi[k] = 0.0
                free = model.free_x[x_lo[model.free_x] < x_hi[model.free_x]]
                if len(free) == 0:
                    lb, warm = node_lb, (z, y)
                    continue
            # branch on the most fractional free binary; dive toward the
            # side the relaxation already leans to
            k = int(free[np.argmax(frac[free])])
            lb_left = max(node_lb, g + d_open[k]) if d_open is not None else node_lb
            lb_right = max(node_lb, g + d_closed[k]) if d_closed is not None else node_lb
            left_hi = x_hi.copy()
            left_hi[k] = 0.0
            right_lo = x_lo.copy()
            right_lo[k] = 1.0
            if xv[k] >= 0.5:
                if lb_left < cutoff or not np.isfinite(inc_obj):
                    heapq.heappush(heap, (lb_left, next(seq), x_lo, left_hi, (z, y)))
                if lb_right >= cutoff and np.isfinite(inc_obj):
                    break
                lb, x_lo, warm = lb_right, right_lo, (z, y)
            else:
                if lb_right < cutoff or not np.isfinite(inc_obj):
                    heapq.heappush(heap, (lb_right, next(seq), right_lo, x_hi, (z, y)))
                if lb_left >= cutoff and np.isfinite(inc_obj):
                    break
                lb, x_hi, warm = lb_left, left_hi, (z, y)
    else:
        if not out_of_budget:
            proven_lb = inc_obj if np.isfinite(inc_obj) else proven_lb

    if inc_closed is None:
        if status == "incomplete":
            raise Infeasible("budget exhausted before any feasible topology was found")
        raise Infeasible(_infeasibility_hint(model, qp))
    if status == "optimal":
        gap = 0.0 if not np.isfinite(proven_lb) else \
            max(0.0, (inc_obj - proven_lb) / max(1.0, abs(inc_obj)))
        gap = min(gap, model.options.gap)
    else:
        gap = (inc_obj - proven_lb) / max(1.0, abs(inc_obj))
    return _make_solution(net, weights, inc_closed, inc_qc, inc_obj,
                          gap, status, "miqp", nodes=nodes, configs=configs,
                          wall_time=time.perf_counter() - t0)


def _infeasibility_hint(model: MiqpModel, qp: _NodeQp) -> str:
    """Identify the first constraint group whose relaxation restores feasibility."""
    net = model.network
    m = net.n_branch
    # rows were added in a fixed order; recompute the voltage-limit slice
    n_w = net.n_bus - 1
    w_start = m + 2 * n_w + 2 * m + 4 * m
    trial = qp.lo.copy(), qp.hi.copy()
    lo, hi = qp.lo.copy(), qp.hi.copy()
    lo[w_start:w_start + n_w] = -_INF
    hi[w_start:w_start + n_w] = _INF
    qp.prob.update(l=lo, u=hi)
    res = qp.prob.solve(raise_error=False)
    qp.prob.update(l=trial[0], u=trial[1])
    if "solved" in res.info.status:
        return "bus voltage limits"
    return "power balance or radiality requirements"


def reconfigure(network: Network, weights: ObjectiveWeights,
                options: SolveOptions = SolveOptions()) -> ReconfigSolution:
    """Build and solve the MIQP in one call."""
    return solve_miqp(build_miqp(network, weights, options))


# ---------------------------------------------------------------------------
# exact re-evaluation of a chosen topology
# ---------------------------------------------------------------------------

def evaluate_with_acpf(network: Network, solution: ReconfigSolution,
                       weights: ObjectiveWeights):
    """Recompute the objective from an exact AC solve of the chosen topology.

    The adjustable-source physical setpoints are applied as fixed reactive
    injections.  Returns ``(objective, loss_kw, v_avg)`` and stores them on
    the solution; returns NaNs when the AC solve does not converge.
    """
    try:
        ac = solve_acpf(network, closed=solution.closed,
                        extra_q=solution.svc_physical)
    except PowerFlowError:
        solution.objective_acpf = float("nan")
        solution.loss_acpf_kw = float("nan")
        solution.v_avg_acpf = float("nan")
        return (solution.objective_acpf, solution.loss_acpf_kw, solution.v_avg_acpf)
    loss_mw = ac.p_loss * network.base_mva
    dev = float(np.sum((ac.v_mag - 1.0) ** 2))
    obj = weights.alpha * weights.horizon_hours * loss_mw \
        + weights.beta * solution.switch_count + weights.gamma * dev
    solution.objective_acpf = float(obj)
    solution.loss_acpf_kw = float(loss_mw * 1000.0)
    solution.v_avg_acpf = float(np.mean(ac.v_mag))
    return (solution.objective_acpf, solution.loss_acpf_kw, solution.v_avg_acpf)
