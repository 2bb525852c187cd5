"""Linear branch-flow models for radial feeders.

Two models are provided:

* the *modified* model, whose state variables are the reciprocal-voltage
  proxy ``w = 2 - v`` (a first-order expansion of ``1/v`` about 1.0) and
  voltage-normalized branch flows ("hat" flows, power divided by the
  sending-end voltage); and
* the classic *simplified* lossless model, where branch flows are sums of
  downstream net demand and squared voltages drop linearly along branches.

Both are benchmarked against the exact AC solution via ``compare_errors``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .acpf import AcSolution
from .network import Network
from .topology import RadialTopology, build_tree


class FixedPointError(RuntimeError):
    """The reciprocal-voltage fixed-point iteration failed to converge."""


@dataclass(frozen=True)
class LinearSolution:
    network: Network
    topology: RadialTopology
    #: reciprocal-voltage proxy w = 2 - v per bus.
    w: np.ndarray
    #: voltage-normalized (hat) active/reactive flow per branch, oriented
    #: parent -> child, zero on open branches.
    p_hat: np.ndarray
    q_hat: np.ndarray
    iterations: int = 0

    @property
    def v_mag(self) -> np.ndarray:
        return 2.0 - self.w

    @property
    def p_loss(self) -> float:
        """Model series loss  sum_k r_k (p_hat_k^2 + q_hat_k^2), per-unit."""
        r = self.network.r
        return float(np.sum(r * (self.p_hat ** 2 + self.q_hat ** 2)))

    def physical_flows(self) -> tuple[np.ndarray, np.ndarray]:
        """Sending-end physical flows recovered from the hat flows.

        The hat flow is the physical flow divided by the sending-end
        voltage; since the model identifies ``1/v`` with the proxy ``w``,
        the recovery divides by ``w`` at the sending end.
        """
        w_send = np.ones(self.network.n_branch)
        topo = self.topology
        for i in topo.order[1:]:
            w_send[topo.parent_branch[i]] = self.w[topo.parent_bus[i]]
        return self.p_hat / w_send, self.q_hat / w_send


def _hat_flows(network: Network, topo: RadialTopology,
               w: np.ndarray, p_inj: np.ndarray, q_inj: np.ndarray
               ) -> tuple[np.ndarray, np.ndarray]:
    """Accumulate hat flows parent->child: f_k = -sum_subtree inj * w."""
    p_hat = np.zeros(network.n_branch)
    q_hat = np.zeros(network.n_branch)
    acc_p = -p_inj * w
    acc_q = -q_inj * w
    for i in topo.order[:0:-1]:
        k = topo.parent_branch[i]
        p_hat[k] = acc_p[i]
        q_hat[k] = acc_q[i]
        acc_p[topo.parent_bus[i]] += acc_p[i]
        acc_q[topo.parent_bus[i]] += acc_q[i]
    return p_hat, q_hat


def _resolve_injections(network: Network, extra_q: dict[str, float] | None
                        ) -> tuple[np.ndarray, np.ndarray]:
    p_inj = network.p_injection.copy()
    q_inj = network.q_injection.copy()
    if extra_q:
        for bid, q in extra_q.items():
            q_inj[network.bus_index[bid]] += q
    return p_inj, q_inj


def solve_closed_form(network: Network,
                      closed: Sequence[bool] | np.ndarray | None = None,
                      extra_q: dict[str, float] | None = None) -> LinearSolution:
    """Solve the modified model by a single dense linear solve.

    With T the path-incidence matrix, R/X the in-tree impedance diagonals
    and p/q the net injections at non-root buses, the reciprocal-voltage
    proxy satisfies::

        (I + T' R T diag(p) + T' X T diag(q)) w = (2 - v0) 1
    """
    if closed is None:
        closed = network.normally_closed()
    topo = build_tree(network, closed)
    p_inj, q_inj = _resolve_injections(network, extra_q)
    T = topo.path_incidence()
    rows = topo.tree_branches
    cols = topo.non_root_buses
    TR = T.T * network.r[rows]
    TX = T.T * network.x[rows]
    A = np.eye(len(cols)) + (TR @ T) * p_inj[cols] + (TX @ T) * q_inj[cols]
    w_r = np.linalg.solve(A, np.full(len(cols), 2.0 - network.v0))
    w = np.full(network.n_bus, 2.0 - network.v0)
    w[cols] = w_r
    p_hat, q_hat = _hat_flows(network, topo, w, p_inj, q_inj)
    return LinearSolution(network=network, topology=topo, w=w,
                          p_hat=p_hat, q_hat=q_hat, iterations=1)


def solve_fixed_point(network: Network,
                      closed: Sequence[bool] | np.ndarray | None = None,
                      extra_q: dict[str, float] | None = None,
                      tol: float = 1e-13,
                      max_iter: int = 200) -> LinearSolution:
    """Solve the modified model by sweeping flows and voltages to a fixed point.

    Each pass accumulates hat flows from the current proxy ``w`` and then
    propagates ``w`` down the tree; the map is a contraction for realistic
    loading and needs no matrix assembly, making it the cheap per-topology
    kernel.  Converges to the same solution as :func:`solve_closed_form`.
    """
    if closed is None:
        closed = network.normally_closed()
    topo = build_tree(network, closed)
    p_inj, q_inj = _resolve_injections(network, extra_q)
    w0 = 2.0 - network.v0
    w = np.full(network.n_bus, w0)
    r, x = network.r, network.x
    for it in range(1, max_iter + 1):
        p_hat, q_hat = _hat_flows(network, topo, w, p_inj, q_inj)
        w_new = np.full(network.n_bus, w0)
        for i in topo.order[1:]:
            k = topo.parent_branch[i]
            w_new[i] = w_new[topo.parent_bus[i]] + r[k] * p_hat[k] + x[k] * q_hat[k]
        if float(np.max(np.abs(w_new - w))) < tol:
            w = w_new
            break
        w = w_new
    else:
        raise FixedPointError(f"no fixed point in {max_iter} iterations")
    p_hat, q_hat = _hat_flows(network, topo, w, p_inj, q_inj)
    return LinearSolution(network=network, topology=topo, w=w,
                          p_hat=p_hat, q_hat=q_hat, iterations=it)


@dataclass(frozen=True)
class LosslessSolution:
    network: Network
    topology: RadialTopology
    v_mag: np.ndarray
    #: physical flows (equal at both ends under the lossless assumption).
    p_flow: np.ndarray
    q_flow: np.ndarray


def solve_lossless(network: Network,
                   closed: Sequence[bool] | np.ndarray | None = None,
                   extra_q: dict[str, float] | None = None) -> LosslessSolution:
    """Solve the simplified lossless model.

    Branch flows are sums of downstream net demand; squared voltages obey
    ``v_j^2 = v_i^2 - 2 (r p + x q)`` along each branch.
    """
    if closed is None:
        closed = network.normally_closed()
    topo = build_tree(network, closed)
    p_inj, q_inj = _resolve_injections(network, extra_q)
    p_flow = np.zeros(network.n_branch)
    q_flow = np.zeros(network.n_branch)
    acc_p = -p_inj.copy()
    acc_q = -q_inj.copy()
    for i in topo.order[:0:-1]:
        k = topo.parent_branch[i]
        p_flow[k] = acc_p[i]
        q_flow[k] = acc_q[i]
        acc_p[topo.parent_bus[i]] += acc_p[i]
        acc_q[topo.parent_bus[i]] += acc_q[i]
    v_sq = np.full(network.n_bus, network.v0 ** 2)
    for i in topo.order[1:]:
        k = topo.parent_branch[i]
        v_sq[i] = v_sq[topo.parent_bus[i]] - 2.0 * (network.r[k] * p_flow[k]
                                                    + network.x[k] * q_flow[k])
    if np.any(v_sq <= 0):
        raise FixedPointError("lossless model produced a non-physical voltage")
    return LosslessSolution(network=network, topology=topo,
                            v_mag=np.sqrt(v_sq), p_flow=p_flow, q_flow=q_flow)


def linearization_error(v_i: float, v_j: float) -> float:
    """Percent error of the reciprocal-voltage linearization across a branch.

    Approximating ``1/v`` by ``2 - v`` at both ends of a branch leaves the
    residual ``100 * |(1/v_i - (2 - v_i)) - (1/v_j - (2 - v_j))|``, which
    depends on the voltage *difference* rather than the absolute level.
    """
    return 100.0 * abs((1.0 / v_i - (2.0 - v_i)) - (1.0 / v_j - (2.0 - v_j)))


@dataclass(frozen=True)
class ErrorReport:
    """Percent errors of a linear model against the exact AC solution.

    Voltage errors cover all non-root buses; flow errors cover in-service
    branches whose exact flow magnitude exceeds ``flow_floor`` (tiny flows
    make relative error meaningless).
    """
    v_avg: float
    v_max: float
    p_avg: float
    p_max: float
    q_avg: float
    q_max: float
    p_argmax: str
    q_argmax: str


def compare_errors(exact: AcSolution,
                   v_mag: np.ndarray,
                   p_flow: np.ndarray,
                   q_flow: np.ndarray,
                   flow_floor: float = 1e-6) -> ErrorReport:
    """Percent voltage and sending-end flow errors of a linear solution."""
    net = exact.network
    topo = exact.topology
    non_root = topo.non_root_buses
    v_err = 100.0 * np.abs(v_mag[non_root] - exact.v_mag[non_root]) / exact.v_mag[non_root]
    tree = topo.tree_branches
    pf, qf = exact.p_from[tree], exact.q_from[tree]

    def _flow(err_num: np.ndarray, ref: np.ndarray) -> tuple[float, float, str]:
        mask = np.abs(ref) > flow_floor
        rel = 100.0 * np.abs(err_num[mask] - ref[mask]) / np.abs(ref[mask])
        k_loc = tree[np.flatnonzero(mask)[int(np.argmax(rel))]]
        return float(np.mean(rel)), float(np.max(rel)), net.branches[k_loc].name

    p_avg, p_max, p_arg = _flow(p_flow[tree], pf)
    q_avg, q_max, q_arg = _flow(q_flow[tree], qf)
    return ErrorReport(v_avg=float(np.mean(v_err)), v_max=float(np.max(v_err)),
                       p_avg=p_avg, p_max=p_max, q_avg=q_avg, q_max=q_max,
                       p_argmax=p_arg, q_argmax=q_arg)
