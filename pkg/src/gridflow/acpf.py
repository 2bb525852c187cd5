"""Exact AC power flow for radial feeders by backward/forward sweep."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .network import Network
from .topology import RadialTopology, build_tree


class PowerFlowError(RuntimeError):
    """The sweep failed to converge."""


@dataclass(frozen=True)
class AcSolution:
    network: Network
    topology: RadialTopology
    #: complex bus voltages, per-unit.
    v: np.ndarray
    #: sending-end (parent-side) complex power per branch; 0 for open branches.
    s_from: np.ndarray
    #: receiving-end (child-side) complex power per branch; 0 for open branches.
    s_to: np.ndarray
    iterations: int

    @property
    def v_mag(self) -> np.ndarray:
        return np.abs(self.v)

    @property
    def p_from(self) -> np.ndarray:
        return self.s_from.real

    @property
    def q_from(self) -> np.ndarray:
        return self.s_from.imag

    @property
    def p_loss(self) -> float:
        """Total series active loss, per-unit."""
        return float(np.sum(self.s_from.real - self.s_to.real))

    @property
    def q_loss(self) -> float:
        return float(np.sum(self.s_from.imag - self.s_to.imag))


def solve_acpf(network: Network,
               closed: Sequence[bool] | np.ndarray | None = None,
               extra_q: dict[str, float] | None = None,
               tol: float = 1e-10,
               max_iter: int = 500) -> AcSolution:
    """Solve the exact AC power flow with a current-summation sweep.

    ``closed`` defaults to the normally-closed branch set.  ``extra_q`` maps
    bus ids to additional reactive injections (e.g. compensator setpoints),
    in per-unit.  The supply point holds ``network.v0`` at angle zero.
    """
    if closed is None:
        closed = network.normally_closed()
    topo = build_tree(network, closed)
    n = network.n_bus
    s_inj = network.p_injection + 1j * network.q_injection
    if extra_q:
        for bid, q in extra_q.items():
            s_inj[network.bus_index[bid]] += 1j * q
    root = topo.order[0]
    z = network.r + 1j * network.x
    v = np.full(n, complex(network.v0))
    i_br = np.zeros(network.n_branch, dtype=complex)
    rev = topo.order[::-1]
    for it in range(1, max_iter + 1):
        # backward: accumulate branch currents toward the root
        i_bus = np.conj(s_inj / v)  # injection current drawn *into* the grid
        i_acc = -i_bus.copy()       # current each bus pulls from its parent
        i_br[:] = 0.0
        for i in rev:
            if i == root:
                continue
            p = topo.parent_bus[i]
            i_br[topo.parent_branch[i]] = i_acc[i]
            i_acc[p] += i_acc[i]
        # forward: update voltages from the root
        v_new = v.copy()
        v_new[root] = complex(network.v0)
        for i in topo.order[1:]:
            k = topo.parent_branch[i]
            v_new[i] = v_new[topo.parent_bus[i]] - z[k] * i_br[k]
        delta = float(np.max(np.abs(v_new - v)))
        v = v_new
        if delta < tol:
            break
    else:
        raise PowerFlowError(f"sweep did not converge in {max_iter} iterations")
    s_from = np.zeros(network.n_branch, dtype=complex)
    s_to = np.zeros(network.n_branch, dtype=complex)
    for i in topo.order[1:]:
        k = topo.parent_branch[i]
        s_from[k] = v[topo.parent_bus[i]] * np.conj(i_br[k])
        s_to[k] = v[i] * np.conj(i_br[k])
    return AcSolution(network=network, topology=topo, v=v,
                      s_from=s_from, s_to=s_to, iterations=it)


def injection_residual(solution: AcSolution,
                       extra_q: dict[str, float] | None = None) -> float:
    """Max complex-power mismatch at non-root buses, from voltages alone.

    Recomputes every branch current from Ohm's law on the solved voltages
    and checks Kirchhoff's current law against the specified injections, so
    it does not reuse any intermediate quantity of the sweep.
    """
    net = solution.network
    topo = solution.topology
    v = solution.v
    s_inj = net.p_injection + 1j * net.q_injection
    if extra_q:
        for bid, q in extra_q.items():
            s_inj[net.bus_index[bid]] += 1j * q
    mism = -s_inj.astype(complex)
    for i in topo.order[1:]:
        k = topo.parent_branch[i]
        p = topo.parent_bus[i]
        i_k = (v[p] - v[i]) / (net.r[k] + 1j * net.x[k])
        mism[i] -= v[i] * np.conj(i_k)   # power received from the parent
        mism[p] += v[p] * np.conj(i_k)   # power sent toward the child
    root = topo.order[0]
    mism[root] = 0.0
    return float(np.max(np.abs(mism)))


def two_bus_exact(r: float, x: float, p: float, q: float, v0: float) -> float:
    """Exact receiving-end voltage magnitude of a single line.

    A load ``p + jq`` (per-unit, demand positive) is served through series
    impedance ``r + jx`` from a source at magnitude ``v0``.  The receiving
    squared voltage solves a biquadratic; the high-voltage root is returned.

    Raises ``ValueError`` when no real solution exists (load beyond the
    maximum power transfer point).
    """
    b = 2.0 * (r * p + x * q) - v0 * v0
    c = (r * r + x * x) * (p * p + q * q)
    disc = b * b - 4.0 * c
    if disc < 0:
        raise ValueError("no power-flow solution: load exceeds transfer limit")
    w = (-b + math.sqrt(disc)) / 2.0
    return math.sqrt(w)
