"""Rooted radial topologies, path-incidence matrices and loop structure."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .network import Network


class NotRadialError(Exception):
    """An in-service branch closes a cycle."""

    def __init__(self, branch: str):
        super().__init__(f"branch {branch} closes a cycle")
        self.branch = branch


class DisconnectedError(Exception):
    """A bus cannot be reached from the supply point."""

    def __init__(self, bus: str):
        super().__init__(f"bus {bus} is unreachable from the supply point")
        self.bus = bus


@dataclass(frozen=True)
class RadialTopology:
    """A spanning tree of the network rooted at the supply point.

    Branch orientation is recomputed per topology: the sending end of an
    in-tree branch is always the end closer to the root, regardless of the
    ``from``/``to`` order in the case document.
    """

    network: Network
    #: bus indices in breadth-first order; ``order[0]`` is the root.
    order: np.ndarray
    #: parent bus index of each bus (-1 for the root).
    parent_bus: np.ndarray
    #: branch index connecting each bus to its parent (-1 for the root).
    parent_branch: np.ndarray

    @cached_property
    def depth(self) -> np.ndarray:
        d = np.zeros(self.network.n_bus, dtype=np.int64)
        for i in self.order[1:]:
            d[i] = d[self.parent_bus[i]] + 1
        return d

    @cached_property
    def tree_branches(self) -> np.ndarray:
        """In-tree branch indices, in network branch order."""
        in_tree = np.zeros(self.network.n_branch, dtype=bool)
        in_tree[self.parent_branch[self.order[1:]]] = True
        return np.flatnonzero(in_tree)

    @cached_property
    def non_root_buses(self) -> np.ndarray:
        """Non-root bus indices, in network bus order."""
        root = self.order[0]
        return np.array([i for i in range(self.network.n_bus) if i != root],
                        dtype=np.int64)

    @cached_property
    def parent_map(self) -> dict[str, str]:
        """Bus id -> name of the branch connecting it to its parent."""
        net = self.network
        return {net.buses[i].id: net.branches[self.parent_branch[i]].name
                for i in self.order[1:]}

    @cached_property
    def children(self) -> dict[str, frozenset[str]]:
        net = self.network
        kids: dict[str, set[str]] = {b.id: set() for b in net.buses}
        for i in self.order[1:]:
            kids[net.buses[self.parent_bus[i]].id].add(net.buses[i].id)
        return {k: frozenset(v) for k, v in kids.items()}

    @cached_property
    def paths(self) -> dict[str, frozenset[str]]:
        """Bus id -> set of branch names on its root path."""
        net = self.network
        acc: dict[int, frozenset[str]] = {self.order[0]: frozenset()}
        for i in self.order[1:]:
            acc[i] = acc[self.parent_bus[i]] | {net.branches[self.parent_branch[i]].name}
        return {net.buses[i].id: acc[i] for i in range(net.n_bus)}

    def path_incidence(self) -> np.ndarray:
        """Path-branch incidence matrix T.

        ``T[k, j] = 1`` iff in-tree branch ``tree_branches[k]`` lies on the
        root path of non-root bus ``non_root_buses[j]``.  Rows follow the
        network branch order restricted to in-tree branches; columns follow
        the network bus order with the root removed.
        """
        net = self.network
        row_of = {br: k for k, br in enumerate(self.tree_branches)}
        col_of = {b: j for j, b in enumerate(self.non_root_buses)}
        T = np.zeros((net.n_bus - 1, net.n_bus - 1))
        on_path = np.zeros((net.n_bus, net.n_bus - 1))
        for i in self.order[1:]:
            on_path[i] = on_path[self.parent_bus[i]]
            on_path[i, row_of[self.parent_branch[i]]] = 1.0
        for i in self.order[1:]:
            T[:, col_of[i]] = on_path[i]
        return T


def build_tree(network: Network, closed: Sequence[bool] | np.ndarray) -> RadialTopology:
    """Breadth-first spanning tree over the closed branches.

    Raises :class:`NotRadialError` if the closed branches contain a cycle and
    :class:`DisconnectedError` if some bus is unreachable.
    """
    closed = np.asarray(closed, dtype=bool)
    if closed.shape != (network.n_branch,):
        raise ValueError("closed mask must have one entry per branch")
    n = network.n_bus
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for k in np.flatnonzero(closed):
        a, b = network.from_idx[k], network.to_idx[k]
        adj[a].append((b, k))
        adj[b].append((a, k))
    root = network.root_index
    parent_bus = np.full(n, -1, dtype=np.int64)
    parent_branch = np.full(n, -1, dtype=np.int64)
    seen = np.zeros(n, dtype=bool)
    seen[root] = True
    order = [root]
    head = 0
    while head < len(order):
        u = order[head]
        head += 1
        for v, k in adj[u]:
            if not seen[v]:
                seen[v] = True
                parent_bus[v] = u
                parent_branch[v] = k
                order.append(v)
    for k in np.flatnonzero(closed):
        a, b = network.from_idx[k], network.to_idx[k]
        if seen[a] and seen[b] and parent_branch[a] != k and parent_branch[b] != k:
            raise NotRadialError(network.branches[k].name)
    if not seen.all():
        raise DisconnectedError(network.buses[int(np.flatnonzero(~seen)[0])].id)
    return RadialTopology(network=network,
                          order=np.array(order, dtype=np.int64),
                          parent_bus=parent_bus,
                          parent_branch=parent_branch)


@dataclass(frozen=True)
class OverlapSet:
    """A union of fundamental loops that share branches."""

    #: branch indices in the union, sorted.
    branches: tuple[int, ...]
    #: number of fundamental loops merged into this set.
    n_loops: int

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    #: minimum number of branches that must be open within the set for the
    #: union of the merged loops to be cycle-free.
    @property
    def min_open(self) -> int:
        return self.n_loops


@dataclass(frozen=True)
class LoopStructure:
    """Fundamental loops of the meshed network relative to the base tree."""

    network: Network
    #: one loop per normally-open branch: sorted branch indices, loop last
    #: entry being the normally-open branch itself is not guaranteed.
    loops: tuple[tuple[int, ...], ...]
    #: normally-open branch index that generated each loop.
    generators: tuple[int, ...]
    overlap_sets: tuple[OverlapSet, ...]

    @cached_property
    def loop_branches(self) -> tuple[int, ...]:
        """Sorted union of all loop branch indices (the switch-relevant set)."""
        s: set[int] = set()
        for loop in self.loops:
            s.update(loop)
        return tuple(sorted(s))


def loop_structure(network: Network) -> LoopStructure:
    """Fundamental loops induced by the normally-open branches.

    Each normally-open branch plus the base-tree path between its endpoints
    forms one loop.  Loops sharing at least one branch are merged into
    overlap sets with a union-find pass.
    """
    topo = build_tree(network, network.normally_closed())
    depth, pb, pbr = topo.depth, topo.parent_bus, topo.parent_branch
    loops: list[tuple[int, ...]] = []
    gens: list[int] = []
    for k, br in enumerate(network.branches):
        if not br.normally_open:
            continue
        a, b = int(network.from_idx[k]), int(network.to_idx[k])
        members = {k}
        while a != b:
            if depth[a] < depth[b]:
                a, b = b, a
            members.add(int(pbr[a]))
            a = int(pb[a])
        loops.append(tuple(sorted(members)))
        gens.append(k)

    # merge loops that share branches
    uf = list(range(len(loops)))

    def find(i: int) -> int:
        while uf[i] != i:
            uf[i] = uf[uf[i]]
            i = uf[i]
        return i

    owner: dict[int, int] = {}
    for i, loop in enumerate(loops):
        for k in loop:
            if k in owner:
                uf[find(i)] = find(owner[k])
            owner[k] = i
    groups: dict[int, list[int]] = {}
    for i in range(len(loops)):
        groups.setdefault(find(i), []).append(i)
    overlaps = tuple(
        OverlapSet(branches=tuple(sorted(set().union(*(set(loops[i]) for i in idxs)))),
                   n_loops=len(idxs))
        for idxs in (groups[g] for g in sorted(groups)))
    return LoopStructure(network=network, loops=tuple(loops),
                         generators=tuple(gens), overlap_sets=overlaps)
