"""Rooted trees, path-branch incidence and loop structure."""
import numpy as np
import pytest

import gridflow as gf
from gridflow.topology import (DisconnectedError, NotRadialError, build_tree,
                               loop_structure)

from conftest import (make_network, random_small_network,
                      root_paths_by_walking, union_find_has_cycle)


def test_fig5_children(fig5_network):
    topo = build_tree(fig5_network, [True] * 5)
    assert topo.children["1"] == {"2", "4"}
    assert topo.children["0"] == {"1"}
    assert topo.children["3"] == frozenset()


def test_fig5_incidence_matrix_exact(fig5_network):
    """The 5x5 path-branch incidence matrix of the figure, reproduced exactly."""
    topo = build_tree(fig5_network, [True] * 5)
    expected = np.array([
        [1, 1, 1, 1, 1],   # 0-1 lies on every path
        [0, 1, 1, 0, 0],   # 1-2 on paths of buses 2, 3
        [0, 0, 1, 0, 0],   # 2-3 on path of bus 3
        [0, 0, 0, 1, 1],   # 1-4 on paths of buses 4, 5
        [0, 0, 0, 0, 1],   # 4-5 on path of bus 5
    ], dtype=float)
    assert np.array_equal(topo.path_incidence(), expected)


def test_two_bus_incidence_is_one():
    net = make_network([("0", "1")], {"1": (0.1, 0.05)})
    topo = build_tree(net, [True])
    assert np.array_equal(topo.path_incidence(), np.array([[1.0]]))
    assert list(topo.order) == [0, 1]
    assert topo.depth[1] == 1


def test_33_bus_column_sums_equal_depths(case33):
    topo = build_tree(case33, case33.normally_closed())
    T = topo.path_incidence()
    depths = topo.depth[topo.non_root_buses]
    assert np.array_equal(T.sum(axis=0), depths)
    # independent oracle: re-derive each root path by parent walking
    paths = root_paths_by_walking(topo)
    assert {b: frozenset(p) for b, p in paths.items()} == dict(topo.paths)


def test_33_bus_all_closed_is_not_radial(case33):
    closed = np.ones(case33.n_branch, dtype=bool)
    assert union_find_has_cycle(case33, closed)  # oracle agrees a cycle exists
    with pytest.raises(NotRadialError):
        build_tree(case33, closed)


def test_base_trees_are_radial(all_cases):
    for net in all_cases.values():
        closed = net.normally_closed()
        assert not union_find_has_cycle(net, closed)
        topo = build_tree(net, closed)
        assert len(topo.order) == net.n_bus


def test_disconnected_bus_detected(case33):
    closed = case33.normally_closed()
    # open the root branch: everything downstream loses its supply path
    closed[0] = False
    with pytest.raises(DisconnectedError):
        build_tree(case33, closed)


def test_orientation_recomputed_per_topology():
    """Sending end is the end nearer the root, not the document order."""
    net = make_network([("1", "0"), ("1", "2")], {"2": (0.1, 0.0)})
    topo = build_tree(net, [True, True])
    # branch "1-0" is stored from=1 but bus 1's parent is the root 0
    i = net.bus_index["1"]
    assert topo.parent_bus[i] == net.bus_index["0"]
    assert topo.parent_map["1"] == "1-0"


def test_33_bus_has_five_fundamental_loops(case33):
    ls = loop_structure(case33)
    assert len(ls.loops) == 5
    assert len(ls.generators) == 5
    # each loop is a simple cycle: every touched bus has degree exactly 2
    for loop in ls.loops:
        deg: dict[int, int] = {}
        for k in loop:
            for end in (int(case33.from_idx[k]), int(case33.to_idx[k])):
                deg[end] = deg.get(end, 0) + 1
        assert set(deg.values()) == {2}
    # and removing any one loop member from closed-tree+tie breaks that cycle
    for loop, gen in zip(ls.loops, ls.generators):
        closed = case33.normally_closed()
        closed[gen] = True
        assert union_find_has_cycle(case33, closed)
        probe = closed.copy()
        probe[loop[0]] = False
        assert not union_find_has_cycle(case33, probe)


def test_overlapping_loops_merge():
    """Two loops sharing a branch form one overlap set requiring 2 opens."""
    edges = [("0", "1"), ("1", "2"), ("2", "3"), ("3", "4"), ("4", "5")]
    ties = [("1", "3"), ("2", "4")]    # both loops contain branch 2-3
    loads = {i: (0.02, 0.01) for i in "12345"}
    net = make_network(edges, loads, ties=ties)
    ls = loop_structure(net)
    assert len(ls.loops) == 2
    assert len(ls.overlap_sets) == 1
    ov = ls.overlap_sets[0]
    assert ov.n_loops == 2 and ov.min_open == 2
    assert set(ov.branches) == set(ls.loops[0]) | set(ls.loops[1])


def test_disjoint_loops_stay_separate(case33):
    ls = loop_structure(case33)
    assert sum(ov.n_loops for ov in ls.overlap_sets) == 5


def test_zero_ties_empty_loop_structure(fig5_network):
    ls = loop_structure(fig5_network)
    assert ls.loops == () and ls.overlap_sets == ()
    assert ls.loop_branches == ()


@pytest.mark.parametrize("seed", range(8))
def test_random_trees_match_path_walk_oracle(seed):
    net = random_small_network(seed)
    topo = build_tree(net, net.normally_closed())
    T = topo.path_incidence()
    assert np.array_equal(T.sum(axis=0), topo.depth[topo.non_root_buses])
    paths = root_paths_by_walking(topo)
    assert {b: frozenset(p) for b, p in paths.items()} == dict(topo.paths)


def test_switch_swap_rebuilds_valid_incidence(case33):
    """Close one tie, open a branch on its loop: T stays oracle-consistent."""
    ls = loop_structure(case33)
    for loop, gen in zip(ls.loops, ls.generators):
        closed = case33.normally_closed()
        closed[gen] = True
        other = next(k for k in loop if k != gen)
        closed[other] = False
        topo = build_tree(case33, closed)
        T = topo.path_incidence()
        assert np.array_equal(T.sum(axis=0), topo.depth[topo.non_root_buses])
        paths = root_paths_by_walking(topo)
        assert {b: frozenset(p) for b, p in paths.items()} == dict(topo.paths)
