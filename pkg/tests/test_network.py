"""Case parsing, validation and serialization."""
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import gridflow as gf
from gridflow.network import (DEFAULT_DELTA_CAP, DEFAULT_V_MAX, DEFAULT_V_MIN,
                              CaseError, parse_case, serialize_case)

from conftest import random_small_network

TWO_BUS = {
    "base_mva": 10.0,
    "psp": "0",
    "v0": 1.0,
    "buses": [{"id": "0"}, {"id": "1", "p": 0.5, "q": 0.3}],
    "branches": [{"from": "0", "to": "1", "r": 0.05, "x": 0.05}],
}


def test_two_bus_document_maps_directly():
    net = parse_case(TWO_BUS)
    assert net.n_bus == 2 and net.n_branch == 1
    bus = net.buses[1]
    assert bus.p_demand == 0.5 and bus.q_demand == 0.3
    assert net.branches[0].r == 0.05 and net.branches[0].x == 0.05
    assert net.branches[0].name == "0-1"
    # defaults applied
    assert bus.v_min == DEFAULT_V_MIN and bus.v_max == DEFAULT_V_MAX
    assert net.branches[0].delta_cap == pytest.approx(math.radians(10.0))


def test_parse_accepts_json_string_and_mapping(tmp_path):
    text = json.dumps(TWO_BUS)
    path = tmp_path / "two_bus.json"
    path.write_text(text)
    for doc in (TWO_BUS, text, path, str(path)):
        assert parse_case(doc).n_bus == 2


def test_bundled_33_bus_shape(case33):
    assert case33.n_bus == 33
    assert case33.n_branch == 37
    assert int(np.sum(~case33.normally_closed())) == 5
    assert case33.v0 == 1.05
    assert case33.psp_bus == "1"


def test_bundled_141_bus_shape(case141):
    assert case141.n_bus == 141
    assert case141.n_branch == case141.n_bus - 1


def test_injection_sign_convention(case33_dg):
    """Injection = generation - demand; the DG bus has generation added."""
    i = case33_dg.bus_index["10"]
    b = case33_dg.buses[i]
    assert b.has_dg and b.dg_p > 0
    assert case33_dg.p_injection[i] == pytest.approx(b.dg_p - b.p_demand)


@pytest.mark.parametrize("mutate, match", [
    (lambda d: d["branches"][0].update({"to": "99"}), "unknown bus"),
    (lambda d: d["buses"].append({"id": "1"}), "duplicate"),
    (lambda d: d["branches"][0].update({"r": 0.0, "x": 0.0}), "zero-impedance"),
    (lambda d: d["branches"][0].update({"normally_open": True}), "switchable"),
    (lambda d: d["buses"][1].update({"v_min": 1.2}), "v_min"),
    (lambda d: d["buses"][1].update({"svc": {"q_min": 0.1}}), "q_max"),
    (lambda d: d["buses"][1].update({"bogus": 1}), "unknown key"),
    (lambda d: d["branches"][0].pop("r"), "missing required key"),
    (lambda d: d.pop("psp"), "missing required top-level key"),
    (lambda d: d.update({"base_mva": -1}), "base_mva"),
], ids=["unknown-bus", "duplicate-bus", "zero-impedance", "tie-not-switchable",
        "bad-voltage-band", "svc-missing-qmax", "unknown-bus-key",
        "missing-branch-r", "missing-psp", "bad-base"])
def test_schema_violations_raise(mutate, match):
    doc = json.loads(json.dumps(TWO_BUS))
    mutate(doc)
    with pytest.raises(CaseError, match=match):
        parse_case(doc)


def test_disconnected_case_rejected():
    doc = json.loads(json.dumps(TWO_BUS))
    doc["buses"].append({"id": "2"})
    with pytest.raises(CaseError, match="unreachable"):
        parse_case(doc)


def test_parse_serialize_parse_identity(all_cases):
    for net in all_cases.values():
        assert parse_case(serialize_case(net)) == net


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10_000))
def test_serialize_round_trip_on_random_networks(seed):
    net = random_small_network(seed)
    assert parse_case(serialize_case(net)) == net


def test_save_case_round_trip(tmp_path, case33):
    path = tmp_path / "case.json"
    gf.save_case(case33, path)
    assert parse_case(path) == case33


def test_scale_loads_scales_demand_only(case33_dg):
    scaled = case33_dg.scale_loads(1.5)
    for b0, b1 in zip(case33_dg.buses, scaled.buses):
        assert b1.p_demand == pytest.approx(1.5 * b0.p_demand)
        assert b1.q_demand == pytest.approx(1.5 * b0.q_demand)
        assert b1.dg_p == b0.dg_p and b1.dg_q == b0.dg_q
    with pytest.raises(CaseError):
        case33_dg.scale_loads(0.0)


def test_with_injection_adds_dg(case33):
    net = case33.with_injection("18", 0.02, 0.01)
    i = net.bus_index["18"]
    assert net.buses[i].has_dg
    assert net.p_injection[i] == pytest.approx(case33.p_injection[i] + 0.02)
    # original is untouched (immutability)
    assert not case33.buses[i].has_dg


def test_load_case_rejects_unknown_name():
    with pytest.raises(KeyError):
        gf.load_case("nope")
