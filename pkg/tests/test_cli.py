"""Command-line interface: outputs, exit codes, round-trip invariants."""
import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

import gridflow as gf
from gridflow import cli
from gridflow.network import serialize_case

from conftest import make_network, normalize_branch_names

CASES = Path(gf.__file__).parent / "cases"


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# pf
# ---------------------------------------------------------------------------

def test_pf_md_writes_declared_outputs(tmp_path):
    rc = cli.main(["pf", str(CASES / "case33.json"), "--model", "md",
                   "--out", str(tmp_path)])
    assert rc == 0
    produced = sorted(p.name for p in tmp_path.iterdir())
    assert produced == ["case33_md_flows.csv", "case33_md_summary.json",
                        "case33_md_voltages.csv"]
    volts = _read_csv(tmp_path / "case33_md_voltages.csv")
    assert len(volts) == 33
    flows = _read_csv(tmp_path / "case33_md_flows.csv")
    assert len(flows) == 37
    assert sum(r["in_service"] == "0" for r in flows) == 5
    summary = json.loads((tmp_path / "case33_md_summary.json").read_text())
    err = summary["errors_vs_acpf_pct"]
    assert err["v_avg"] == pytest.approx(0.008, abs=0.012)
    assert err["v_max"] == pytest.approx(0.014, abs=0.016)


def test_pf_acpf_250_percent_min_voltage(tmp_path):
    rc = cli.main(["pf", str(CASES / "case33.json"), "--model", "acpf",
                   "--scale", "2.5", "--out", str(tmp_path)])
    assert rc == 0
    summary = json.loads((tmp_path / "case33_acpf_summary.json").read_text())
    assert summary["min_v"] == pytest.approx(0.813, abs=0.005)


def test_pf_141_md_heavy_load_errors(tmp_path):
    rc = cli.main(["pf", str(CASES / "case141.json"), "--model", "md",
                   "--scale", "3.0", "--out", str(tmp_path)])
    assert rc == 0
    summary = json.loads((tmp_path / "case141_md_summary.json").read_text())
    err = summary["errors_vs_acpf_pct"]
    assert err["v_avg"] == pytest.approx(0.495, abs=0.1)
    assert err["v_max"] == pytest.approx(0.982, abs=0.1)


def test_pf_non_radial_default_topology_exits_2(tmp_path):
    doc = serialize_case(gf.load_case("case33"))
    for br in doc["branches"]:
        br.pop("normally_open", None)      # every tie now normally closed
    bad = tmp_path / "meshed.json"
    bad.write_text(json.dumps(doc))
    assert cli.main(["pf", str(bad), "--out", str(tmp_path)]) == 2


def test_pf_bad_case_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"base_mva": 10, "psp": "0", "buses": [],
                               "branches": []}))
    assert cli.main(["pf", str(bad), "--out", str(tmp_path)]) == 2


def test_pf_vmin_override_applied(tmp_path):
    rc = cli.main(["pf", str(CASES / "case33.json"), "--model", "acpf",
                   "--vmin", "0.85", "--out", str(tmp_path)])
    assert rc == 0  # overrides only change limits; the solve is unaffected


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

def test_compare_33_bus_base(tmp_path):
    rc = cli.main(["compare", str(CASES / "case33.json"),
                   "--out", str(tmp_path)])
    assert rc == 0
    rows = _read_csv(tmp_path / "case33_compare.csv")
    assert [r["model"] for r in rows] == ["md", "sd"]
    md, sd = rows
    assert float(md["v_avg_pct"]) == pytest.approx(0.008, abs=0.012)
    assert float(md["v_max_pct"]) == pytest.approx(0.014, abs=0.016)
    assert float(sd["v_avg_pct"]) == pytest.approx(0.170, abs=0.05)
    assert float(sd["v_max_pct"]) == pytest.approx(0.247, abs=0.05)


def test_compare_141_bus_sd_row(tmp_path):
    rc = cli.main(["compare", str(CASES / "case141.json"),
                   "--scales", "1.0", "2.0", "--out", str(tmp_path)])
    assert rc == 0
    rows = _read_csv(tmp_path / "case141_compare.csv")
    assert len(rows) == 4  # two load levels x two models
    sd = next(r for r in rows if r["model"] == "sd" and r["scale"] == "1")
    assert float(sd["v_avg_pct"]) == pytest.approx(0.129, abs=0.05)
    assert float(sd["v_max_pct"]) == pytest.approx(0.178, abs=0.05)


# ---------------------------------------------------------------------------
# reconfig
# ---------------------------------------------------------------------------

def test_reconfig_scenario5_via_cli(tmp_path):
    rc = cli.main(["reconfig", str(CASES / "case33_dg.json"),
                   "--alpha", "30", "--beta", "0.2", "--out", str(tmp_path)])
    assert rc == 0
    doc = json.loads((tmp_path / "case33_dg_solution.json").read_text())
    sol = doc["solution"]
    assert sol["status"] == "optimal"
    assert normalize_branch_names(sol["open_branches"]) == \
        normalize_branch_names(["21-8", "9-15", "12-22", "18-33", "25-29"])
    assert sol["objective"]["acpf"] == pytest.approx(3.04, abs=0.05)
    assert sol["loss_acpf_kw"] == pytest.approx(101.41, rel=0.015)
    rows = _read_csv(tmp_path / "case33_dg_solution.csv")
    # the published optimum keeps the base topology: no switching operations
    assert rows[0]["status"] == "optimal" and rows[0]["switch_count"] == "0"


def test_reconfig_json_acpf_round_trip(tmp_path):
    """Re-reading a solution file and re-evaluating with the exact power
    flow reproduces the stored ACPF objective within 1e-9."""
    rc = cli.main(["reconfig", str(CASES / "case33_dg_svc.json"),
                   "--alpha", "0", "--gamma", "100", "--scale", "1.5",
                   "--out", str(tmp_path)])
    assert rc == 0
    doc = json.loads((tmp_path / "case33_dg_svc_solution.json").read_text())
    net = gf.parse_case(doc["case"]).scale_loads(doc["scale"])
    closed = gf.closed_mask_from_open(net, doc["solution"]["open_branches"])
    extra_q = {b: sp["physical"]
               for b, sp in doc["solution"]["svc_setpoints"].items()}
    ac = gf.solve_acpf(net, closed=closed, extra_q=extra_q)
    w = doc["weights"]
    switches = int(np.sum(closed != net.normally_closed()))
    obj = (w["alpha"] * w["horizon_hours"] * ac.p_loss * net.base_mva
           + w["beta"] * switches
           + w["gamma"] * float(np.sum((ac.v_mag - 1.0) ** 2)))
    assert abs(obj - doc["solution"]["objective"]["acpf"]) <= 1e-9


def test_reconfig_idempotent_and_declared_outputs(tmp_path):
    args = ["reconfig", str(CASES / "case33.json"), "--out", str(tmp_path)]
    assert cli.main(args) == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["case33_solution.csv", "case33_solution.json"]

    def stripped():
        doc = json.loads((tmp_path / "case33_solution.json").read_text())
        doc["solution"].pop("wall_time")
        return doc

    first = stripped()
    assert cli.main(args) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == names
    assert stripped() == first


def test_reconfig_oracle_and_seedless(tmp_path):
    rc = cli.main(["reconfig", str(CASES / "case33.json"),
                   "--oracle", "--seedless", "--out", str(tmp_path)])
    assert rc == 0
    doc = json.loads((tmp_path / "case33_solution.json").read_text())
    assert doc["oracle"]["agrees"] is True
    assert doc["oracle"]["open_branches"] == doc["solution"]["open_branches"]


def test_reconfig_zero_switchable_pure_var(tmp_path):
    """No switches at all: falls back to the single topology, exit 0."""
    net = make_network([("0", "1"), ("1", "2")], {"2": (0.05, 0.02)},
                       bus_kwargs={"1": dict(svc_q_min=-0.02, svc_q_max=0.02,
                                             has_svc=True)})
    path = tmp_path / "tiny.json"
    gf.save_case(net, path)
    rc = cli.main(["reconfig", str(path), "--out", str(tmp_path)])
    assert rc == 0
    doc = json.loads((tmp_path / "tiny_solution.json").read_text())
    assert doc["solution"]["open_branches"] == []
    assert doc["solution"]["svc_setpoints"]["1"]["physical"] is not None


def test_reconfig_infeasible_exits_3(tmp_path):
    net = make_network([("0", "1"), ("1", "2")], {"2": (0.8, 0.5)},
                       ties=[("0", "2")], r=0.15, x=0.15)
    path = tmp_path / "hopeless.json"
    gf.save_case(net, path)
    assert cli.main(["reconfig", str(path), "--out", str(tmp_path)]) == 3


def test_reconfig_budget_exhaustion_exits_4(tmp_path, monkeypatch):
    """An incomplete solve still writes the incumbent but exits 4."""
    real = cli.reconfigure

    def exhausted(net, weights, options):
        sol = real(net, weights, options)
        sol.status = "incomplete"
        return sol

    monkeypatch.setattr(cli, "reconfigure", exhausted)
    rc = cli.main(["reconfig", str(CASES / "case33.json"),
                   "--out", str(tmp_path)])
    assert rc == 4
    doc = json.loads((tmp_path / "case33_solution.json").read_text())
    assert doc["solution"]["status"] == "incomplete"
    assert doc["solution"]["open_branches"]  # incumbent was written


def test_threads_env_respected(tmp_path, monkeypatch):
    monkeypatch.setenv("GRIDFLOW_THREADS", "1")
    rc = cli.main(["pf", str(CASES / "case33.json"), "--out", str(tmp_path)])
    assert rc == 0


def test_console_script_runs():
    proc = subprocess.run([sys.executable, "-m", "gridflow.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "reconfig" in proc.stdout
