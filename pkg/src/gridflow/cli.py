"""Command-line front end: power flows, model comparisons, reconfiguration.

Subcommands
-----------
``pf``        solve one power flow (linear or exact) and write voltage/flow traces
``compare``   tabulate linear-model errors against the exact solution over load levels
``reconfig``  solve the joint VAR-optimization / reconfiguration MIQP

All commands write CSV/JSON files into ``--out`` (default: current directory)
and print a one-line summary.  Exit codes: 0 ok, 2 case or topology error,
3 infeasible (or non-convergent exact power flow), 4 budget exhausted.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .acpf import PowerFlowError, solve_acpf
from .linear import compare_errors, solve_closed_form, solve_lossless
from .network import CaseError, Network, parse_case
from .reconfig import (Infeasible, NothingToOptimize, ObjectiveWeights,
                       SolveOptions, TooLarge, enumerate_radial,
                       evaluate_with_acpf, reconfigure)
from .topology import DisconnectedError, NotRadialError

EXIT_OK = 0
EXIT_TOPOLOGY = 2
EXIT_INFEASIBLE = 3
EXIT_INCOMPLETE = 4


def _cap_threads() -> None:
    """Honor GRIDFLOW_THREADS as an upper bound on internal parallelism."""
    raw = os.environ.get("GRIDFLOW_THREADS")
    if not raw:
        return
    try:
        n = max(1, int(raw))
    except ValueError:
        return
    try:
        import numba
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    except Exception:
        pass


def _load_network(args) -> Network:
    net = parse_case(args.case)
    if getattr(args, "scale", 1.0) != 1.0:
        net = net.scale_loads(args.scale)
    vmin = getattr(args, "vmin", None)
    vmax = getattr(args, "vmax", None)
    if vmin is not None or vmax is not None:
        buses = tuple(replace(b,
                              v_min=vmin if vmin is not None else b.v_min,
                              v_max=vmax if vmax is not None else b.v_max)
                      for b in net.buses)
        net = replace(net, buses=buses)
    return net


def _out_path(args, name: str) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out / f"{Path(args.case).stem}_{name}"


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")


def _solve_model(net: Network, model: str):
    """Voltages and sending-end physical flows for one model.

    Returns ``(v_mag, p_from, q_from, loss_kw, topology)``; the lossless
    model reports zero loss by construction.
    """
    if model == "acpf":
        ac = solve_acpf(net)
        return ac.v_mag, ac.p_from, ac.q_from, ac.p_loss * net.base_mva * 1e3, ac.topology
    if model == "md":
        sol = solve_closed_form(net)
        pf, qf = sol.physical_flows()
        return sol.v_mag, pf, qf, sol.p_loss * net.base_mva * 1e3, sol.topology
    sol = solve_lossless(net)
    return sol.v_mag, sol.p_flow, sol.q_flow, 0.0, sol.topology


def cmd_pf(args) -> int:
    net = _load_network(args)
    v, pf, qf, loss_kw, topo = _solve_model(net, args.model)
    closed = net.normally_closed()
    _write_csv(_out_path(args, f"{args.model}_voltages.csv"),
               ["bus", "v_mag"],
               [[b.id, f"{v[i]:.9f}"] for i, b in enumerate(net.buses)])
    _write_csv(_out_path(args, f"{args.model}_flows.csv"),
               ["branch", "from", "to", "in_service", "p_from", "q_from"],
               [[br.name, br.from_bus, br.to_bus, int(closed[k]),
                 f"{pf[k]:.9f}", f"{qf[k]:.9f}"]
                for k, br in enumerate(net.branches)])
    summary = {
        "case": str(args.case),
        "model": args.model,
        "scale": args.scale,
        "n_bus": net.n_bus,
        "n_branch": net.n_branch,
        "v0": net.v0,
        "min_v": float(np.min(v)),
        "min_v_bus": net.buses[int(np.argmin(v))].id,
        "loss_kw": loss_kw,
    }
    if args.model != "acpf":
        ac = solve_acpf(net)
        rep = compare_errors(ac, v, pf, qf)
        summary["errors_vs_acpf_pct"] = {
            "v_avg": rep.v_avg, "v_max": rep.v_max,
            "p_avg": rep.p_avg, "p_max": rep.p_max,
            "q_avg": rep.q_avg, "q_max": rep.q_max,
        }
    _write_json(_out_path(args, f"{args.model}_summary.json"), summary)
    print(f"pf {args.model}: min V {summary['min_v']:.4f} at bus "
          f"{summary['min_v_bus']}, loss {loss_kw:.2f} kW")
    return EXIT_OK


def cmd_compare(args) -> int:
    rows = []
    for scale in args.scales:
        net = parse_case(args.case)
        if scale != 1.0:
            net = net.scale_loads(scale)
        ac = solve_acpf(net)
        for model in ("md", "sd"):
            v, pf, qf, _, _ = _solve_model(net, model)
            rep = compare_errors(ac, v, pf, qf)
            rows.append([f"{scale:g}", model,
                         f"{rep.v_avg:.6f}", f"{rep.v_max:.6f}",
                         f"{rep.p_avg:.6f}", f"{rep.p_max:.6f}",
                         f"{rep.q_avg:.6f}", f"{rep.q_max:.6f}"])
    path = _out_path(args, "compare.csv")
    _write_csv(path, ["scale", "model", "v_avg_pct", "v_max_pct",
                      "p_avg_pct", "p_max_pct", "q_avg_pct", "q_max_pct"], rows)
    for row in rows:
        print("  ".join(f"{c:>10}" for c in row))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_reconfig(args) -> int:
    net = _load_network(args)
    weights = ObjectiveWeights(alpha=args.alpha, beta=args.beta,
                               gamma=args.gamma)
    options = SolveOptions(loop_cuts=args.loop_cuts, pf_limit=args.pf_limit,
                           gap=args.gap)
    try:
        sol = reconfigure(net, weights, options)
    except NothingToOptimize:
        # no switch and no adjustable source: the base radial topology is
        # the whole feasible set, which enumeration evaluates exactly
        sol = enumerate_radial(net, weights, options)
    if args.seedless:
        again = reconfigure(net, weights, options)
        if (again.open_branches != sol.open_branches
                or again.objective_model != sol.objective_model):
            print("determinism assertion failed: repeated solve differs",
                  file=sys.stderr)
            return 1
    oracle_report = None
    if args.oracle:
        ref = enumerate_radial(net, weights, options)
        agree = (ref.open_branches == sol.open_branches
                 and abs(ref.objective_model - sol.objective_model)
                 <= 1e-6 * (1.0 + abs(ref.objective_model)))
        oracle_report = {
            "open_branches": sorted(ref.open_branches),
            "objective_model": float(ref.objective_model),
            "configs": int(ref.configs),
            "agrees": bool(agree),
        }
        if not agree and sol.status == "optimal":
            print("oracle mismatch: enumeration disagrees with the MIQP",
                  file=sys.stderr)
            return 1
    evaluate_with_acpf(net, sol, weights)
    payload = {
        "case": str(args.case),
        "scale": args.scale,
        "weights": {"alpha": weights.alpha, "beta": weights.beta,
                    "gamma": weights.gamma,
                    "horizon_hours": weights.horizon_hours},
        "options": {"loop_cuts": options.loop_cuts,
                    "pf_limit": options.pf_limit, "gap": options.gap},
        "solution": sol.to_json_dict(weights, net.base_mva),
    }
    if oracle_report is not None:
        payload["oracle"] = oracle_report
    _write_json(_out_path(args, "solution.json"), payload)
    _write_csv(_out_path(args, "solution.csv"),
               ["case", "scale", "alpha", "beta", "gamma", "objective_model",
                "objective_acpf", "loss_model_kw", "loss_acpf_kw",
                "switch_count", "open_branches", "gap", "status", "method",
                "nodes", "configs", "wall_time_s"],
               [[Path(args.case).stem, f"{args.scale:g}", f"{weights.alpha:g}",
                 f"{weights.beta:g}", f"{weights.gamma:g}",
                 f"{sol.objective_model:.9f}",
                 "" if sol.objective_acpf is None else f"{sol.objective_acpf:.9f}",
                 f"{sol.loss_model * net.base_mva * 1e3:.4f}",
                 "" if sol.loss_acpf_kw is None else f"{sol.loss_acpf_kw:.4f}",
                 sol.switch_count, " ".join(sorted(sol.open_branches)),
                 f"{sol.gap:.3g}", sol.status, sol.method,
                 sol.nodes, sol.configs, f"{sol.wall_time:.3f}"]])
    print(f"reconfig: {sol.status}, objective {sol.objective_model:.6f}, "
          f"opened {{{', '.join(sorted(sol.open_branches))}}}, "
          f"ACPF loss {sol.loss_acpf_kw:.2f} kW"
          if sol.loss_acpf_kw == sol.loss_acpf_kw else
          f"reconfig: {sol.status}, objective {sol.objective_model:.6f}, "
          f"ACPF not applicable")
    return EXIT_OK if sol.status == "optimal" else EXIT_INCOMPLETE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridflow",
        description="Linear branch-flow power flow and MIQP reconfiguration "
                    "for radial distribution feeders.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("case", help="path to a JSON case file")
        p.add_argument("--scale", type=float, default=1.0,
                       help="load scaling multiplier (default 1.0)")
        p.add_argument("--out", default=".", help="output directory")

    p_pf = sub.add_parser("pf", help="solve one power flow")
    common(p_pf)
    p_pf.add_argument("--model", choices=("md", "sd", "acpf"), default="md",
                      help="md: modified linear model; sd: simplified "
                           "lossless model; acpf: exact AC power flow")
    p_pf.add_argument("--vmin", type=float, default=None,
                      help="override the per-bus lower voltage limit")
    p_pf.add_argument("--vmax", type=float, default=None,
                      help="override the per-bus upper voltage limit")
    p_pf.set_defaults(func=cmd_pf)

    p_cmp = sub.add_parser("compare",
                           help="tabulate linear-model errors vs the exact solution")
    p_cmp.add_argument("case", help="path to a JSON case file")
    p_cmp.add_argument("--scales", type=float, nargs="+", default=[1.0],
                       help="load levels to evaluate (default: 1.0)")
    p_cmp.add_argument("--out", default=".", help="output directory")
    p_cmp.set_defaults(func=cmd_compare)

    p_rc = sub.add_parser("reconfig",
                          help="solve the VAR-optimization / reconfiguration MIQP")
    common(p_rc)
    p_rc.add_argument("--alpha", type=float, default=1.0,
                      help="energy-loss price [$ per MWh]")
    p_rc.add_argument("--beta", type=float, default=0.0,
                      help="switching cost [$ per operation]")
    p_rc.add_argument("--gamma", type=float, default=0.0,
                      help="squared voltage-deviation weight")
    p_rc.add_argument("--loop-cuts", action=argparse.BooleanOptionalAction,
                      default=True, help="add loop-overlap radiality cuts")
    p_rc.add_argument("--pf-limit", type=float, default=None,
                      help="minimum squared power factor at the supply point")
    p_rc.add_argument("--gap", type=float, default=1e-6,
                      help="relative optimality gap")
    p_rc.add_argument("--vmin", type=float, default=None,
                      help="override the per-bus lower voltage limit")
    p_rc.add_argument("--vmax", type=float, default=None,
                      help="override the per-bus upper voltage limit")
    p_rc.add_argument("--oracle", action="store_true",
                      help="cross-check against exhaustive enumeration")
    p_rc.add_argument("--seedless", action="store_true",
                      help="assert that a repeated solve is identical")
    p_rc.set_defaults(func=cmd_reconfig)
    return parser


def main(argv=None) -> int:
    _cap_threads()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CaseError, NotRadialError, DisconnectedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOPOLOGY
    except (Infeasible, TooLarge, PowerFlowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
