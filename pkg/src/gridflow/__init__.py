"""Linear branch-flow power flow and MIQP reconfiguration for radial feeders."""
from importlib import resources

from .network import (BranchRecord, BusRecord, CaseError, Network, parse_case,
                      save_case, serialize_case)
from .topology import (DisconnectedError, LoopStructure, NotRadialError,
                       OverlapSet, RadialTopology, build_tree, loop_structure)
from .acpf import AcSolution, PowerFlowError, injection_residual, solve_acpf, two_bus_exact
from .linear import (ErrorReport, LinearSolution, LosslessSolution, compare_errors,
                     linearization_error, solve_closed_form, solve_fixed_point,
                     solve_lossless)
from .reconfig import (Infeasible, NothingToOptimize, ObjectiveWeights,
                       ReconfigSolution, SolveOptions, TooLarge, build_miqp,
                       closed_mask_from_open,
                       enumerate_radial, evaluate_with_acpf, reconfigure,
                       solve_miqp)

__version__ = "0.1.0"

BUNDLED_CASES = ("case33", "case33_dg", "case33_dg_svc", "case141")


def load_case(name: str) -> Network:
    """Load one of the bundled feeder cases by name (see ``BUNDLED_CASES``)."""
    if name not in BUNDLED_CASES:
        raise KeyError(f"unknown bundled case {name!r}; choose from {BUNDLED_CASES}")
    ref = resources.files(__package__) / "cases" / f"{name}.json"
    import json
    return parse_case(json.loads(ref.read_text(encoding="utf-8")))
