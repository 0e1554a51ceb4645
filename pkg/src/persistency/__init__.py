"""Partial optimality for pairwise energy minimization via subset-to-one substitutions."""
from .model import (
    DualBound,
    GraphicalModel,
    Reparametrization,
    dual_lower_bound,
    energy,
    gen_random,
    grid_edges,
    random_model,
)
from .persist import (
    PersistencyConfig,
    PersistencyReport,
    Speedups,
    choose_test_labeling,
    find_persistency,
    report,
)
from .substitution import SubsetToOne, measures
from .uai import UAIFormatError, read_uai, write_uai
from .verification import contract, reduce, verification_costs

__version__ = "0.1.0"

__all__ = [
    "DualBound",
    "GraphicalModel",
    "Reparametrization",
    "dual_lower_bound",
    "energy",
    "gen_random",
    "grid_edges",
    "random_model",
    "PersistencyConfig",
    "PersistencyReport",
    "Speedups",
    "choose_test_labeling",
    "find_persistency",
    "report",
    "SubsetToOne",
    "measures",
    "UAIFormatError",
    "read_uai",
    "write_uai",
    "contract",
    "reduce",
    "verification_costs",
]
