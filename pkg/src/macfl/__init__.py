"""Facility location mechanisms with mostly-approximately-correct predictions."""

from .core import (
    Dataset,
    FacilitySolution,
    PredictionSet,
    balance_of,
    count_incorrect,
    distance,
    hausdorff,
    induced_partition,
    is_mac,
    kmed_cost,
)
from .estimators import (
    BalancedSolverConfig,
    Infeasible,
    balanced_kmedians_line,
    bcc,
    bcccost,
    best_second_facility,
    coordinatewise_median,
    geometric_median,
    kmedians_bruteforce,
    mad,
    median_1d,
)
from .mechanisms import (
    MechanismInput,
    OutcomeDistribution,
    minbb,
    predict_and_choose,
    prop_mech_distribution,
    prop_mech_sample,
    run_mechanism,
)

__version__ = "0.1.0"
