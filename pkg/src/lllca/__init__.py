"""Moser-Tardos resampling and a local computation algorithm for LLL instances."""

from .csp import (
    UNSET,
    Clause,
    Constraint,
    Instance,
    InstanceError,
    PredicateConstraint,
    ProductMeasure,
    build_instance,
    induced_subproblem,
)
from .conditions import check_general_lll, check_general_lll_x_form, derive_params, radius_for
from .engine import depth_first_mt, resample_full
from .lca import continue_to_completion, open_session, query, verify_consistency

__version__ = "0.1.0"
