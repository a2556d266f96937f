"""nswalloc: constant-factor Nash social welfare allocation.

Library + CLI implementing a five-phase approximation pipeline for weighted
Nash social welfare with Rado (matroid-based) and additive valuations, an
exact Eisenberg-Gale relaxation solver over exact rationals, and a
brute-force oracle for certifying approximation factors on small instances.
"""

from .errors import (InfeasibleInstance, NotConverged, NswError, SchemaError,
                     TooLarge)
from .oracle import approximation_report, exact_nsw, gen_instance
from .pipeline import (Instance, SolveReport, guaranteed_factor, psi_bound,
                       solve_nsw)
from .valuation import (AdditiveValuation, ExplicitValuation, RadoValuation,
                        Valuation, check_m_natural_concave)

__version__ = "0.1.0"

__all__ = [
    "AdditiveValuation",
    "ExplicitValuation",
    "InfeasibleInstance",
    "Instance",
    "NotConverged",
    "NswError",
    "RadoValuation",
    "SchemaError",
    "SolveReport",
    "TooLarge",
    "Valuation",
    "approximation_report",
    "check_m_natural_concave",
    "exact_nsw",
    "gen_instance",
    "guaranteed_factor",
    "psi_bound",
    "solve_nsw",
    "__version__",
]
