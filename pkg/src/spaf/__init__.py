"""Sparse affine feasibility: find x with at most s nonzeros solving M x = p.

Projection-based solvers (alternating projections, Douglas-Rachford,
projected gradient), restricted-isometry diagnostics that certify their
convergence rates, and reproducible built-in instances.
"""

from .problem import (
    AffineSet,
    FeasibilityProblem,
    ProblemFormatError,
    SparsityConstraint,
    ValidationError,
    Violation,
    dump_problem,
    fingerprint,
    load_problem,
    validate_problem,
)
from .projections import (
    NormalConeQuery,
    SparseProjection,
    gap_distance,
    in_normal_cone,
    project_affine,
    project_sparse,
    reflect_affine,
    reflect_sparse,
    sparse_margin,
    support_sets,
)
from .solvers import (
    IterationRecord,
    IterationTrace,
    QuantityHitZero,
    RateEstimateError,
    RatePrediction,
    SolverConfig,
    estimate_rate,
    predict_rates,
    run_alternating_projections,
    run_douglas_rachford,
    run_projected_gradient,
    trace_to_csv,
)
from .diagnostics import (
    EmptyIntersection,
    EnumerationTooLarge,
    FixedPointSetDescription,
    RipReport,
    StrongRegularityReport,
    check_strong_regularity,
    diagnostic_report,
    dr_fixed_point_set,
    friedrichs_cosine,
    rip_constants,
    uprip_delta,
)
from .instances import GeneratorSpec, PerturbedStart, build, perturb_start
from .estimators import AlternatingProjections, DouglasRachford, ProjectedGradient

__version__ = "0.1.0"
