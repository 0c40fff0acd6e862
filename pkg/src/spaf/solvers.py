"""Fixed-point solvers for sparse affine feasibility.

Three iterations on the pair (A_s, B):

    alternating projections   x+ = P_A (P_B x)
    Douglas-Rachford          x+ = (R_A (R_B x) + x) / 2
    projected gradient        x+ = P_A (x - grad f(x) / tau),  f = ||Mx-p||^2 / 2

All three resolve sparse-projection ties with the canonical
(lexicographically smallest) support and flag every iteration on which
the projection was multivalued.  Alternating projections additionally
steps to the next optimal support when the canonical branch would
freeze at a point that is not a solution, so tie-driven oscillations
show up as detected cycles instead of silent stalls.

Douglas-Rachford iterates need not approach the intersection even when
they converge; the shadow sequence P_B x^k does, so its gap distance
drives the termination test and is what the trace records.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .problem import FeasibilityProblem, ValidationError, validate_problem
from .projections import canonical_support, project_affine
from .validation import as_vector

__all__ = [
    "CYCLE_RTOL",
    "SolverConfig",
    "IterationRecord",
    "IterationTrace",
    "RatePrediction",
    "RateEstimateError",
    "QuantityHitZero",
    "run_alternating_projections",
    "run_douglas_rachford",
    "run_projected_gradient",
    "alternating_projections_step",
    "douglas_rachford_step",
    "projected_gradient_step",
    "estimate_rate",
    "log_linear_fit",
    "predict_rates",
    "trace_to_csv",
]

# relative tolerance for iterate comparisons in the cycle detector and
# in the tie-escape test
CYCLE_RTOL = 1e-9


@dataclass
class SolverConfig:
    """Shared solver knobs; `tau` only affects the projected gradient."""

    max_iterations: int = 10000
    gap_tol: float = 1e-10
    step_tol: float = 1e-14
    tau: float = 1.0
    cycle_detection: bool = True
    cycle_window: int = 8
    store_iterates: bool = False

    def validate(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not self.gap_tol > 0.0 or not self.step_tol > 0.0:
            raise ValueError("tolerances must be positive")
        if not self.tau > 0.0:
            raise ValueError("tau must be positive")
        if self.cycle_window < 2:
            raise ValueError("cycle_window must be at least 2")


@dataclass
class IterationRecord:
    """One row of a solver trace.

    `gap` is the gap distance of the new iterate (for Douglas-Rachford,
    of its shadow); `dist_to_solution` is filled only when the problem
    carries a known solution, measured at the iterate for AP/PG and at
    the shadow for DR.  `objective` is the least-squares value recorded
    by the projected gradient.  `shadow` is stored when the config asks
    for iterates.
    """

    k: int
    step_length: float
    gap: float
    dist_to_solution: float | None
    ambiguous: bool
    objective: float | None = None
    shadow: np.ndarray | None = None


@dataclass
class IterationTrace:
    """Complete record of one solver run."""

    algorithm: str
    termination: str
    final_point: np.ndarray
    per_iteration: list[IterationRecord] = field(default_factory=list)
    final_shadow: np.ndarray | None = None
    iterates: list[np.ndarray] | None = None
    cycle_period: int | None = None

    @property
    def iterations(self) -> int:
        return len(self.per_iteration)

    @property
    def ambiguity_count(self) -> int:
        return sum(1 for r in self.per_iteration if r.ambiguous)

    def series(self, quantity: str) -> list[float]:
        """Per-iteration values of 'gap', 'distance', or 'objective'."""
        if quantity == "gap":
            return [r.gap for r in self.per_iteration]
        if quantity == "distance":
            values = [r.dist_to_solution for r in self.per_iteration]
            if any(v is None for v in values):
                raise ValueError("trace has no distance-to-solution records")
            return values
        if quantity == "objective":
            values = [r.objective for r in self.per_iteration]
            if any(v is None for v in values):
                raise ValueError("trace has no objective records")
            return values
        raise ValueError(f"unknown quantity {quantity!r}")


class RateEstimateError(ValueError):
    """Raised when a convergence rate cannot be estimated from a trace."""


class QuantityHitZero(RateEstimateError):
    """The monitored quantity reached exact zero; carries the iteration."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"quantity hit zero at iteration {index}")


class _CycleDetector:
    """Match the new iterate against the last few, skipping period 1
    (that is the stall test's job).

    A linearly converging orbit also brings iterates within any fixed
    tolerance of each other eventually, so a period-p match additionally
    requires the mismatch to be far smaller than the steps taken around
    the loop: genuine cycles close to numerical noise, contractions
    never close tighter than they step.
    """

    STEP_FACTOR = 1e-6

    def __init__(self, window: int, rel_tol: float = CYCLE_RTOL):
        self.window = window
        self.rel_tol = rel_tol
        self.iterate_history: list[np.ndarray] = []
        self.step_history: list[float] = []

    def push_start(self, x: np.ndarray):
        self.iterate_history.append(x.copy())

    def check_and_push(self, x: np.ndarray, step: float) -> int | None:
        period = None
        scale = 1.0 + float(np.linalg.norm(x))
        for p in range(2, min(self.window, len(self.iterate_history)) + 1):
            mismatch = float(np.linalg.norm(x - self.iterate_history[-p]))
            loop_steps = self.step_history[len(self.step_history) - (p - 1) :] + [step]
            diameter = max(loop_steps)
            if (
                diameter > 0.0
                and mismatch <= self.rel_tol * scale
                and mismatch <= self.STEP_FACTOR * diameter
            ):
                period = p
                break
        self.iterate_history.append(x.copy())
        self.step_history.append(step)
        if len(self.iterate_history) > self.window + 1:
            del self.iterate_history[0]
        if len(self.step_history) > self.window:
            del self.step_history[0]
        return period


def _restrict(v: np.ndarray, support: np.ndarray) -> np.ndarray:
    out = np.zeros(v.size)
    out[support] = v[support]
    return out


def _require_solvable(problem: FeasibilityProblem):
    violations = validate_problem(problem)
    if violations:
        raise ValidationError(violations)


def alternating_projections_step(problem, x):
    """One canonical application of P_A P_B; returns (next, ambiguous)."""
    b = project_affine(x, problem.affine)
    support, ambiguous, _ = canonical_support(b, problem.s)
    return _restrict(b, support), ambiguous


def douglas_rachford_step(problem, x):
    """One canonical application of (R_A R_B + Id)/2; returns
    (next, shadow, ambiguous)."""
    shadow = project_affine(x, problem.affine)
    reflected = 2.0 * shadow - x
    support, ambiguous, _ = canonical_support(reflected, problem.s)
    half = 2.0 * _restrict(reflected, support) - reflected
    return 0.5 * (half + x), shadow, ambiguous


def projected_gradient_step(problem, x, tau: float = 1.0):
    """One canonical application of P_A (x - grad f / tau); returns
    (next, ambiguous)."""
    aff = problem.affine
    gradient = aff.M.T @ (aff.M @ x - aff.p)
    y = x - gradient / tau
    support, ambiguous, _ = canonical_support(y, problem.s)
    return _restrict(y, support), ambiguous


def _distance(x: np.ndarray, target: np.ndarray | None) -> float | None:
    if target is None:
        return None
    return float(np.linalg.norm(x - target))


def run_alternating_projections(
    problem: FeasibilityProblem, x0, config: SolverConfig | None = None
) -> IterationTrace:
    """Alternating projections x+ = P_A(P_B x).

    Parameters
    ----------
    problem : FeasibilityProblem
        Must pass validate_problem.
    x0 : array of length n
        Starting point.
    config : SolverConfig, optional

    Returns
    -------
    IterationTrace
        Per-iteration step lengths and gap distances; termination is one
        of 'converged' (gap <= gap_tol), 'cycle_detected' (with the
        period), 'stalled' (step <= step_tol while the gap stays large),
        or 'max_iterations'.

    Notes
    -----
    Iterates after the first lie in A_s, so the gap distance of an
    iterate equals its distance to B.  When the sparse projection is
    multivalued and the canonical branch maps the iterate to itself away
    from a solution, the step is retaken with the next optimal support;
    the resulting oscillation is then reported by the cycle detector.
    """
    cfg = config if config is not None else SolverConfig()
    cfg.validate()
    _require_solvable(problem)
    x = as_vector(x0, length=problem.n, name="x0").copy()
    records: list[IterationRecord] = []
    iterates = [x.copy()] if cfg.store_iterates else None
    detector = _CycleDetector(cfg.cycle_window) if cfg.cycle_detection else None
    if detector is not None:
        detector.push_start(x)
    termination = "max_iterations"
    cycle_period = None
    b = project_affine(x, problem.affine)
    for k in range(1, cfg.max_iterations + 1):
        support, ambiguous, alternative = canonical_support(b, problem.s)
        x_new = _restrict(b, support)
        if (
            ambiguous
            and np.linalg.norm(x_new - x) <= CYCLE_RTOL * (1.0 + np.linalg.norm(x))
            and np.linalg.norm(x_new - b) > cfg.gap_tol
        ):
            x_new = _restrict(b, alternative)
        step = float(np.linalg.norm(x_new - x))
        b = project_affine(x_new, problem.affine)
        gap = float(np.linalg.norm(x_new - b))
        records.append(
            IterationRecord(
                k=k,
                step_length=step,
                gap=gap,
                dist_to_solution=_distance(x_new, problem.known_solution),
                ambiguous=ambiguous,
            )
        )
        if iterates is not None:
            iterates.append(x_new.copy())
        x = x_new
        if gap <= cfg.gap_tol:
            termination = "converged"
            break
        if detector is not None:
            period = detector.check_and_push(x_new, step)
            if period is not None:
                termination = "cycle_detected"
                cycle_period = period
                break
        if step <= cfg.step_tol:
            termination = "stalled"
            break
    return IterationTrace(
        algorithm="ap",
        termination=termination,
        final_point=x,
        per_iteration=records,
        iterates=iterates,
        cycle_period=cycle_period,
    )


def run_douglas_rachford(
    problem: FeasibilityProblem, x0, config: SolverConfig | None = None
) -> IterationTrace:
    """Douglas-Rachford x+ = (R_A(R_B x) + x)/2, monitored on shadows.

    Parameters
    ----------
    problem : FeasibilityProblem
    x0 : array of length n
    config : SolverConfig, optional

    Returns
    -------
    IterationTrace
        `gap` and `dist_to_solution` refer to the shadow P_B x^k, and
        `final_shadow` holds the last one; the iterates themselves may
        converge to a fixed point far from the intersection.  An
        iteration is flagged ambiguous when any sparse projection it
        evaluated (reflector or shadow) was multivalued.
    """
    cfg = config if config is not None else SolverConfig()
    cfg.validate()
    _require_solvable(problem)
    x = as_vector(x0, length=problem.n, name="x0").copy()
    records: list[IterationRecord] = []
    iterates = [x.copy()] if cfg.store_iterates else None
    detector = _CycleDetector(cfg.cycle_window) if cfg.cycle_detection else None
    if detector is not None:
        detector.push_start(x)
    termination = "max_iterations"
    cycle_period = None
    shadow = project_affine(x, problem.affine)
    for k in range(1, cfg.max_iterations + 1):
        reflected = 2.0 * shadow - x
        support, amb_reflect, _ = canonical_support(reflected, problem.s)
        half = 2.0 * _restrict(reflected, support) - reflected
        x_new = 0.5 * (half + x)
        step = float(np.linalg.norm(x_new - x))
        shadow = project_affine(x_new, problem.affine)
        sh_support, amb_shadow, _ = canonical_support(shadow, problem.s)
        gap = float(np.linalg.norm(shadow - _restrict(shadow, sh_support)))
        records.append(
            IterationRecord(
                k=k,
                step_length=step,
                gap=gap,
                dist_to_solution=_distance(shadow, problem.known_solution),
                ambiguous=amb_reflect or amb_shadow,
                shadow=shadow.copy() if cfg.store_iterates else None,
            )
        )
        if iterates is not None:
            iterates.append(x_new.copy())
        x = x_new
        if gap <= cfg.gap_tol:
            termination = "converged"
            break
        if detector is not None:
            period = detector.check_and_push(x_new, step)
            if period is not None:
                termination = "cycle_detected"
                cycle_period = period
                break
        if step <= cfg.step_tol:
            termination = "stalled"
            break
    return IterationTrace(
        algorithm="dr",
        termination=termination,
        final_point=x,
        per_iteration=records,
        final_shadow=shadow,
        iterates=iterates,
        cycle_period=cycle_period,
    )


def run_projected_gradient(
    problem: FeasibilityProblem, x0, config: SolverConfig | None = None
) -> IterationTrace:
    """Projected gradient (iterative hard thresholding) on f = ||Mx-p||^2/2.

    Parameters
    ----------
    problem : FeasibilityProblem
    x0 : array of length n
    config : SolverConfig, optional
        `config.tau` scales the step to 1/tau.

    Returns
    -------
    IterationTrace
        Records the objective value alongside step and gap.  With
        M M^T = Id and tau = 1 the iteration coincides with alternating
        projections.
    """
    cfg = config if config is not None else SolverConfig()
    cfg.validate()
    _require_solvable(problem)
    aff = problem.affine
    x = as_vector(x0, length=problem.n, name="x0").copy()
    records: list[IterationRecord] = []
    iterates = [x.copy()] if cfg.store_iterates else None
    detector = _CycleDetector(cfg.cycle_window) if cfg.cycle_detection else None
    if detector is not None:
        detector.push_start(x)
    termination = "max_iterations"
    cycle_period = None
    residual = aff.M @ x - aff.p
    for k in range(1, cfg.max_iterations + 1):
        y = x - (aff.M.T @ residual) / cfg.tau
        support, ambiguous, _ = canonical_support(y, problem.s)
        x_new = _restrict(y, support)
        step = float(np.linalg.norm(x_new - x))
        residual = aff.M @ x_new - aff.p
        objective = 0.5 * float(residual @ residual)
        gap = float(np.linalg.norm(x_new - project_affine(x_new, aff)))
        records.append(
            IterationRecord(
                k=k,
                step_length=step,
                gap=gap,
                dist_to_solution=_distance(x_new, problem.known_solution),
                ambiguous=ambiguous,
                objective=objective,
            )
        )
        if iterates is not None:
            iterates.append(x_new.copy())
        x = x_new
        if gap <= cfg.gap_tol:
            termination = "converged"
            break
        if detector is not None:
            period = detector.check_and_push(x_new, step)
            if period is not None:
                termination = "cycle_detected"
                cycle_period = period
                break
        if step <= cfg.step_tol:
            termination = "stalled"
            break
    return IterationTrace(
        algorithm="pg",
        termination=termination,
        final_point=x,
        per_iteration=records,
        iterates=iterates,
        cycle_period=cycle_period,
    )


def log_linear_fit(values) -> tuple[float, float]:
    """Least-squares fit of log(values) against the index.

    Returns (rate, r_squared) where rate = exp(slope).  Values must be
    strictly positive; a constant series fits perfectly with rate 1.
    """
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise RateEstimateError("need at least 2 values to fit")
    if np.any(values <= 0.0):
        raise RateEstimateError("values must be strictly positive")
    k = np.arange(values.size, dtype=float)
    logs = np.log(values)
    slope, intercept = np.polyfit(k, logs, 1)
    predicted = slope * k + intercept
    ss_res = float(np.sum((logs - predicted) ** 2))
    ss_tot = float(np.sum((logs - np.mean(logs)) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(np.exp(slope)), r_squared


def estimate_rate(trace: IterationTrace, quantity: str = "gap") -> float:
    """Empirical per-iteration contraction factor of a trace quantity.

    Fits log(quantity) against the iteration index on the tail half of
    the trace (the early transient is skipped).  Requires at least 5
    recorded iterations; a quantity that reaches exact zero inside the
    window raises QuantityHitZero with the iteration index.
    """
    values = trace.series(quantity)
    if len(values) < 5:
        raise RateEstimateError(
            f"need at least 5 iterations to estimate a rate, trace has {len(values)}"
        )
    start = len(values) // 2
    window = values[start:]
    for i, v in enumerate(window):
        if v <= 0.0:
            raise QuantityHitZero(trace.per_iteration[start + i].k)
    rate, _ = log_linear_fit(window)
    return rate


@dataclass
class RatePrediction:
    """Linear rates promised by the verified hypotheses.

    Each `*_applicable` flag records whether the corresponding
    hypothesis actually held for the supplied constants; the rate values
    are reported either way.
    """

    ap_rate_rip: float
    ap_rate_rip_applicable: bool
    ap_rate_uprip: float
    ap_rate_uprip_applicable: bool
    pg_rate: float
    pg_rate_applicable: bool


def predict_rates(
    rip, uprip_delta: float, tau: float = 1.0, row_orthonormal: bool = False
) -> RatePrediction:
    """Theoretical contraction factors from restricted-isometry constants.

    Parameters
    ----------
    rip : RipReport
        Constants of order 2s (scaled bounds nu, mu).
    uprip_delta : float
        Constant of order 2s for the projector M^+ M.
    tau : float
        Projected-gradient step parameter.
    row_orthonormal : bool
        Whether M M^T = Id; the alternating-projection rate 1/nu - 1
        additionally requires it (and mu = 1).

    Returns
    -------
    RatePrediction
        ap_rate_rip = 1/nu - 1, ap_rate_uprip = sqrt(d/(1-d)) for
        d = uprip_delta (applicable when d < 1/2), and
        pg_rate = tau/nu - 1 (applicable when mu <= tau < 2 nu).
    """
    nu, mu = float(rip.nu), float(rip.mu)
    if nu <= 0.0:
        raise ValueError("nu is zero: strong regularity fails and no rate applies")
    if not 0.0 <= uprip_delta <= 1.0:
        raise ValueError(f"uprip_delta must be in [0, 1], got {uprip_delta}")
    ap_rate_rip = 1.0 / nu - 1.0
    ap_rip_ok = bool(row_orthonormal and abs(mu - 1.0) <= 1e-9)
    if uprip_delta < 1.0:
        ap_rate_uprip = float(np.sqrt(uprip_delta / (1.0 - uprip_delta)))
    else:
        ap_rate_uprip = float("inf")
    pg_rate = tau / nu - 1.0
    pg_ok = bool(mu - 1e-12 <= tau < 2.0 * nu)
    return RatePrediction(
        ap_rate_rip=ap_rate_rip,
        ap_rate_rip_applicable=ap_rip_ok,
        ap_rate_uprip=ap_rate_uprip,
        ap_rate_uprip_applicable=bool(uprip_delta < 0.5),
        pg_rate=pg_rate,
        pg_rate_applicable=pg_ok,
    )


def trace_to_csv(trace: IterationTrace, path):
    """Write the per-iteration records; dist_to_solution is blank when
    the problem had no known solution."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["k", "step_length", "gap", "dist_to_solution", "ambiguous"])
        for r in trace.per_iteration:
            writer.writerow(
                [
                    r.k,
                    repr(r.step_length),
                    repr(r.gap),
                    "" if r.dist_to_solution is None else repr(r.dist_to_solution),
                    int(r.ambiguous),
                ]
            )
