"""Problem data for sparse affine feasibility.

Contents:
    AffineSet           -- affine constraint set B = {x : M x = p}
    SparsityConstraint  -- sparsity set A_s = {x : ||x||_0 <= s}
    FeasibilityProblem  -- the pair, plus an optional known solution
    Violation           -- machine-readable validation finding
    validate_problem    -- structural checks, violations returned as data
    load_problem / dump_problem / fingerprint -- JSON round trip

The affine set owns a Cholesky factorization of M M^T, computed once at
construction and reused by every projection.  The pseudoinverse is never
formed explicitly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .validation import as_matrix, as_vector, nonzero_count

__all__ = [
    "AffineSet",
    "SparsityConstraint",
    "FeasibilityProblem",
    "Violation",
    "ValidationError",
    "ProblemFormatError",
    "validate_problem",
    "load_problem",
    "dump_problem",
    "fingerprint",
]

RANK_TOL = 1e-10
FEAS_TOL = 1e-9


@dataclass(frozen=True)
class Violation:
    """One validation finding; `code` is stable and machine-readable."""

    code: str
    message: str


class ValidationError(ValueError):
    """Raised when a problem fails validation; carries the violation list."""

    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(v.code for v in violations))


class ProblemFormatError(ValueError):
    """Raised when a problem document cannot be parsed."""


class AffineSet:
    """B = {x in R^n : M x = p} for a wide matrix M with full row rank.

    Rank is assessed from the singular values of M (smallest > rank_tol
    times largest).  A rank-deficient M is accepted at construction so
    that validate_problem can report it as data; projections onto a
    deficient set raise.
    """

    def __init__(self, M, p, rank_tol: float = RANK_TOL, feas_tol: float = FEAS_TOL):
        self.M = as_matrix(M, "M").copy()
        self.p = as_vector(p, length=self.M.shape[0], name="p").copy()
        self.rank_tol = float(rank_tol)
        self.feas_tol = float(feas_tol)
        self.singular_values = np.linalg.svd(self.M, compute_uv=False)
        smax, smin = self.singular_values[0], self.singular_values[-1]
        self.is_full_row_rank = bool(self.m <= self.n and smin > self.rank_tol * smax)
        self._gram_factor = None
        if self.is_full_row_rank:
            self._gram_factor = cho_factor(self.M @ self.M.T, lower=True)
        self.M.setflags(write=False)
        self.p.setflags(write=False)

    @property
    def m(self) -> int:
        return self.M.shape[0]

    @property
    def n(self) -> int:
        return self.M.shape[1]

    def solve_gram(self, r: np.ndarray) -> np.ndarray:
        """Solve (M M^T) y = r through the stored Cholesky factor."""
        if self._gram_factor is None:
            raise ValueError("affine set is rank deficient; no factorization available")
        return cho_solve(self._gram_factor, r)

    def residual(self, x: np.ndarray) -> float:
        """||M x - p||, the constraint violation of x."""
        return float(np.linalg.norm(self.M @ x - self.p))

    def __repr__(self) -> str:
        return f"AffineSet(m={self.m}, n={self.n}, full_row_rank={self.is_full_row_rank})"


@dataclass(frozen=True)
class SparsityConstraint:
    """A_s = {x in R^n : ||x||_0 <= s}.  Zeros are counted exactly."""

    n: int
    s: int


@dataclass
class FeasibilityProblem:
    """Find x with at most `s` nonzeros satisfying M x = p."""

    affine: AffineSet
    sparsity: SparsityConstraint
    known_solution: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.known_solution is not None:
            sol = as_vector(self.known_solution, name="known_solution").copy()
            sol.setflags(write=False)
            self.known_solution = sol

    @property
    def n(self) -> int:
        return self.affine.n

    @property
    def m(self) -> int:
        return self.affine.m

    @property
    def s(self) -> int:
        return self.sparsity.s


def validate_problem(problem: FeasibilityProblem) -> list[Violation]:
    """Check structural invariants; return all violations (empty when valid)."""
    aff, spc = problem.affine, problem.sparsity
    violations: list[Violation] = []
    if aff.m > aff.n:
        violations.append(
            Violation("rows_exceed_columns", f"M is {aff.m}x{aff.n}; expected m <= n")
        )
    if not aff.is_full_row_rank:
        smax, smin = aff.singular_values[0], aff.singular_values[-1]
        violations.append(
            Violation(
                "rank_deficient",
                f"smallest singular value {smin:.3e} <= {aff.rank_tol:g} * {smax:.3e}",
            )
        )
    if spc.n != aff.n:
        violations.append(
            Violation(
                "sparsity_dimension_mismatch",
                f"sparsity constraint is on R^{spc.n} but M has {aff.n} columns",
            )
        )
    if not 0 <= spc.s <= spc.n:
        violations.append(
            Violation("sparsity_out_of_range", f"s={spc.s} outside [0, {spc.n}]")
        )
    sol = problem.known_solution
    if sol is not None:
        if sol.size != aff.n:
            violations.append(
                Violation(
                    "known_solution_wrong_length",
                    f"known_solution has length {sol.size}, expected {aff.n}",
                )
            )
        else:
            if nonzero_count(sol) > spc.s:
                violations.append(
                    Violation(
                        "known_solution_too_dense",
                        f"known_solution has {nonzero_count(sol)} nonzeros > s={spc.s}",
                    )
                )
            res = aff.residual(sol)
            if res > aff.feas_tol * (1.0 + float(np.linalg.norm(aff.p))):
                violations.append(
                    Violation(
                        "known_solution_infeasible",
                        f"||M x - p|| = {res:.3e} exceeds tolerance",
                    )
                )
    return violations


def _reject_constant(token: str):
    raise ProblemFormatError(f"non-finite number {token!r} is not allowed")


_ALLOWED_KEYS = {"M", "p", "s", "known_solution"}


def _as_number_list(obj, name: str) -> list[float]:
    if not isinstance(obj, list) or not obj:
        raise ProblemFormatError(f"{name} must be a nonempty array of numbers")
    out = []
    for v in obj:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ProblemFormatError(f"{name} must contain numbers only")
        out.append(float(v))
    return out


def load_problem(text: str) -> FeasibilityProblem:
    """Parse a problem document: {"M": [[..]], "p": [..], "s": int, "known_solution": [..]?}.

    NaN/Inf tokens, ragged rows, wrong lengths, and unknown keys are
    format errors; a well-formed document that fails validate_problem
    raises ValidationError with the violation list attached.
    """
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(f"malformed JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ProblemFormatError("top-level value must be an object")
    unknown = set(doc) - _ALLOWED_KEYS
    if unknown:
        raise ProblemFormatError(f"unknown keys: {sorted(unknown)}")
    for key in ("M", "p", "s"):
        if key not in doc:
            raise ProblemFormatError(f"missing required key {key!r}")
    if not isinstance(doc["M"], list) or not doc["M"]:
        raise ProblemFormatError("M must be a nonempty array of rows")
    rows = [_as_number_list(row, "M row") for row in doc["M"]]
    width = len(rows[0])
    if any(len(row) != width for row in rows):
        raise ProblemFormatError("M rows must all have the same length")
    p = _as_number_list(doc["p"], "p")
    if len(p) != len(rows):
        raise ProblemFormatError(f"p has length {len(p)} but M has {len(rows)} rows")
    s = doc["s"]
    if isinstance(s, bool) or not isinstance(s, int):
        raise ProblemFormatError("s must be an integer")
    known = None
    if doc.get("known_solution") is not None:
        known = _as_number_list(doc["known_solution"], "known_solution")
        if len(known) != width:
            raise ProblemFormatError(
                f"known_solution has length {len(known)}, expected {width}"
            )
    problem = FeasibilityProblem(
        affine=AffineSet(rows, p),
        sparsity=SparsityConstraint(n=width, s=s),
        known_solution=known,
    )
    violations = validate_problem(problem)
    if violations:
        raise ValidationError(violations)
    return problem


def dump_problem(problem: FeasibilityProblem) -> str:
    """Serialize to the canonical document form (sorted keys, full precision)."""
    doc = {
        "M": [[float(v) for v in row] for row in problem.affine.M],
        "p": [float(v) for v in problem.affine.p],
        "s": int(problem.sparsity.s),
    }
    if problem.known_solution is not None:
        doc["known_solution"] = [float(v) for v in problem.known_solution]
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def fingerprint(problem: FeasibilityProblem) -> str:
    """SHA-256 of the canonical document; stable across runs."""
    return hashlib.sha256(dump_problem(problem).encode("ascii")).hexdigest()
