"""Built-in problem instances and seeded generators.

Random families draw every number from SplitMix64, a counter-based
64-bit generator with fixed constants, so a (kind, m, n, s, seed) tuple
identifies one problem exactly regardless of platform or numpy version.

Kinds:
    hadamard7x8     -- fixed 7x8 matrix with orthonormal rows drawn from
                       an 8x8 Hadamard matrix; unique 1-sparse solution
    pathological    -- fixed 2x3 instance whose projection methods admit
                       cycles and stalls away from the solution
    gaussian        -- i.i.d. N(0, 1/m) entries
    row_orthonormal -- Gaussian rows orthonormalized, M M^T = Id
    fourier_like    -- randomly selected rows of the real trigonometric
                       orthonormal basis, M M^T = Id
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .problem import (
    AffineSet,
    FeasibilityProblem,
    SparsityConstraint,
    validate_problem,
)
from .projections import sparse_margin
from .validation import as_vector

__all__ = [
    "SplitMix64",
    "GeneratorSpec",
    "PerturbedStart",
    "GENERATOR_KINDS",
    "build",
    "perturb_start",
    "dr_cycle_start",
    "ap_stuck_start",
]

GENERATOR_KINDS = (
    "hadamard7x8",
    "pathological",
    "gaussian",
    "row_orthonormal",
    "fourier_like",
)

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64: state advances by a fixed odd constant, output is the
    mixed state.  Constants are part of the format; two implementations
    with the same seed produce identical streams.
    """

    GAMMA = 0x9E3779B97F4A7C15
    MIX1 = 0xBF58476D1CE4E5B9
    MIX2 = 0x94D049BB133111EB

    def __init__(self, seed: int):
        self._state = int(seed) & _MASK64
        self._spare_normal: float | None = None

    def next_u64(self) -> int:
        self._state = (self._state + self.GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * self.MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * self.MIX2) & _MASK64
        return z ^ (z >> 31)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        """Uniform in [lo, hi): 53-bit mantissa from the top output bits."""
        u = (self.next_u64() >> 11) * 2.0 ** -53
        return lo + (hi - lo) * u

    def normal(self) -> float:
        """Standard normal via Box-Muller; pairs are cached."""
        if self._spare_normal is not None:
            z, self._spare_normal = self._spare_normal, None
            return z
        # u1 in (0, 1] so the log is finite
        u1 = ((self.next_u64() >> 11) + 1) * 2.0 ** -53
        u2 = (self.next_u64() >> 11) * 2.0 ** -53
        r = np.sqrt(-2.0 * np.log(u1))
        self._spare_normal = float(r * np.sin(2.0 * np.pi * u2))
        return float(r * np.cos(2.0 * np.pi * u2))

    def below(self, bound: int) -> int:
        """Uniform integer in [0, bound) by rejection (no modulo bias)."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % bound

    def subset(self, n: int, k: int) -> list[int]:
        """Sorted k-subset of range(n) via partial Fisher-Yates."""
        idx = list(range(n))
        for i in range(k):
            j = i + self.below(n - i)
            idx[i], idx[j] = idx[j], idx[i]
        return sorted(idx[:k])


@dataclass
class GeneratorSpec:
    """Recipe for one problem instance; mirrors the JSON document form."""

    kind: str
    m: int | None = None
    n: int | None = None
    s: int | None = None
    seed: int = 0
    solution_scale: float = 10.0

    def to_json(self) -> str:
        doc = {"kind": self.kind, "seed": int(self.seed), "solution_scale": self.solution_scale}
        for key in ("m", "n", "s"):
            value = getattr(self, key)
            if value is not None:
                doc[key] = int(value)
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GeneratorSpec":
        doc = json.loads(text)
        if not isinstance(doc, dict) or "kind" not in doc:
            raise ValueError("generator document must be an object with a 'kind'")
        unknown = set(doc) - {"kind", "m", "n", "s", "seed", "solution_scale"}
        if unknown:
            raise ValueError(f"unknown generator keys: {sorted(unknown)}")
        return cls(
            kind=doc["kind"],
            m=doc.get("m"),
            n=doc.get("n"),
            s=doc.get("s"),
            seed=doc.get("seed", 0),
            solution_scale=doc.get("solution_scale", 10.0),
        )


@dataclass
class PerturbedStart:
    """A starting point plus whether it came from inside the local ball
    (perturbation radius below half the solution's smallest magnitude)."""

    point: np.ndarray
    in_local_ball: bool


# 7x8 matrix with orthonormal rows: seven rows of the 8x8 Hadamard matrix
# scaled by 1/sqrt(8).  Distinct columns have inner product +-1/8, so every
# two-column Gram matrix has eigenvalues exactly {3/4, 1}.
_HADAMARD_ROWS = [
    [1, 1, 1, 1, 1, 1, 1, 1],
    [1, 1, 1, 1, -1, -1, -1, -1],
    [1, 1, -1, -1, 1, 1, -1, -1],
    [1, -1, 1, -1, 1, -1, 1, -1],
    [1, 1, -1, -1, -1, -1, 1, 1],
    [1, -1, -1, 1, 1, -1, -1, 1],
    [1, -1, 1, -1, -1, 1, -1, 1],
]

_PATHOLOGICAL_M = [[1.0, -0.5, 0.0], [0.0, 0.5, -1.0]]
_PATHOLOGICAL_P = [-5.0, 5.0]

# Rational starting point from which the Douglas-Rachford operator on the
# pathological instance steps by exactly (-5, 0, 5) and returns after two
# steps; rendered to the nearest doubles.
_DR_CYCLE_POINT = [
    Fraction(38894857328700073, 237684487542793012780631851008),
    Fraction(-297105609428507214758454580565, 118842243771396506390315925504),
    Fraction(-1188422437713940163629828887893, 237684487542793012780631851008),
]


def dr_cycle_start() -> np.ndarray:
    """Starting point of the exact period-2 Douglas-Rachford cycle on the
    pathological instance."""
    return np.array([float(f) for f in _DR_CYCLE_POINT])


def ap_stuck_start() -> np.ndarray:
    """Starting point from which alternating projections on the
    pathological instance oscillates between (-4,0,0) and (0,0,-4)."""
    return np.array([-4.0, 0.0, 0.0])


def _plant_solution(rng: SplitMix64, n: int, s: int, scale: float) -> np.ndarray:
    """s nonzeros with magnitudes in [1, scale) and random signs."""
    solution = np.zeros(n)
    for i in rng.subset(n, s):
        sign = 1.0 if rng.next_u64() & 1 else -1.0
        solution[i] = sign * rng.uniform(1.0, scale)
    return solution


def _gaussian_matrix(rng: SplitMix64, m: int, n: int) -> np.ndarray:
    M = np.empty((m, n))
    for i in range(m):
        for j in range(n):
            M[i, j] = rng.normal()
    return M


def _row_orthonormalize(A: np.ndarray) -> np.ndarray:
    Q, R = np.linalg.qr(A.T)
    signs = np.sign(np.diag(R))
    signs[signs == 0.0] = 1.0
    return (Q * signs).T


def _trig_row(n: int, r: int) -> np.ndarray:
    """Row r of the real trigonometric orthonormal basis of R^n.

    r = 0 is the constant; r = 2f-1 and r = 2f are the cosine/sine pair
    at frequency f.  For even n the last row is the Nyquist cosine.
    """
    t = np.arange(n)
    if r == 0:
        return np.ones(n) / np.sqrt(n)
    f = (r + 1) // 2
    if n % 2 == 0 and r == n - 1:
        return np.cos(np.pi * t) / np.sqrt(n)
    if r % 2 == 1:
        return np.sqrt(2.0 / n) * np.cos(2.0 * np.pi * f * t / n)
    return np.sqrt(2.0 / n) * np.sin(2.0 * np.pi * f * t / n)


def _require_dims(spec: GeneratorSpec):
    if spec.m is None or spec.n is None or spec.s is None:
        raise ValueError(f"kind {spec.kind!r} requires m, n, and s")
    if not 1 <= spec.m < spec.n:
        raise ValueError(f"need 1 <= m < n, got m={spec.m}, n={spec.n}")
    if not 1 <= spec.s <= spec.n:
        raise ValueError(f"need 1 <= s <= n, got s={spec.s}")
    if spec.s >= spec.m:
        warnings.warn(
            f"s={spec.s} >= m={spec.m}: solutions with this sparsity are "
            "not identifiable in general",
            stacklevel=3,
        )
    if spec.solution_scale <= 1.0:
        raise ValueError("solution_scale must exceed 1")


def _check_fixed_dims(spec: GeneratorSpec, m: int, n: int, s: int):
    for name, given, fixed in (("m", spec.m, m), ("n", spec.n, n), ("s", spec.s, s)):
        if given is not None and given != fixed:
            raise ValueError(f"kind {spec.kind!r} has fixed {name}={fixed}, got {given}")


def build(spec: GeneratorSpec) -> FeasibilityProblem:
    """Materialize the instance described by `spec` (validated)."""
    if spec.kind == "hadamard7x8":
        _check_fixed_dims(spec, 7, 8, 1)
        M = np.array(_HADAMARD_ROWS, dtype=float) / np.sqrt(8.0)
        solution = np.zeros(8)
        solution[0] = 10.0
        problem = FeasibilityProblem(
            affine=AffineSet(M, M @ solution),
            sparsity=SparsityConstraint(n=8, s=1),
            known_solution=solution,
        )
    elif spec.kind == "pathological":
        _check_fixed_dims(spec, 2, 3, 1)
        problem = FeasibilityProblem(
            affine=AffineSet(_PATHOLOGICAL_M, _PATHOLOGICAL_P),
            sparsity=SparsityConstraint(n=3, s=1),
            known_solution=np.array([0.0, 10.0, 0.0]),
        )
    elif spec.kind in ("gaussian", "row_orthonormal", "fourier_like"):
        _require_dims(spec)
        m, n, s = spec.m, spec.n, spec.s
        rng = SplitMix64(spec.seed)
        if spec.kind == "gaussian":
            M = _gaussian_matrix(rng, m, n) / np.sqrt(m)
        elif spec.kind == "row_orthonormal":
            M = _row_orthonormalize(_gaussian_matrix(rng, m, n))
        else:
            rows = rng.subset(n, m)
            M = np.vstack([_trig_row(n, r) for r in rows])
        solution = _plant_solution(rng, n, s, spec.solution_scale)
        problem = FeasibilityProblem(
            affine=AffineSet(M, M @ solution),
            sparsity=SparsityConstraint(n=n, s=s),
            known_solution=solution,
        )
    else:
        raise ValueError(f"unknown kind {spec.kind!r}; expected one of {GENERATOR_KINDS}")
    violations = validate_problem(problem)
    if violations:
        raise ValueError(f"generated instance failed validation: {violations}")
    return problem


def perturb_start(problem: FeasibilityProblem, radius: float, seed: int) -> PerturbedStart:
    """known_solution plus a per-coordinate uniform (-radius, radius) offset.

    The flag records whether the radius is below half the solution's
    sparse margin, the regime in which local convergence is guaranteed.
    """
    if problem.known_solution is None:
        raise ValueError("perturb_start needs a problem with a known solution")
    if not radius > 0.0:
        raise ValueError("radius must be positive")
    solution = as_vector(problem.known_solution, name="known_solution")
    rng = SplitMix64(seed)
    offset = np.array([rng.uniform(-radius, radius) for _ in range(solution.size)])
    in_ball = radius < 0.5 * sparse_margin(solution)
    return PerturbedStart(point=solution + offset, in_local_ball=in_ball)
