"""Projectors and reflectors for the two constraint sets.

The affine projector P_B x = x - M^T (M M^T)^{-1} (M x - p) reuses the
Cholesky factor stored on the AffineSet.  The sparse projector keeps the
s largest magnitudes; it is multivalued at magnitude ties, so the full
operation returns every optimal support while the canonical point keeps
the lexicographically smallest one.  Reflectors are R = 2 P - Id.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .problem import AffineSet, FeasibilityProblem, SparsityConstraint
from .validation import as_vector, nonzero_count

__all__ = [
    "TIE_TOL",
    "SparseProjection",
    "NormalConeQuery",
    "project_affine",
    "reflect_affine",
    "project_sparse",
    "reflect_sparse",
    "support_sets",
    "canonical_support",
    "sparse_margin",
    "in_normal_cone",
    "gap_distance",
]

# absolute tolerance for magnitude ties in the sparse projector
TIE_TOL = 1e-12


@dataclass
class SparseProjection:
    """Result of projecting onto A_s.

    `point` keeps the canonical (lexicographically smallest) optimal
    support; `optimal_supports` lists every optimal support in
    lexicographic order, so optimal_supports[0] is the support of
    `point`.  `ambiguous` is True when more than one support is optimal.
    """

    point: np.ndarray
    optimal_supports: list[tuple[int, ...]]
    ambiguous: bool


@dataclass(frozen=True)
class NormalConeQuery:
    """Membership query: is `direction` in the normal cone at `base_point`?"""

    base_point: np.ndarray
    direction: np.ndarray


def project_affine(x, aset: AffineSet) -> np.ndarray:
    """Orthogonal projection onto B = {x : M x = p}."""
    x = as_vector(x, length=aset.n, name="x")
    return x - aset.M.T @ aset.solve_gram(aset.M @ x - aset.p)


def reflect_affine(x, aset: AffineSet) -> np.ndarray:
    """R_B x = 2 P_B x - x."""
    x = as_vector(x, length=aset.n, name="x")
    return 2.0 * project_affine(x, aset) - x


def _sparsity(constraint) -> int:
    if isinstance(constraint, SparsityConstraint):
        return constraint.s
    return int(constraint)


def _threshold_split(magnitudes: np.ndarray, s: int, tie_tol: float):
    """Split indices for the s-largest selection: (mandatory, ties, slots).

    `mandatory` lie strictly above the selection threshold, `ties` sit on
    it within tie_tol, and `slots` of them must be chosen.  Index arrays
    are ascending.
    """
    n = magnitudes.size
    t = np.partition(magnitudes, n - s)[n - s]
    mandatory = np.flatnonzero(magnitudes > t + tie_tol)
    pool = np.flatnonzero(magnitudes >= t - tie_tol)
    ties = np.setdiff1d(pool, mandatory, assume_unique=True)
    return mandatory, ties, s - mandatory.size


def canonical_support(x: np.ndarray, s: int, tie_tol: float = TIE_TOL):
    """Deterministic support selection for the sparse projector.

    Returns (support, ambiguous, alternative): the lexicographically
    smallest optimal support, whether other optimal supports exist, and
    the next one in lexicographic order (None when unique).  O(n) via
    partial selection; no support enumeration.
    """
    n = x.size
    if s < 0 or (s == 0 and n == 0):
        raise ValueError(f"invalid sparsity level s={s}")
    if s == 0:
        return np.empty(0, dtype=int), False, None
    if s >= n:
        return np.arange(n), False, None
    mandatory, ties, k = _threshold_split(np.abs(x), s, tie_tol)
    support = np.sort(np.concatenate([mandatory, ties[:k]]))
    if ties.size > k:
        alternative = np.sort(np.concatenate([mandatory, ties[: k - 1], ties[k : k + 1]]))
        return support, True, alternative
    return support, False, None


def project_sparse(x, constraint, tie_tol: float = TIE_TOL) -> SparseProjection:
    """Projection onto A_s: zero everything off an optimal support.

    All optimal supports (magnitude ties resolved within tie_tol) are
    enumerated in lexicographic order; the returned point uses the first.
    Enumeration is combinatorial in the number of tied entries, which is
    fine at the intended problem sizes.
    """
    x = as_vector(x, name="x")
    s = _sparsity(constraint)
    n = x.size
    if isinstance(constraint, SparsityConstraint) and constraint.n != n:
        raise ValueError(f"constraint is on R^{constraint.n} but x has length {n}")
    if s < 0:
        raise ValueError(f"invalid sparsity level s={s}")
    if s == 0:
        return SparseProjection(np.zeros(n), [()], False)
    if s >= n:
        return SparseProjection(x.copy(), [tuple(range(n))], False)
    mandatory, ties, k = _threshold_split(np.abs(x), s, tie_tol)
    supports = sorted(
        tuple(sorted(mandatory.tolist() + list(chosen)))
        for chosen in combinations(ties.tolist(), k)
    )
    point = np.zeros(n)
    first = list(supports[0])
    point[first] = x[first]
    return SparseProjection(point, supports, len(supports) > 1)


def reflect_sparse(x, constraint, tie_tol: float = TIE_TOL) -> SparseProjection:
    """R_{A_s} x = 2 P_{A_s} x - x, canonical branch; supports as in project_sparse."""
    x = as_vector(x, name="x")
    proj = project_sparse(x, constraint, tie_tol)
    return SparseProjection(2.0 * proj.point - x, proj.optimal_supports, proj.ambiguous)


def support_sets(x, s: int, tie_tol: float = TIE_TOL) -> list[tuple[int, ...]]:
    """All optimal supports C_s(x), lexicographically sorted."""
    return project_sparse(x, s, tie_tol).optimal_supports


def sparse_margin(a) -> float:
    """Smallest nonzero magnitude of a; the local-ball radius scale."""
    a = as_vector(a, name="a")
    nz = a[a != 0.0]
    if nz.size == 0:
        raise ValueError("sparse_margin is undefined for the zero vector")
    return float(np.min(np.abs(nz)))


def in_normal_cone(query: NormalConeQuery, constraint) -> bool:
    """Membership in N_{A_s}(a) = {v : ||v||_0 <= n - s} ∩ supp(a)^⊥.

    Zeros are counted exactly; the base point must lie in A_s.
    """
    a = as_vector(query.base_point, name="base_point")
    v = as_vector(query.direction, length=a.size, name="direction")
    s = _sparsity(constraint)
    if nonzero_count(a) > s:
        raise ValueError("base_point is not in A_s")
    if nonzero_count(v) > a.size - s:
        return False
    return not np.any(v[a != 0.0])


def gap_distance(x, problem: FeasibilityProblem) -> float:
    """||P_{A_s} x - P_B x|| with the canonical sparse branch."""
    x = as_vector(x, length=problem.n, name="x")
    support, _, _ = canonical_support(x, problem.s)
    point = np.zeros(x.size)
    point[support] = x[support]
    return float(np.linalg.norm(point - project_affine(x, problem.affine)))
