"""Regularity diagnostics for sparse affine feasibility instances.

Everything here is exact-or-refuse: restricted isometry extremes and
strong regularity are computed by full support enumeration (guarded by a
cap), never by sampling.
"""

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.linalg import null_space, orth

from .validation import as_matrix

# singular values below this multiple of sigma_max count as zero
SV_TOL = 1e-8
# cross-Gram singular values at least 1 - INTERSECT_TOL mark the intersection
INTERSECT_TOL = 1e-9
ORTHONORMAL_TOL = 1e-10
DEFAULT_CAP = 2_000_000

_CHUNK = 8192


class EnumerationTooLarge(ValueError):
    """Raised when a support scan would exceed the enumeration cap."""

    def __init__(self, total: int, cap: int):
        super().__init__(
            f"support enumeration needs {total} subsets, above the cap {cap}; "
            "reduce the order or raise the cap"
        )
        self.total = total
        self.cap = cap


class EmptyIntersection(ValueError):
    """Raised when a restricted system M_J z = p has no solution."""


@dataclass(frozen=True)
class RipReport:
    """Extreme restricted eigenvalues over all supports of one order."""

    order: int
    nu: float
    mu: float
    delta: float
    witness_min: tuple
    witness_max: tuple
    supports_enumerated: int


@dataclass(frozen=True)
class StrongRegularityReport:
    holds: bool
    worst_support: tuple
    min_singular: float


@dataclass
class FixedPointSetDescription:
    """Affine decomposition of a Douglas-Rachford fixed-point set.

    The set is anchor + span(basis_intersection) + span(basis_orthogonal):
    the first summand is parallel to the restricted feasible set, the
    second lives off the support and orthogonal to the kernel of M.
    """

    support: tuple
    basis_intersection: np.ndarray
    basis_orthogonal: np.ndarray
    anchor: np.ndarray

    @property
    def dim_intersection(self) -> int:
        return self.basis_intersection.shape[1]

    @property
    def dim_orthogonal(self) -> int:
        return self.basis_orthogonal.shape[1]


def _check_order(order: int, n: int):
    if not isinstance(order, (int, np.integer)) or isinstance(order, bool):
        raise ValueError("order must be an integer")
    if not 1 <= order <= n:
        raise ValueError(f"order must lie in [1, {n}], got {order}")


def _gram_eig_extremes(left, right, order, cap):
    """Scan eigenvalue extremes of left[:,J].T @ right[:,J] over supports.

    Supports of the given order are enumerated in lexicographic order;
    returns (min, max, argmin support, argmax support, count).
    """
    n = left.shape[1]
    total = math.comb(n, order)
    if total > cap:
        raise EnumerationTooLarge(total, cap)
    best_min = math.inf
    best_max = -math.inf
    witness_min = witness_max = None
    stream = combinations(range(n), order)
    while True:
        batch = []
        for combo in stream:
            batch.append(combo)
            if len(batch) == _CHUNK:
                break
        if not batch:
            break
        idx = np.array(batch, dtype=np.intp)
        grams = np.einsum("mtk,mtl->tkl", left[:, idx], right[:, idx])
        grams = 0.5 * (grams + grams.transpose(0, 2, 1))
        vals = np.linalg.eigvalsh(grams)
        lo = int(np.argmin(vals[:, 0]))
        hi = int(np.argmax(vals[:, -1]))
        if vals[lo, 0] < best_min:
            best_min = float(vals[lo, 0])
            witness_min = batch[lo]
        if vals[hi, -1] > best_max:
            best_max = float(vals[hi, -1])
            witness_max = batch[hi]
    return best_min, best_max, witness_min, witness_max, total


def rip_constants(M, order: int, cap: int = DEFAULT_CAP) -> RipReport:
    """Exact restricted isometry extremes of M at the given support order.

    nu and mu are the smallest and largest squared singular values over
    all column submatrices with `order` columns; delta is the deviation
    of that eigenvalue range from 1.
    """
    M = as_matrix(M, "M")
    _check_order(order, M.shape[1])
    nu, mu, wmin, wmax, total = _gram_eig_extremes(M, M, order, cap)
    delta = max(1.0 - nu, mu - 1.0)
    return RipReport(
        order=int(order),
        nu=nu,
        mu=mu,
        delta=delta,
        witness_min=tuple(wmin),
        witness_max=tuple(wmax),
        supports_enumerated=total,
    )


def uprip_delta(aset, order: int, cap: int = DEFAULT_CAP) -> float:
    """Smallest delta bounding the restricted spectrum of the row-space
    projector M^T (M M^T)^{-1} M away from identity.

    The projector never exceeds 1 on any support, so only the lower
    extreme matters: delta = 1 - min_J lambda_min of its J-restriction.
    """
    _check_order(order, aset.n)
    W = aset.solve_gram(aset.M)
    nu, _, _, _, _ = _gram_eig_extremes(aset.M, W, order, cap)
    return min(max(1.0 - nu, 0.0), 1.0)


def check_strong_regularity(aset, order: int, cap: int = DEFAULT_CAP) -> StrongRegularityReport:
    """Whether every column submatrix of the given order has trivial kernel.

    Holds iff the smallest singular value over all supports exceeds
    SV_TOL times the largest singular value of M.
    """
    _check_order(order, aset.n)
    nu, _, wmin, _, _ = _gram_eig_extremes(aset.M, aset.M, order, cap)
    min_singular = math.sqrt(max(nu, 0.0))
    threshold = SV_TOL * float(aset.singular_values[0])
    return StrongRegularityReport(
        holds=bool(min_singular > threshold),
        worst_support=tuple(wmin),
        min_singular=min_singular,
    )


def _normalized_support(support, n: int) -> tuple:
    cleaned = list(support)
    for i in cleaned:
        if isinstance(i, bool) or not isinstance(i, (int, np.integer)):
            raise ValueError("support indices must be integers")
    idx = sorted({int(i) for i in cleaned})
    if idx and (idx[0] < 0 or idx[-1] >= n):
        raise ValueError(f"support indices must lie in [0, {n})")
    return tuple(idx)


def dr_fixed_point_set(aset, support) -> FixedPointSetDescription:
    """Decompose the fixed points of Douglas-Rachford restricted to one support.

    With A_J the coordinate subspace on J, the fixed-point set is
    (A_J intersect B) + (A_J-perp intersect B-perp): an anchor plus the
    span of the two returned orthonormal bases.
    """
    J = _normalized_support(support, aset.n)
    cols = aset.M[:, list(J)]
    if J:
        z = np.linalg.lstsq(cols, aset.p, rcond=None)[0]
    else:
        z = np.zeros(0)
    residual = float(np.linalg.norm(cols @ z - aset.p))
    if residual > aset.feas_tol * (1.0 + float(np.linalg.norm(aset.p))):
        raise EmptyIntersection(
            f"no point with support {J} satisfies the affine constraints "
            f"(residual {residual:.3e})"
        )
    anchor = np.zeros(aset.n)
    anchor[list(J)] = z

    # directions staying feasible and on the support: kernel of M_J
    inner = null_space(cols) if J else np.zeros((0, 0))
    basis_intersection = np.zeros((aset.n, inner.shape[1]))
    basis_intersection[list(J), :] = inner

    # rows of M combined along kernel directions of M_J^T land off J
    left_kernel = null_space(cols.T) if J else np.eye(aset.m)
    lifted = aset.M.T @ left_kernel
    if lifted.shape[1] == 0:
        basis_orthogonal = np.zeros((aset.n, 0))
    else:
        basis_orthogonal = orth(lifted)
    return FixedPointSetDescription(
        support=J,
        basis_intersection=basis_intersection,
        basis_orthogonal=basis_orthogonal,
        anchor=anchor,
    )


def _require_orthonormal(basis, name: str) -> np.ndarray:
    basis = np.asarray(basis, dtype=np.float64)
    if basis.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array of basis columns")
    if basis.shape[1] == 0:
        return basis
    gram = basis.T @ basis
    if np.max(np.abs(gram - np.eye(basis.shape[1]))) > ORTHONORMAL_TOL:
        raise ValueError(f"{name} columns are not orthonormal")
    return basis


def friedrichs_cosine(basis_a, basis_b) -> float:
    """Cosine of the Friedrichs angle between two subspaces.

    Largest singular value of the cross-Gram after removing singular
    values accounted for by the intersection; 0 by convention when
    nothing remains.
    """
    A = _require_orthonormal(basis_a, "basis_a")
    B = _require_orthonormal(basis_b, "basis_b")
    if A.shape[0] != B.shape[0]:
        raise ValueError("bases must live in the same ambient dimension")
    if A.shape[1] == 0 or B.shape[1] == 0:
        return 0.0
    sv = np.linalg.svd(A.T @ B, compute_uv=False)
    outside = sv[sv < 1.0 - INTERSECT_TOL]
    if outside.size == 0:
        return 0.0
    return float(min(max(outside[0], 0.0), 1.0))


def diagnostic_report(aset, order: int, cap: int = DEFAULT_CAP) -> dict:
    """JSON-ready summary combining all enumeration diagnostics."""
    rip = rip_constants(aset.M, order, cap)
    regularity = check_strong_regularity(aset, order, cap)
    return {
        "order": rip.order,
        "nu": rip.nu,
        "mu": rip.mu,
        "delta": rip.delta,
        "uprip_delta": uprip_delta(aset, order, cap),
        "strong_regularity": regularity.holds,
        "worst_support": [int(i) for i in regularity.worst_support],
        "supports_enumerated": rip.supports_enumerated,
    }
