"""Scikit-learn style estimators wrapping the feasibility solvers.

The sensing matrix plays the role of X and the measurement vector the
role of y; fitting recovers a sparse coefficient vector consistent with
the measurements.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .problem import AffineSet, FeasibilityProblem, SparsityConstraint
from .projections import canonical_support
from .solvers import (
    SolverConfig,
    run_alternating_projections,
    run_douglas_rachford,
    run_projected_gradient,
)
from .validation import as_matrix, as_vector


class _SparseRecoveryBase(BaseEstimator):
    """Shared fit/predict plumbing for the projection solvers.

    Parameters
    ----------
    s : int, default=1
        Maximum number of nonzeros allowed in the recovered vector.
    max_iterations : int, default=10000
        Iteration budget.
    gap_tol : float, default=1e-10
        Declare convergence once the constraint gap falls below this.
    step_tol : float, default=1e-14
        Declare a stall once the step length falls below this.
    cycle_detection : bool, default=True
        Detect short periodic orbits and stop early.
    cycle_window : int, default=8
        Longest cycle period searched for.
    store_iterates : bool, default=False
        Keep the full iterate sequence on the fitted trace.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
        Recovered sparse vector.
    n_iter_ : int
        Iterations performed.
    converged_ : bool
        Whether the gap tolerance was reached.
    termination_ : str
        Termination reason reported by the solver.
    trace_ : IterationTrace
        Full per-iteration record.
    problem_ : FeasibilityProblem
        The validated problem the solver ran on.
    """

    def __init__(
        self,
        s=1,
        max_iterations=10000,
        gap_tol=1e-10,
        step_tol=1e-14,
        cycle_detection=True,
        cycle_window=8,
        store_iterates=False,
    ):
        self.s = s
        self.max_iterations = max_iterations
        self.gap_tol = gap_tol
        self.step_tol = step_tol
        self.cycle_detection = cycle_detection
        self.cycle_window = cycle_window
        self.store_iterates = store_iterates

    def _config(self) -> SolverConfig:
        return SolverConfig(
            max_iterations=self.max_iterations,
            gap_tol=self.gap_tol,
            step_tol=self.step_tol,
            cycle_detection=self.cycle_detection,
            cycle_window=self.cycle_window,
            store_iterates=self.store_iterates,
        )

    def _solve(self, problem, x0, config):
        raise NotImplementedError

    def _extract_coef(self, trace):
        return trace.final_point.copy()

    def fit(self, X, y, x0=None):
        """Recover an s-sparse vector with X @ coef == y.

        Parameters
        ----------
        X : array-like of shape (n_measurements, n_features)
            Sensing matrix with full row rank.
        y : array-like of shape (n_measurements,)
            Measurement vector.
        x0 : array-like of shape (n_features,), optional
            Starting point; defaults to the origin.

        Returns
        -------
        self : object
        """
        X = as_matrix(X, "X")
        y = as_vector(y, length=X.shape[0], name="y")
        problem = FeasibilityProblem(
            affine=AffineSet(X, y),
            sparsity=SparsityConstraint(n=X.shape[1], s=self.s),
        )
        start = np.zeros(X.shape[1]) if x0 is None else as_vector(x0, X.shape[1], "x0")
        trace = self._solve(problem, start, self._config())
        self.problem_ = problem
        self.trace_ = trace
        self.coef_ = self._extract_coef(trace)
        self.n_iter_ = trace.iterations
        self.termination_ = trace.termination
        self.converged_ = trace.termination == "converged"
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        """Apply new sensing rows to the recovered vector.

        Parameters
        ----------
        X : array-like of shape (n_rows, n_features)

        Returns
        -------
        ndarray of shape (n_rows,)
        """
        check_is_fitted(self, "coef_")
        X = as_matrix(X, "X")
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} columns, expected {self.n_features_in_}"
            )
        return X @ self.coef_


class AlternatingProjections(_SparseRecoveryBase):
    """Alternate projections between the affine and sparsity constraints."""

    def _solve(self, problem, x0, config):
        return run_alternating_projections(problem, x0, config)


class DouglasRachford(_SparseRecoveryBase):
    """Averaged reflections; the coefficient is read off the final shadow."""

    def _solve(self, problem, x0, config):
        return run_douglas_rachford(problem, x0, config)

    def _extract_coef(self, trace):
        shadow = trace.final_shadow
        support, _, _ = canonical_support(shadow, self.s)
        coef = np.zeros_like(shadow)
        coef[list(support)] = shadow[list(support)]
        return coef


class ProjectedGradient(_SparseRecoveryBase):
    """Gradient step on the residual followed by a sparse projection.

    Parameters
    ----------
    tau : float, default=1.0
        Inverse step size; the gradient step is scaled by 1/tau.
    """

    def __init__(
        self,
        s=1,
        max_iterations=10000,
        gap_tol=1e-10,
        step_tol=1e-14,
        cycle_detection=True,
        cycle_window=8,
        store_iterates=False,
        tau=1.0,
    ):
        super().__init__(
            s=s,
            max_iterations=max_iterations,
            gap_tol=gap_tol,
            step_tol=step_tol,
            cycle_detection=cycle_detection,
            cycle_window=cycle_window,
            store_iterates=store_iterates,
        )
        self.tau = tau

    def _config(self) -> SolverConfig:
        config = super()._config()
        config.tau = self.tau
        return config

    def _solve(self, problem, x0, config):
        return run_projected_gradient(problem, x0, config)
