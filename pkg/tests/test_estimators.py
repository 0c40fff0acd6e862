"""Estimator facade: sklearn conventions plus recovery behavior."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from spaf.estimators import AlternatingProjections, DouglasRachford, ProjectedGradient
from spaf.instances import GeneratorSpec, build, perturb_start
from spaf.problem import ValidationError

ALL = [AlternatingProjections, DouglasRachford, ProjectedGradient]


def hadamard():
    return build(GeneratorSpec(kind="hadamard7x8"))


@pytest.mark.parametrize("cls", ALL)
class TestSklearnProtocol:
    def test_get_set_params_round_trip(self, cls):
        est = cls(s=3, max_iterations=50)
        params = est.get_params()
        assert params["s"] == 3
        assert params["max_iterations"] == 50
        est.set_params(gap_tol=1e-6)
        assert est.get_params()["gap_tol"] == 1e-6

    def test_clone_preserves_params(self, cls):
        est = cls(s=2, store_iterates=True)
        twin = clone(est)
        assert twin.get_params() == est.get_params()

    def test_predict_before_fit_raises(self, cls):
        with pytest.raises(NotFittedError):
            cls().predict(np.eye(3))

    def test_fit_recovers_planted_solution(self, cls):
        prob = hadamard()
        est = cls(s=1).fit(prob.affine.M, prob.affine.p)
        assert est.converged_
        assert est.termination_ == "converged"
        assert np.linalg.norm(est.coef_ - prob.known_solution) <= 1e-6
        assert np.count_nonzero(est.coef_) <= 1
        assert est.n_iter_ == est.trace_.iterations
        assert est.n_features_in_ == 8

    def test_predict_applies_sensing_rows(self, cls):
        prob = hadamard()
        est = cls(s=1).fit(prob.affine.M, prob.affine.p)
        np.testing.assert_allclose(est.predict(prob.affine.M), prob.affine.p, atol=1e-8)
        with pytest.raises(ValueError):
            est.predict(np.eye(5))

    def test_invalid_problem_raises_at_fit(self, cls):
        M = np.array([[1.0, 0.0], [1.0, 0.0]])
        with pytest.raises(ValidationError):
            cls(s=1).fit(M, [1.0, 1.0])
        prob = hadamard()
        with pytest.raises(ValidationError):
            cls(s=99).fit(prob.affine.M, prob.affine.p)


class TestSolverSpecifics:
    def test_fit_accepts_custom_start(self):
        prob = hadamard()
        start = perturb_start(prob, 1.0, seed=4).point
        est = AlternatingProjections(s=1, store_iterates=True)
        est.fit(prob.affine.M, prob.affine.p, x0=start)
        np.testing.assert_array_equal(est.trace_.iterates[0], start)

    def test_dr_coef_is_sparse_projection_of_shadow(self):
        prob = hadamard()
        est = DouglasRachford(s=1).fit(prob.affine.M, prob.affine.p)
        assert np.count_nonzero(est.coef_) <= 1
        shadow = est.trace_.final_shadow
        keep = np.argmax(np.abs(shadow))
        assert est.coef_[keep] == shadow[keep]

    def test_pg_tau_is_a_tunable_param(self):
        prob = hadamard()
        est = ProjectedGradient(s=1, tau=1.3, store_iterates=True)
        assert clone(est).get_params()["tau"] == 1.3
        est.fit(prob.affine.M, prob.affine.p, x0=np.ones(8))
        other = ProjectedGradient(s=1, tau=1.0, store_iterates=True)
        other.fit(prob.affine.M, prob.affine.p, x0=np.ones(8))
        assert np.linalg.norm(est.trace_.iterates[1] - other.trace_.iterates[1]) > 1e-12

    def test_nonconvergent_run_reports_termination(self):
        prob = build(GeneratorSpec(kind="pathological"))
        est = AlternatingProjections(s=1, max_iterations=200)
        est.fit(prob.affine.M, prob.affine.p, x0=np.array([-4.0, 0.0, 0.0]))
        assert not est.converged_
        assert est.termination_ == "cycle_detected"
