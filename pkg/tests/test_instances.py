"""Instance generators: exact reproducibility and planted structure."""

import json

import numpy as np
import pytest

from spaf.instances import (
    GeneratorSpec,
    SplitMix64,
    ap_stuck_start,
    build,
    dr_cycle_start,
    perturb_start,
)
from spaf.instances import _trig_row
from spaf.problem import validate_problem
from spaf.projections import sparse_margin


class TestSplitMix64:
    def test_published_sequence_for_seed_zero(self):
        rng = SplitMix64(0)
        assert [rng.next_u64() for _ in range(3)] == [
            0xE220A8397B1DCDAF,
            0x6E789E6AA1B965F4,
            0x06C45D188009454F,
        ]

    def test_streams_are_deterministic(self):
        a, b = SplitMix64(987654321), SplitMix64(987654321)
        assert [a.next_u64() for _ in range(64)] == [b.next_u64() for _ in range(64)]

    def test_uniform_range(self):
        rng = SplitMix64(7)
        draws = [rng.uniform(-2.0, 3.0) for _ in range(1000)]
        assert all(-2.0 <= d < 3.0 for d in draws)
        assert min(draws) < -1.0 and max(draws) > 2.0

    def test_below_rejects_bias(self):
        rng = SplitMix64(11)
        draws = [rng.below(10) for _ in range(1000)]
        assert set(draws) == set(range(10))

    def test_subset_is_sorted_unique(self):
        rng = SplitMix64(13)
        for _ in range(50):
            sub = rng.subset(20, 5)
            assert sub == sorted(set(sub)) and len(sub) == 5


class TestFixedInstances:
    def test_hadamard_rows_orthonormal(self):
        prob = build(GeneratorSpec(kind="hadamard7x8"))
        M = prob.affine.M
        assert M.shape == (7, 8)
        assert np.max(np.abs(M @ M.T - np.eye(7))) <= 1e-14
        # distinct columns have inner product exactly +-1/8
        G = M.T @ M
        off = G[~np.eye(8, dtype=bool)]
        np.testing.assert_allclose(np.abs(off), 1.0 / 8.0, atol=1e-15)
        np.testing.assert_array_equal(prob.known_solution, [10.0] + [0.0] * 7)
        assert prob.s == 1
        assert validate_problem(prob) == []

    def test_pathological_instance(self):
        prob = build(GeneratorSpec(kind="pathological"))
        np.testing.assert_array_equal(
            prob.affine.M, [[1.0, -0.5, 0.0], [0.0, 0.5, -1.0]]
        )
        np.testing.assert_array_equal(prob.affine.p, [-5.0, 5.0])
        np.testing.assert_array_equal(prob.known_solution, [0.0, 10.0, 0.0])
        # the affine set runs along (1, 2, 1)
        np.testing.assert_allclose(
            prob.affine.M @ np.array([1.0, 2.0, 1.0]), [0.0, 0.0], atol=1e-15
        )

    def test_fixed_dims_must_match_if_given(self):
        with pytest.raises(ValueError):
            build(GeneratorSpec(kind="hadamard7x8", n=9))

    def test_starting_points(self):
        np.testing.assert_array_equal(ap_stuck_start(), [-4.0, 0.0, 0.0])
        start = dr_cycle_start()
        np.testing.assert_allclose(start, [0.0, -2.5, -5.0], atol=1e-12)
        assert start[0] != 0.0  # the first coordinate is tiny but nonzero


class TestGeneratedFamilies:
    @pytest.mark.parametrize("kind", ["gaussian", "row_orthonormal", "fourier_like"])
    def test_planted_solution(self, kind):
        spec = GeneratorSpec(kind=kind, m=10, n=24, s=3, seed=42)
        prob = build(spec)
        assert prob.affine.M.shape == (10, 24)
        sol = prob.known_solution
        assert np.count_nonzero(sol) == 3
        magnitudes = np.abs(sol[sol != 0.0])
        assert np.all((magnitudes >= 1.0) & (magnitudes < 10.0))
        assert prob.affine.residual(sol) <= 1e-9 * (1.0 + np.linalg.norm(prob.affine.p))
        assert validate_problem(prob) == []

    @pytest.mark.parametrize("kind", ["gaussian", "row_orthonormal", "fourier_like"])
    def test_same_seed_bit_identical(self, kind):
        spec = GeneratorSpec(kind=kind, m=6, n=16, s=2, seed=123)
        a, b = build(spec), build(spec)
        assert np.array_equal(a.affine.M, b.affine.M)
        assert np.array_equal(a.affine.p, b.affine.p)
        assert np.array_equal(a.known_solution, b.known_solution)

    def test_different_seeds_differ(self):
        a = build(GeneratorSpec(kind="gaussian", m=4, n=9, s=2, seed=1))
        b = build(GeneratorSpec(kind="gaussian", m=4, n=9, s=2, seed=2))
        assert not np.array_equal(a.affine.M, b.affine.M)

    @pytest.mark.parametrize("kind", ["row_orthonormal", "fourier_like"])
    def test_rows_orthonormal_within_tolerance(self, kind):
        for seed in range(5):
            prob = build(GeneratorSpec(kind=kind, m=8, n=32, s=2, seed=seed))
            M = prob.affine.M
            assert np.max(np.abs(M @ M.T - np.eye(8))) <= 1e-12

    def test_trig_basis_is_orthonormal(self):
        for n in (6, 7, 8, 9):
            basis = np.vstack([_trig_row(n, r) for r in range(n)])
            assert np.max(np.abs(basis @ basis.T - np.eye(n))) <= 1e-12

    def test_solution_scale(self):
        prob = build(GeneratorSpec(kind="gaussian", m=8, n=20, s=4, seed=3, solution_scale=100.0))
        magnitudes = np.abs(prob.known_solution[prob.known_solution != 0.0])
        assert np.all((magnitudes >= 1.0) & (magnitudes < 100.0))

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            build(GeneratorSpec(kind="gaussian", m=5, n=5, s=1, seed=0))
        with pytest.raises(ValueError):
            build(GeneratorSpec(kind="gaussian", n=5, s=1, seed=0))
        with pytest.raises(ValueError):
            build(GeneratorSpec(kind="gaussian", m=2, n=5, s=0, seed=0))
        with pytest.raises(ValueError):
            build(GeneratorSpec(kind="no_such_kind"))
        with pytest.raises(ValueError):
            build(GeneratorSpec(kind="gaussian", m=2, n=5, s=1, seed=0, solution_scale=1.0))

    def test_s_at_least_m_is_flagged(self):
        with pytest.warns(UserWarning):
            build(GeneratorSpec(kind="gaussian", m=3, n=8, s=3, seed=0))

    def test_spec_json_round_trip(self):
        spec = GeneratorSpec(kind="fourier_like", m=16, n=128, s=3, seed=77, solution_scale=5.0)
        again = GeneratorSpec.from_json(spec.to_json())
        assert again == spec
        assert json.loads(spec.to_json())["kind"] == "fourier_like"
        with pytest.raises(ValueError):
            GeneratorSpec.from_json('{"kind": "gaussian", "bogus": 1}')


class TestPerturbStart:
    def problem(self):
        return build(GeneratorSpec(kind="hadamard7x8"))

    def test_flag_tracks_local_ball(self):
        prob = self.problem()
        margin = sparse_margin(prob.known_solution)
        assert perturb_start(prob, 0.49 * margin, seed=1).in_local_ball
        assert not perturb_start(prob, 0.51 * margin, seed=1).in_local_ball

    def test_offset_within_radius_and_deterministic(self):
        prob = self.problem()
        a = perturb_start(prob, 2.5, seed=9)
        b = perturb_start(prob, 2.5, seed=9)
        assert np.array_equal(a.point, b.point)
        assert np.max(np.abs(a.point - prob.known_solution)) < 2.5

    def test_tiny_radius_is_nearly_exact(self):
        prob = self.problem()
        start = perturb_start(prob, 1e-300, seed=4)
        np.testing.assert_allclose(start.point, prob.known_solution, atol=1e-299)

    def test_errors(self):
        prob = self.problem()
        with pytest.raises(ValueError):
            perturb_start(prob, 0.0, seed=1)
        prob.known_solution = None
        with pytest.raises(ValueError):
            perturb_start(prob, 1.0, seed=1)
