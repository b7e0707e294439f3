"""Assignment solver: brute-force oracle, duals, and invariances."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otmatch.assignment import available_backends
from otmatch.errors import DimensionError, NumericalError
from otmatch.ot import (
    Coupling,
    ProductionTech,
    assignment_map,
    build_surplus_matrix,
    check_coupling,
    normalize_duals,
    solve_assignment,
    wages_from_dual,
)


def brute_force_max(S):
    n = S.shape[0]
    best = -np.inf
    for perm in itertools.permutations(range(n)):
        best = max(best, S[np.arange(n), perm].sum())
    return best


class TestProductionTech:
    def test_diagonal_constructor(self):
        tech = ProductionTech.diagonal(0.5, 0.2, 1.7, -0.4)
        assert tech.alpha_cc == 0.5
        assert tech.alpha_mm == 0.2
        assert tech.delta == pytest.approx(0.4)
        assert tech.is_diagonal

    def test_singular_rejected(self):
        with pytest.raises(ValueError, match="singular"):
            ProductionTech(np.zeros((2, 2)), np.zeros(2))

    def test_nonsquare_rejected(self):
        with pytest.raises(DimensionError):
            ProductionTech(np.ones((2, 3)), np.zeros(2))

    def test_immutable(self):
        tech = ProductionTech.diagonal(1.0, 1.0)
        with pytest.raises(ValueError):
            tech.A[0, 0] = 2.0


class TestSurplus:
    def test_bilinear_values(self):
        tech = ProductionTech.diagonal(2.0, 3.0, 1.0, -1.0)
        X = np.array([[1.0, 2.0]])
        Y = np.array([[0.5, 0.25]])
        S = build_surplus_matrix(X, Y, tech).S
        # 2*1*0.5 + 3*2*0.25 + 1*1 + (-1)*2 = 1 + 1.5 - 1 = 1.5
        assert S[0, 0] == pytest.approx(1.5)

    def test_shape_mismatch(self):
        tech = ProductionTech.diagonal(1.0, 1.0)
        with pytest.raises(DimensionError):
            build_surplus_matrix(np.ones((3, 3)), np.ones((3, 2)), tech)


class TestSolveAssignment:
    def test_identity_on_diagonal_dominant(self):
        S = np.eye(4) * 10.0
        c = solve_assignment(S)
        assert np.array_equal(c.permutation, np.arange(4))
        assert c.total_surplus == pytest.approx(40.0)

    def test_matches_brute_force_random(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            n = rng.integers(2, 8)
            S = rng.normal(size=(n, n)) * rng.lognormal()
            c = solve_assignment(S)
            assert c.total_surplus == pytest.approx(brute_force_max(S), rel=1e-12, abs=1e-9)
            check_coupling(c, S)

    def test_backends_agree(self):
        backends = available_backends()
        if len(backends) < 2:
            pytest.skip("only one backend built")
        rng = np.random.default_rng(11)
        for _ in range(50):
            n = int(rng.integers(2, 40))
            cost = rng.normal(size=(n, n))
            outs = [backends[k](cost.copy()) for k in sorted(backends)]
            for perm, u, v in outs[1:]:
                assert np.array_equal(perm, outs[0][0])
                np.testing.assert_array_equal(u, outs[0][1])
                np.testing.assert_array_equal(v, outs[0][2])

    def test_shift_invariance_of_plan(self):
        rng = np.random.default_rng(3)
        S = rng.normal(size=(6, 6))
        c1 = solve_assignment(S)
        c2 = solve_assignment(S + 17.5)
        assert np.array_equal(c1.permutation, c2.permutation)

    def test_rejects_rectangular(self):
        with pytest.raises(DimensionError):
            solve_assignment(np.ones((3, 4)))

    def test_rejects_nan(self):
        S = np.ones((3, 3))
        S[1, 1] = np.nan
        with pytest.raises(ValueError):
            solve_assignment(S)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 7), st.integers(0, 10_000))
    def test_duality_property(self, n, seed):
        rng = np.random.default_rng(seed)
        S = rng.normal(size=(n, n)) * 3.0
        c = solve_assignment(S)
        slack = c.worker_dual[:, None] + c.firm_dual[None, :] - S
        assert slack.min() > -1e-8 * (1.0 + np.abs(S).max())
        assert c.worker_dual.sum() + c.firm_dual.sum() == pytest.approx(
            c.total_surplus, rel=1e-9, abs=1e-9
        )


class TestDuals:
    def _coupling(self):
        rng = np.random.default_rng(5)
        return solve_assignment(rng.normal(size=(8, 8))), None

    def test_zero_mean_normalization(self):
        c, _ = self._coupling()
        w = wages_from_dual(c, "zero_mean")
        assert np.mean(w) == pytest.approx(0.0, abs=1e-12)

    def test_anchor_normalization(self):
        c, _ = self._coupling()
        w = wages_from_dual(c, "anchor", anchor_index=3)
        assert w[3] == pytest.approx(0.0, abs=1e-12)

    def test_normalization_preserves_stability(self):
        rng = np.random.default_rng(9)
        S = rng.normal(size=(6, 6))
        c = normalize_duals(solve_assignment(S), "zero_mean")
        check_coupling(c, S)

    def test_unknown_normalization(self):
        c, _ = self._coupling()
        with pytest.raises(ValueError):
            wages_from_dual(c, "median")

    def test_anchor_out_of_range(self):
        c, _ = self._coupling()
        with pytest.raises(IndexError):
            wages_from_dual(c, "anchor", anchor_index=99)


class TestAssignmentMap:
    def test_permutes_partners(self):
        perm = np.array([2, 0, 1])
        c = Coupling(
            permutation=perm,
            worker_dual=np.zeros(3),
            firm_dual=np.zeros(3),
            total_surplus=0.0,
        )
        Y = np.arange(6.0).reshape(3, 2)
        np.testing.assert_array_equal(assignment_map(c, Y), Y[perm])

    def test_row_count_checked(self):
        c = solve_assignment(np.eye(3))
        with pytest.raises(DimensionError):
            assignment_map(c, np.ones((4, 2)))


class TestCheckCoupling:
    def test_detects_bad_duals(self):
        S = np.eye(3)
        c = solve_assignment(S)
        bad = Coupling(
            permutation=c.permutation,
            worker_dual=c.worker_dual + np.array([1.0, 0.0, 0.0]),
            firm_dual=c.firm_dual,
            total_surplus=c.total_surplus,
        )
        with pytest.raises(NumericalError):
            check_coupling(bad, S)

    def test_plan_is_permutation_matrix(self):
        c = solve_assignment(np.random.default_rng(1).normal(size=(5, 5)))
        P = c.plan()
        np.testing.assert_array_equal(P.sum(axis=0), np.ones(5))
        np.testing.assert_array_equal(P.sum(axis=1), np.ones(5))

    def test_csv_roundtrip(self, tmp_path):
        c = solve_assignment(np.random.default_rng(2).normal(size=(4, 4)))
        path = tmp_path / "coupling.csv"
        c.to_csv(path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "worker_index,job_index,wage_dual,profit_dual"
        for i, ln in enumerate(lines[1:]):
            wi, j, w, v = ln.split(",")
            assert int(wi) == i
            assert int(j) == c.permutation[i]
            assert float(w) == c.worker_dual[i]
            assert float(v) == c.firm_dual[int(j)]
