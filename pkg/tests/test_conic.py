import math

import numpy as np
import pytest

from ieprelax import symlin
from ieprelax.conic import (Block, ConeSpec, ConicProgram, Workspace,
                            dump_program, free, psd, solve, verify_farkas,
                            OPTIMAL, PRIMAL_INFEASIBLE, DUAL_INFEASIBLE)

PSD1 = ConeSpec((psd(1),))


def one_dim(b):
    return ConicProgram(PSD1, np.array([[1.0]]), np.array([b]), np.array([0.0]))


class TestToyPrograms:
    def test_1d_feasible(self):
        sol = solve(one_dim(1.0))
        assert sol.status == OPTIMAL
        assert abs(sol.x[0] - 1.0) <= 1e-6

    def test_1d_infeasible_with_certificate(self):
        sol = solve(one_dim(-1.0))
        assert sol.status == PRIMAL_INFEASIBLE
        y = sol.certificate
        assert y is not None
        assert abs(np.array([-1.0]) @ y + 1.0) <= 1e-9     # b'y == -1
        assert y[0] >= -1e-9                                # A'y = y in PSD(1)*

    def test_2x2_fixed_trace_optimum(self):
        # minimize -tr(X) over PSD(2) with tr(X) = 1 and X12 = 0.4; the trace
        # is pinned so the optimum is -1, attained on a segment of X11 values
        cone = ConeSpec((psd(2),))
        A = np.array([[1.0, 0.0, 1.0],
                      [0.0, 1.0 / math.sqrt(2.0), 0.0]])
        b = np.array([1.0, 0.4])
        c = -symlin.svec(np.eye(2))
        sol = solve(ConicProgram(cone, A, b, c))
        assert sol.status == OPTIMAL
        assert abs(sol.objective + 1.0) <= 1e-6
        X = symlin.smat(sol.x)
        assert abs(X[0, 1] - 0.4) <= 1e-6
        w, _ = symlin.eigh(X)
        assert w[0] >= -1e-8

    def test_unbounded_detected(self):
        # minimize -x over PSD(1) with a vacuous free-block row
        cone = ConeSpec((psd(1), free(1)))
        A = np.array([[0.0, 1.0]])
        sol = solve(ConicProgram(cone, A, np.array([0.0]), np.array([-1.0, 0.0])))
        assert sol.status == DUAL_INFEASIBLE

    def test_free_block_elimination(self):
        # x_psd + f = 2 with objective on x_psd only; optimum picks x_psd = 0
        cone = ConeSpec((psd(1), free(1)))
        A = np.array([[1.0, 1.0]])
        sol = solve(ConicProgram(cone, A, np.array([2.0]), np.array([1.0, 0.0])))
        assert sol.status == OPTIMAL
        assert abs(sol.objective) <= 1e-6

    def test_malformed_dimensions_rejected(self):
        with pytest.raises(ValueError):
            ConicProgram(PSD1, np.array([[1.0, 2.0]]), np.array([1.0]), np.array([0.0]))


class TestVerifyFarkas:
    def test_valid_certificate(self):
        p = one_dim(-1.0)
        ok, rep = verify_farkas(p, np.array([1.0]), 1e-9)
        assert ok and rep["dual_dist"] <= 1e-12

    def test_scaled_certificate_renormalized(self):
        p = one_dim(-1.0)
        ok, _ = verify_farkas(p, np.array([10.0]), 1e-9)
        assert ok

    def test_zero_vector_rejected(self):
        p = one_dim(-1.0)
        ok, _ = verify_farkas(p, np.array([0.0]), 1e-9)
        assert not ok

    def test_wrong_sign_rejected(self):
        p = one_dim(1.0)
        ok, _ = verify_farkas(p, np.array([1.0]), 1e-9)
        assert not ok


class TestConeGeometry:
    def test_moreau_decomposition_on_psd_blocks(self):
        rng = np.random.default_rng(41)
        cone = ConeSpec((psd(3), psd(5)))
        for _ in range(25):
            x = rng.uniform(-5, 5, cone.dim)
            d1 = cone.dist(x)
            d2 = cone.dist(-x)
            assert abs(d1**2 + d2**2 - x @ x) <= 1e-9 * max(1.0, x @ x)

    def test_projection_lands_in_cone(self):
        rng = np.random.default_rng(43)
        cone = ConeSpec((psd(4), free(3)))
        x = rng.uniform(-2, 2, cone.dim)
        px = cone.project(x)
        assert cone.dist(px) <= 1e-10
        assert np.array_equal(px[-3:], x[-3:])

    def test_dual_dist_zeroes_free_blocks(self):
        cone = ConeSpec((psd(2), free(2)))
        s = np.zeros(cone.dim)
        s[-1] = 3.0
        assert abs(cone.dual_dist(s) - 3.0) <= 1e-14

    def test_invalid_block(self):
        with pytest.raises(ValueError):
            Block("soc", 3)
        with pytest.raises(ValueError):
            Block("psd", 0)


class TestPreprocessing:
    def test_zero_row_with_nonzero_rhs_is_infeasible(self):
        cone = ConeSpec((psd(2),))
        A = np.zeros((1, 3))
        p = ConicProgram(cone, A, np.array([5.0]), np.zeros(3))
        sol = solve(p)
        assert sol.status == PRIMAL_INFEASIBLE
        ok, _ = verify_farkas(p, sol.certificate, 1e-9)
        assert ok

    def test_zero_row_with_zero_rhs_dropped(self):
        cone = ConeSpec((psd(1),))
        A = np.array([[0.0], [1.0]])
        sol = solve(ConicProgram(cone, A, np.array([0.0, 2.0]), np.array([0.0])))
        assert sol.status == OPTIMAL
        assert abs(sol.x[0] - 2.0) <= 1e-6

    def test_duplicate_rows_deduplicated(self):
        cone = ConeSpec((psd(1),))
        A = np.array([[1.0], [1.0], [1.0]])
        p = ConicProgram(cone, A, np.array([2.0, 2.0, 2.0]), np.array([0.0]))
        ws = Workspace(p)
        assert ws.m == 1
        sol = ws.solve()
        assert sol.status == OPTIMAL
        assert sol.y.shape == (3,)

    def test_inconsistent_duplicate_rows_certified(self):
        cone = ConeSpec((psd(1),))
        A = np.array([[1.0], [1.0]])
        p = ConicProgram(cone, A, np.array([1.0, 2.0]), np.array([0.0]))
        sol = solve(p)
        assert sol.status == PRIMAL_INFEASIBLE
        ok, _ = verify_farkas(p, sol.certificate, 1e-7)
        assert ok

    def test_rank_deficient_consistent_system(self):
        # second row is the doubled first row; consistent, still solvable
        cone = ConeSpec((psd(2),))
        r = symlin.svec(np.eye(2))
        A = np.vstack([r, 2 * r])
        p = ConicProgram(cone, A, np.array([1.0, 2.0]), np.zeros(3))
        sol = solve(p)
        assert sol.status == OPTIMAL


class TestDeterminismAndCaching:
    def test_bitwise_deterministic(self):
        rng = np.random.default_rng(47)
        cone = ConeSpec((psd(3),))
        A = rng.standard_normal((4, 6))
        b = A @ symlin.svec(np.eye(3))
        c = rng.standard_normal(6)
        p = ConicProgram(cone, A, b, c)
        s1, s2 = solve(p, seed=0), solve(p, seed=0)
        assert s1.status == s2.status
        assert s1.objective == s2.objective
        assert np.array_equal(s1.x, s2.x)

    def test_workspace_reuse_matches_one_shot(self):
        rng = np.random.default_rng(53)
        cone = ConeSpec((psd(3),))
        A = rng.standard_normal((4, 6))
        b = A @ symlin.svec(np.eye(3))
        p = ConicProgram(cone, A, b, np.zeros(6))
        ws = Workspace(p)
        for _ in range(3):
            # PSD objective matrix keeps the problem bounded below on the cone
            B = rng.standard_normal((3, 3))
            c = symlin.svec(B @ B.T)
            a = ws.solve(c=c)
            bsol = solve(p.with_objective(c))
            assert a.status == bsol.status == OPTIMAL
            assert abs(a.objective - bsol.objective) <= 1e-12

    def test_rhs_override(self):
        cone = ConeSpec((psd(1),))
        p = ConicProgram(cone, np.array([[1.0]]), np.array([1.0]), np.array([0.0]))
        ws = Workspace(p)
        sol = ws.solve(b=np.array([3.0]))
        assert sol.status == OPTIMAL and abs(sol.x[0] - 3.0) <= 1e-6
        sol2 = ws.solve(b=np.array([-2.0]))
        assert sol2.status == PRIMAL_INFEASIBLE

    def test_no_rows(self):
        cone = ConeSpec((psd(2),))
        p = ConicProgram(cone, np.zeros((0, 3)), np.zeros(0), np.zeros(3))
        sol = solve(p)
        assert sol.status == OPTIMAL

    def test_debug_dump(self, tmp_path):
        import json
        p = one_dim(1.0)
        path = tmp_path / "prog.json"
        dump_program(p, path)
        doc = json.loads(path.read_text())
        assert doc["cone"] == [{"type": "psd", "size": 1}]
        assert doc["A"] == [[1.0]] and doc["b"] == [1.0]
