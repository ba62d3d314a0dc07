import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from quadsvr.qp import ConvexQp, QpSettings, QpSolution, QpStatus, kkt_residual, solve_qp


def random_qp(seed, n=5, m=8, p=2, sparse=False):
    """Strictly convex QP with a known strictly feasible point."""
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(n, n))
    P = M.T @ M + 0.1 * np.eye(n)
    x0 = rng.normal(size=n)
    G = rng.normal(size=(m, n))
    h = G @ x0 + rng.uniform(0.1, 1.0, size=m)
    A = rng.normal(size=(p, n)) if p else None
    b = A @ x0 if p else None
    c = rng.normal(size=n)
    return ConvexQp(sp.csc_matrix(P) if sparse else P, c, A=A, b=b, G=G, h=h)


def dual_value(qp, sol):
    """Lagrangian dual function for a strictly convex P."""
    P = qp.P.toarray() if sp.issparse(qp.P) else qp.P
    r = qp.c + qp.A.T @ sol.eq_duals + qp.G.T @ sol.ineq_duals
    return float(-0.5 * r @ np.linalg.solve(P, r) - qp.b @ sol.eq_duals
                 - qp.h @ sol.ineq_duals + qp.constant)


class TestConstruction:
    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="symmetric"):
            ConvexQp([[1.0, 1.0], [0.0, 1.0]], [0, 0])

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError, match="semidefinite"):
            ConvexQp([[1.0, 0.0], [0.0, -1e-6]], [0, 0])

    def test_accepts_round_off(self):
        ConvexQp([[1.0, 0.0], [0.0, -1e-10]], [0, 0])

    def test_rejects_bad_dimensions(self):
        with pytest.raises(ValueError):
            ConvexQp(np.eye(2), [0, 0], G=np.ones((3, 3)), h=np.ones(3))
        with pytest.raises(ValueError):
            ConvexQp(np.eye(2), [0, 0, 0])

    def test_dump(self, tmp_path):
        qp = ConvexQp(np.eye(2), [1, 2], A=[[1, 1]], b=[1], variable_names=["u", "v"])
        path = tmp_path / "qp.txt"
        qp.dump(path)
        text = path.read_text()
        assert "# variables u v" in text and "# P 2 2" in text and "# G 0 2" in text


class TestSolveExamples:
    def test_bound(self):
        sol = solve_qp(ConvexQp([[1.0]], [0.0], G=[[-1.0]], h=[-1.0]))
        assert sol.status is QpStatus.OPTIMAL
        assert sol.x[0] == pytest.approx(1.0, abs=1e-8)
        assert sol.ineq_duals[0] == pytest.approx(1.0, abs=1e-8)

    def test_equality(self):
        sol = solve_qp(ConvexQp(2 * np.eye(2), [0, 0], A=[[1, 1]], b=[1]))
        assert sol.x == pytest.approx([0.5, 0.5], abs=1e-10)

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("sparse", [False, True])
    def test_box_projection(self, seed, sparse):
        c = np.random.default_rng(seed).normal(scale=2, size=5)
        P = sp.identity(5, format="csc") if sparse else np.eye(5)
        qp = ConvexQp(P, c, G=np.vstack([np.eye(5), -np.eye(5)]), h=np.ones(10))
        sol = solve_qp(qp)
        assert sol.optimal and sol.kkt_residual <= 1e-8
        assert sol.x == pytest.approx(np.clip(-c, -1, 1), abs=1e-7)

    def test_lp(self):
        qp = ConvexQp(sp.csc_matrix((3, 3)), [1.0, 2.0, 3.0], A=[[1, 1, 1]], b=[1],
                      G=-np.eye(3), h=np.zeros(3))
        sol = solve_qp(qp)
        assert sol.x == pytest.approx([1, 0, 0], abs=1e-7)
        assert sol.objective == pytest.approx(1.0, abs=1e-9)

    def test_infeasible(self):
        qp = ConvexQp(np.eye(1), [0.0], G=[[1.0], [-1.0]], h=[-1.0, -1.0])
        assert solve_qp(qp).status is QpStatus.INFEASIBLE

    def test_max_iterations_keeps_best_iterate(self):
        qp = random_qp(3)
        sol = solve_qp(qp, QpSettings(max_iterations=1))
        assert sol.status is QpStatus.MAX_ITERATIONS
        assert np.all(np.isfinite(sol.x))
        assert sol.kkt_residual == kkt_residual(qp, sol)


class TestKktResidual:
    def test_hand_built_optimum(self):
        qp = ConvexQp([[1.0]], [0.0], G=[[-1.0]], h=[-1.0])
        sol = QpSolution(np.array([1.0]), np.zeros(0), np.array([1.0]), 0.5, 0.0, QpStatus.OPTIMAL)
        assert kkt_residual(qp, sol) <= 1e-12

    def test_perturbation_detected(self):
        qp = ConvexQp([[1.0]], [0.0], G=[[-1.0]], h=[-1.0])
        sol = QpSolution(np.array([1.001]), np.zeros(0), np.array([1.0]), 0.5, 0.0, QpStatus.OPTIMAL)
        assert kkt_residual(qp, sol) >= 1e-4

    @pytest.mark.parametrize("seed", range(5))
    def test_recomputes_reported_value(self, seed):
        qp = random_qp(seed)
        sol = solve_qp(qp)
        assert abs(kkt_residual(qp, sol) - sol.kkt_residual) <= 1e-12


class TestProperties:
    @given(st.integers(0, 10_000))
    def test_optimal_and_weak_duality(self, seed):
        qp = random_qp(seed)
        sol = solve_qp(qp)
        assert sol.status is QpStatus.OPTIMAL
        assert sol.kkt_residual <= 1e-8
        assert np.all(sol.ineq_duals >= -1e-9)
        assert sol.objective >= dual_value(qp, sol) - 1e-7

    @given(st.integers(0, 10_000))
    def test_deterministic(self, seed):
        a, b = solve_qp(random_qp(seed)), solve_qp(random_qp(seed))
        assert np.array_equal(a.x, b.x) and np.array_equal(a.ineq_duals, b.ineq_duals)

    @given(st.integers(0, 10_000))
    def test_permuted_constraints(self, seed):
        qp = random_qp(seed)
        perm = np.random.default_rng(seed + 1).permutation(qp.n_ineq)
        G = qp.G.toarray()[perm]
        other = ConvexQp(qp.P, qp.c, A=qp.A.toarray(), b=qp.b, G=G, h=qp.h[perm])
        a, b = solve_qp(qp), solve_qp(other)
        assert np.max(np.abs(a.x - b.x)) <= 1e-10
        assert np.max(np.abs(a.ineq_duals[perm] - b.ineq_duals)) <= 1e-7

    @given(st.integers(0, 10_000), st.floats(0.1, 10.0))
    def test_objective_scaling(self, seed, lam):
        qp = random_qp(seed)
        scaled = ConvexQp(lam * qp.P, lam * qp.c, A=qp.A.toarray(), b=qp.b, G=qp.G.toarray(), h=qp.h)
        a, b = solve_qp(qp), solve_qp(scaled)
        assert np.max(np.abs(a.x - b.x)) <= 1e-6
        assert np.max(np.abs(lam * a.ineq_duals - b.ineq_duals)) <= 1e-6 * lam

    @given(st.integers(0, 10_000))
    def test_sparse_and_dense_agree(self, seed):
        a, b = solve_qp(random_qp(seed)), solve_qp(random_qp(seed, sparse=True))
        assert np.max(np.abs(a.x - b.x)) <= 1e-7
