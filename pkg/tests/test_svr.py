import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quadsvr.distribution import AlphaInterval, EmpiricalSample, QuantileInterval, cvar, vapnik_error
from quadsvr.qp import solve_qp
from quadsvr.svr import (
    Dataset,
    Formulation,
    KernelSpec,
    SvrConfig,
    SvrModel,
    alpha_from_eps,
    build_deviation_qp,
    build_dual_qp,
    build_eps_primal_qp,
    build_nu_primal_qp,
    c_from_lambda,
    eps_from_alpha,
    intercept_from_statistic,
    lambda_from_c,
    predict,
    recover_primal_from_dual,
    train,
)

from oracles import grid_eps_objective, random_dataset

FIVE = Dataset(np.array([0.0, 0.25, 0.5, 0.75, 1.0])[:, None], [0.1, 0.6, 0.4, 1.2, 0.9])
THREE = Dataset(np.array([[0.0], [1.0], [2.0]]), [0.5, 1.0, 2.5])
CONST = Dataset(np.array([[0.0], [1.0], [2.0], [3.0]]), [1.5, 1.5, 1.5, 1.5])


def residual_model(values):
    """Bare model carrying a given residual vector."""
    s = EmpiricalSample(values)
    return SvrModel(Formulation.NU_PRIMAL, 0.0, s, s, QuantileInterval(0, 0),
                    AlphaInterval(0, 0), 0.0, weights=np.zeros(1))


def nu_objective(d, w, b, alpha, lam):
    z = d.targets - d.features @ w - b
    return (1 - alpha) * cvar(EmpiricalSample(np.abs(z)), alpha) + 0.5 * lam * float(w @ w)


class TestDataset:
    def test_validation(self):
        with pytest.raises(ValueError):
            Dataset([[1.0]], [1.0])
        with pytest.raises(ValueError):
            Dataset([[1.0], [np.inf]], [1.0, 2.0])
        with pytest.raises(ValueError):
            Dataset([[1.0], [2.0]], [1.0, 2.0, 3.0])

    def test_csv_round_trip(self, tmp_path):
        X, y = random_dataset(0, 7, 2)
        d = Dataset(X, y)
        d.to_csv(tmp_path / "d.csv")
        e = Dataset.from_csv(tmp_path / "d.csv")
        assert (tmp_path / "d.csv").read_text().splitlines()[0] == "x1,x2,y"
        assert np.array_equal(d.features, e.features) and np.array_equal(d.targets, e.targets)
        assert d.fingerprint() == e.fingerprint()


class TestKernel:
    @pytest.mark.parametrize("text", ["linear", "rbf:0.5", "poly:3,1.0"])
    def test_parse_round_trip(self, text):
        assert str(KernelSpec.parse(text)) == text

    @pytest.mark.parametrize("text", ["rbf:0", "rbf:-1", "poly:0,1", "cosine"])
    def test_rejects(self, text):
        with pytest.raises(ValueError):
            KernelSpec.parse(text)

    def test_values(self):
        x, z = np.array([[1.0, 2.0]]), np.array([[0.0, 1.0]])
        assert KernelSpec()(x, z)[0, 0] == 2.0
        assert KernelSpec("rbf", gamma=0.5)(x, z)[0, 0] == pytest.approx(np.exp(-1.0))
        assert KernelSpec("poly", degree=2, offset=1.0)(x, z)[0, 0] == 9.0

    def test_gram_psd_and_symmetric(self):
        X, _ = random_dataset(1, 30, 2)
        K = KernelSpec("rbf", gamma=2.0).gram(X)
        assert np.array_equal(K, K.T)
        assert np.linalg.eigvalsh(K).min() >= 0

    def test_gram_rejects_indefinite(self):
        X, _ = random_dataset(2, 10, 1)
        with pytest.raises(ValueError):
            KernelSpec("poly", degree=1, offset=-5.0).gram(X)


class TestScaling:
    def test_maps(self):
        assert lambda_from_c(1.0, 1000) == pytest.approx(1e-3)
        assert lambda_from_c(2.0, 10, "prop") == 0.5
        assert c_from_lambda(lambda_from_c(3.0, 50), 50) == pytest.approx(3.0)

    def test_config_invariants(self):
        with pytest.raises(ValueError):
            SvrConfig("nu-dual", eps=0.5, capC=1.0)
        with pytest.raises(ValueError):
            SvrConfig("eps-primal", alpha=0.5, capC=1.0)
        with pytest.raises(ValueError):
            SvrConfig("nu-primal", alpha=0.5, lam=1.0, capC=1.0)
        with pytest.raises(ValueError):
            SvrConfig("nu-primal", alpha=0.5, lam=1.0, kernel=KernelSpec("rbf", gamma=1.0))
        with pytest.raises(ValueError):
            SvrConfig("nu-primal", alpha=1.0, lam=1.0)


class TestEpsPrimal:
    def test_dimensions(self):
        qp = build_eps_primal_qp(THREE, 0.1, 1.0)
        assert qp.n == 8 and qp.n_ineq == 12

    @pytest.mark.parametrize("lam", [0.01, 1.0])
    def test_constant_targets(self, lam):
        m = train(CONST, SvrConfig("eps-primal", eps=0.0, lam=lam))
        assert m.weights[0] == pytest.approx(0.0, abs=1e-7)
        assert m.intercept == pytest.approx(1.5, abs=1e-7)
        assert m.objective == pytest.approx(0.0, abs=1e-8)

    def test_grid_oracle(self):
        m = train(FIVE, SvrConfig("eps-primal", eps=0.3, lam=0.1))
        best, _, _ = grid_eps_objective(FIVE.features[:, 0], FIVE.targets, 0.3, 0.1)
        assert abs(m.objective - best) <= 1e-3
        assert m.objective <= best + 1e-12

    def test_solver_objective_matches(self):
        m = train(FIVE, SvrConfig("eps-primal", eps=0.3, lam=0.1))
        assert abs(m.objective - m.solver_objective) <= 1e-8
        w, b = m.weights, m.intercept
        z = FIVE.targets - FIVE.features @ w - b
        assert m.objective == pytest.approx(vapnik_error(EmpiricalSample(z), 0.3) + 0.05 * w @ w)

    def test_rejects_wide_tube(self):
        with pytest.raises(ValueError):
            train(FIVE, SvrConfig("eps-primal", eps=0.6, lam=0.1))


class TestNuPrimal:
    def test_dimensions(self):
        assert build_nu_primal_qp(THREE, 0.5, 1.0).n == 9

    def test_objective_self_consistent(self):
        m = train(FIVE, SvrConfig("nu-primal", alpha=0.5, lam=0.1))
        assert m.objective == pytest.approx(nu_objective(FIVE, m.weights, m.intercept, 0.5, 0.1), abs=1e-12)
        assert abs(m.objective - m.solver_objective) <= 1e-8

    def test_alpha_zero_is_l1(self):
        nu = train(FIVE, SvrConfig("nu-primal", alpha=0.0, lam=0.1))
        l1 = train(FIVE, SvrConfig("eps-primal", eps=0.0, lam=0.1))
        assert nu.weights == pytest.approx(l1.weights, abs=1e-6)
        assert nu.objective == pytest.approx(l1.objective, abs=1e-8)

    @pytest.mark.parametrize("alpha", [0.0, 0.3, 0.5, 0.8])
    def test_tube_width_is_quantile(self, alpha):
        qp = build_nu_primal_qp(FIVE, alpha, 0.1)
        sol = solve_qp(qp)
        w, b, eps = sol.x[0], sol.x[1], sol.x[2]
        z = np.abs(FIVE.targets - FIVE.features[:, 0] * w - b)
        assert eps >= -1e-8
        from quadsvr.distribution import quantile_interval

        assert quantile_interval(EmpiricalSample(z), alpha).contains(eps, 1e-6)

    def test_intercept_is_optimal(self):
        m = train(FIVE, SvrConfig("nu-primal", alpha=0.5, lam=0.1))
        interval = m.intercept_set[0]
        base = nu_objective(FIVE, m.weights, m.intercept, 0.5, 0.1)
        for b in (interval.lo, interval.hi):
            assert nu_objective(FIVE, m.weights, b, 0.5, 0.1) <= base + 1e-9
        assert nu_objective(FIVE, m.weights, interval.lo - 1e-3, 0.5, 0.1) > base
        assert nu_objective(FIVE, m.weights, interval.hi + 1e-3, 0.5, 0.1) > base


class TestDeviation:
    def test_dimensions(self):
        assert build_deviation_qp(THREE, 0.5, 1.0).n == 9

    def test_constant(self):
        m = train(CONST, SvrConfig("nu-deviation", alpha=0.5, lam=0.1))
        assert m.weights[0] == pytest.approx(0.0, abs=1e-7)
        assert m.objective == pytest.approx(0.0, abs=1e-8)
        assert m.intercept == pytest.approx(1.5)

    def test_matches_nu_primal(self):
        a = train(FIVE, SvrConfig("nu-deviation", alpha=0.5, lam=0.1))
        b = train(FIVE, SvrConfig("nu-primal", alpha=0.5, lam=0.1))
        assert a.weights == pytest.approx(b.weights, abs=1e-4)
        assert abs(a.objective - a.solver_objective) <= 1e-8


class TestIntercept:
    def test_examples(self):
        assert intercept_from_statistic(EmpiricalSample([1, 2, 3, 4]), 0.5) == (QuantileInterval(2, 3), 2.5)
        assert intercept_from_statistic(EmpiricalSample([-2, -1, 1, 2]), 0.3)[1] == 0.0
        assert intercept_from_statistic(EmpiricalSample([5, 1, 3, 4]), 0.0) == (QuantileInterval(3, 4), 3.5)


class TestDual:
    def test_dimensions_and_gram(self):
        qp = build_dual_qp(THREE, 0.5, 1.0)
        assert qp.n == 6
        x = THREE.features[:, 0]
        assert np.allclose(qp.P[:3, :3], np.outer(x, x), atol=1e-9)

    @pytest.mark.parametrize("kernel", ["linear", "rbf:1.0"])
    def test_constant_targets(self, kernel):
        m = train(CONST, SvrConfig("nu-dual", alpha=0.5, capC=1.0, kernel=KernelSpec.parse(kernel)))
        assert np.abs(m.dual_coeffs).max() <= 1e-6
        assert m.objective == pytest.approx(0.0, abs=1e-8)

    def test_strong_duality_prop_scaling(self):
        C, alpha = 1.0, 0.5
        dual = train(FIVE, SvrConfig("nu-dual", alpha=alpha, capC=C, scaling="prop"))
        primal = train(FIVE, SvrConfig("nu-primal", alpha=alpha, lam=lambda_from_c(C, 5, "prop")))
        p_star = C * primal.objective
        assert abs(p_star - dual.objective) <= 1e-6
        assert dual.weights == pytest.approx(primal.weights, abs=1e-5)

    def test_case_study_scaling(self):
        dual = train(FIVE, SvrConfig("nu-dual", alpha=0.5, capC=1.0))
        primal = train(FIVE, SvrConfig("nu-primal", alpha=0.5, capC=1.0))
        assert dual.objective == pytest.approx(5 * primal.objective, abs=1e-7)


class TestRecover:
    def test_zero(self):
        m = recover_primal_from_dual(np.zeros(5), FIVE, KernelSpec(), 0.5)
        assert np.array_equal(m.weights, [0.0])
        assert m.intercept == intercept_from_statistic(EmpiricalSample(FIVE.targets), 0.5)[1]

    def test_weights_exact(self):
        mu = np.array([0.3, -0.1, 0.2, -0.6, 0.2])
        m = recover_primal_from_dual(mu, FIVE, KernelSpec(), 0.5)
        assert np.array_equal(m.weights, FIVE.features.T @ mu)

    def test_kernel_model_keeps_coefficients(self):
        mu = np.array([0.3, -0.1, 0.2, -0.6, 0.2])
        m = recover_primal_from_dual(mu, FIVE, KernelSpec("rbf", gamma=1.0), 0.5)
        assert m.weights is None and np.array_equal(m.dual_coeffs, mu)


class TestLink:
    def test_eps_from_alpha(self):
        assert eps_from_alpha(residual_model([-1.0, 1.0]), 0.0) == QuantileInterval(1, 1)
        assert eps_from_alpha(residual_model([0.0, 0.0, 0.0]), 0.7) == QuantileInterval(0, 0)

    def test_alpha_from_eps_edges(self):
        iv, mid = alpha_from_eps(residual_model([-1.0, 0.5, 2.0]), 3.0)
        assert (iv.lo, iv.hi, mid) == (1.0, 1.0, 1.0) and iv.degenerate
        iv, mid = alpha_from_eps(residual_model([-1.0, 0.5, 2.0]), 0.0)
        assert (iv.lo, iv.hi, mid) == (0.0, 0.0, 0.0) and iv.degenerate

    def test_alpha_from_eps_on_tube(self):
        iv, mid = alpha_from_eps(residual_model([-1.0, 0.5, 2.0, 0.2]), 1.0)
        assert (iv.lo, iv.hi) == (0.5, 0.75) and not iv.hi_inclusive and mid == 0.625

    def test_linked_intervals_populated(self):
        m = train(FIVE, SvrConfig("nu-primal", alpha=0.5, lam=0.1))
        assert m.linked_eps == eps_from_alpha(m, 0.5)
        e = train(FIVE, SvrConfig("eps-primal", eps=0.2, lam=0.1))
        assert e.linked_alpha == alpha_from_eps(e, 0.2)[0]
        assert np.array_equal(m.residuals.values, m.pre_intercept_residuals.values - m.intercept)


class TestPredict:
    def test_zero_model(self):
        m = recover_primal_from_dual(np.zeros(5), FIVE, KernelSpec(), 0.5)
        assert predict(m, [0.7]) == m.intercept

    def test_linear(self):
        m = dataclasses.replace(residual_model([0.0, 0.0]), weights=np.array([2.0]), intercept=1.0)
        assert predict(m, [3.0]) == 7.0
        with pytest.raises(ValueError):
            predict(m, [1.0, 2.0])

    @given(st.integers(0, 1000))
    def test_linear_kernel_identity(self, seed):
        rng = np.random.default_rng(seed)
        X, y = random_dataset(seed, 8, 2)
        d = Dataset(X, y)
        mu = rng.normal(size=8)
        lin = recover_primal_from_dual(mu, d, KernelSpec(), 0.5)
        ker = dataclasses.replace(lin, weights=None, dual_coeffs=mu, support=d.features)
        xq = rng.normal(size=2)
        assert predict(ker, xq, d, KernelSpec()) == pytest.approx(predict(lin, xq), abs=1e-12)


def _odd_dataset(seed, l, n):
    X, y = random_dataset(seed, l, n)
    return Dataset(X, y)


class TestCrossFormulation:
    @given(st.integers(0, 10_000), st.sampled_from([21, 41, 61]), st.integers(1, 2),
           st.sampled_from([0.25, 0.5, 0.75]))
    def test_agreement(self, seed, l, n, alpha):
        d = _odd_dataset(seed, l, n)
        C = 1.0
        nu = train(d, SvrConfig("nu-primal", alpha=alpha, capC=C))
        dev = train(d, SvrConfig("nu-deviation", alpha=alpha, capC=C))
        dual = train(d, SvrConfig("nu-dual", alpha=alpha, capC=C))
        for other in (dev, dual):
            assert np.max(np.abs(other.weights - nu.weights)) <= 1e-3
            assert abs(other.intercept - nu.intercept) <= 1e-3
        assert abs(dev.objective - nu.objective) <= 1e-6 * max(1.0, abs(nu.objective))
        assert abs(dual.objective * nu.lam - nu.objective) <= 1e-6 * max(1.0, abs(nu.objective))

    @given(st.integers(0, 10_000), st.sampled_from([21, 41, 61]), st.sampled_from([0.25, 0.5, 0.75]))
    def test_round_trip(self, seed, l, alpha):
        d = _odd_dataset(seed, l, 1)
        nu = train(d, SvrConfig("nu-primal", alpha=alpha, capC=1.0))
        eps = eps_from_alpha(nu, alpha).midpoint
        em = train(d, SvrConfig("eps-primal", eps=eps, capC=1.0))
        assert np.max(np.abs(em.weights - nu.weights)) <= 1e-3
        assert abs(em.intercept - nu.intercept) <= 1e-3
        iv, _ = alpha_from_eps(em, eps)
        assert iv.lo - 1e-12 <= alpha <= iv.hi + 1e-12

    @given(st.integers(0, 10_000), st.integers(5, 40), st.integers(1, 3), st.sampled_from([0.0, 0.3, 0.6, 0.9]))
    def test_strong_duality(self, seed, l, n, alpha):
        d = _odd_dataset(seed, l, n)
        C = 2.0
        dual = train(d, SvrConfig("nu-dual", alpha=alpha, capC=C, scaling="prop"))
        primal = train(d, SvrConfig("nu-primal", alpha=alpha, capC=C, scaling="prop"))
        p_star = C * primal.objective
        assert p_star - dual.objective <= 1e-6 * (1 + abs(p_star))
        assert dual.objective - p_star <= 1e-6 * (1 + abs(p_star))

    def test_nu_property(self):
        from quadsvr.casestudy import simulate

        d = simulate(200, 5)
        alpha, C = 0.6, 1.0
        dual = train(d, SvrConfig("nu-dual", alpha=alpha, capC=C))
        nu, l = 1 - alpha, d.l
        at_bound = np.mean(np.abs(np.abs(dual.dual_coeffs) - C) <= 1e-6)
        eps = dual.linked_eps.midpoint
        outside = np.mean(np.abs(dual.residuals.values) > eps + 1e-9)
        assert at_bound <= nu + 2 / l
        assert outside <= nu + 2 / l

    @given(st.integers(0, 10_000))
    def test_rbf_dual_trains(self, seed):
        d = _odd_dataset(seed, 25, 2)
        m = train(d, SvrConfig("nu-dual", alpha=0.5, capC=1.0, kernel=KernelSpec("rbf", gamma=1.0)))
        mu = m.dual_coeffs
        assert abs(mu.sum()) <= 1e-7
        assert np.abs(mu).max() <= 1.0 + 1e-7
        assert np.abs(mu).sum() <= 25 * 0.5 + 1e-6
        fitted = np.array([predict(m, x) for x in d.features])
        assert np.allclose(d.targets - fitted, m.residuals.values, atol=1e-10)
