import numpy as np
import pytest
from sklearn.base import clone

from pmclstd.lstd import (
    LstdData,
    LstdOperatorData,
    LstdRegressor,
    PmcLstd,
    PmcSolverConfig,
    assemble_operator,
    check_convexity_condition,
    default_config,
    lstd_closed_form,
    pmc_lstd_solve,
    pmc_operator_T,
    solve_assembled,
)
from pmclstd.prox import SubspaceBasis, moreau_env_l1, pmc_penalty

from oracles import (
    cd_lasso,
    central_difference_gradient,
    inclusion_residual_penalized,
    restricted_least_squares,
)


def random_data(rng, m=60, n=10, gamma=0.9, phi_next_scale=0.3):
    phi = rng.standard_normal((m, n))
    phi_next = phi_next_scale * rng.standard_normal((m, n))
    payoffs = rng.standard_normal(m)
    return LstdData(phi, phi_next, payoffs, gamma)


def symmetric_data(rng, m=60, n=10, payoffs=None):
    """Instances with phi_next = 0, so the operator matrix is the PSD Gram."""
    phi = rng.standard_normal((m, n))
    if payoffs is None:
        payoffs = rng.standard_normal(m)
    return LstdData(phi, np.zeros((m, n)), payoffs, 0.5)


def fake_operator_data(eigvals, lambda_min_pos, spectral_norm=1.0):
    """Operator data with fabricated spectra for formula-level checks."""
    eigvals = np.asarray(eigvals, dtype=float)
    n = eigvals.shape[0]
    return LstdOperatorData(
        a_matrix=np.eye(n),
        b_vector=np.zeros(n),
        gram_eigvecs=np.eye(n),
        gram_eigvals=eigvals,
        lambda_min_pos=lambda_min_pos,
        spectral_norm=spectral_norm,
        rank=int(np.count_nonzero(eigvals > 0)),
    )


class TestLstdData:
    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            LstdData(np.ones((4, 3)), np.ones((4, 2)), np.ones(4), 0.9)
        with pytest.raises(ValueError):
            LstdData(np.ones((4, 3)), np.ones((4, 3)), np.ones(5), 0.9)

    def test_rejects_bad_gamma(self):
        for gamma in (0.0, 1.0, -0.5, 2.0):
            with pytest.raises(ValueError):
                LstdData(np.ones((2, 2)), np.ones((2, 2)), np.ones(2), gamma)

    def test_rejects_non_finite(self):
        phi = np.ones((2, 2))
        phi[0, 0] = np.nan
        with pytest.raises(ValueError):
            LstdData(phi, np.ones((2, 2)), np.ones(2), 0.9)


class TestAssembleOperator:
    def test_small_exact_values(self):
        data = LstdData(
            np.eye(2),
            np.array([[0.0, 1.0], [1.0, 0.0]]),
            np.array([1.0, 0.0]),
            0.5,
        )
        op = assemble_operator(data)
        np.testing.assert_allclose(op.a_matrix, [[1.0, -0.5], [-0.5, 1.0]])
        np.testing.assert_allclose(op.b_vector, [1.0, 0.0])

    def test_identity_gram(self):
        n = 5
        data = LstdData(np.eye(n), np.zeros((n, n)), np.ones(n), 0.7)
        op = assemble_operator(data)
        np.testing.assert_allclose(op.a_matrix, np.eye(n))
        np.testing.assert_allclose(op.gram_eigvals, np.ones(n))
        assert op.lambda_min_pos == pytest.approx(1.0)
        assert op.rank == n
        assert op.spectral_norm == pytest.approx(1.0)

    def test_eigendecomposition_reconstructs_gram(self):
        rng = np.random.default_rng(3)
        data = random_data(rng, m=40, n=12)
        op = assemble_operator(data)
        gram = data.phi.T @ data.phi
        recon = (op.gram_eigvecs * op.gram_eigvals) @ op.gram_eigvecs.T
        assert np.linalg.norm(recon - gram) <= 1e-8 * np.linalg.norm(gram)
        assert np.all(np.diff(op.gram_eigvals) <= 1e-12)

    def test_duplicated_columns_rank_and_lambda_min(self):
        rng = np.random.default_rng(8)
        phi = rng.standard_normal((50, 8))
        phi = np.hstack([phi, phi[:, :2]])  # two duplicated columns
        data = LstdData(phi, np.zeros_like(phi), rng.standard_normal(50), 0.9)
        op = assemble_operator(data)
        # SVD-based oracle for the smallest strictly positive eigenvalue
        singular = np.linalg.svd(phi, compute_uv=False)
        eigs = singular ** 2
        positive = eigs[eigs > phi.shape[1] * 1e-12 * eigs.max()]
        assert op.rank == len(positive)
        assert op.lambda_min_pos == pytest.approx(positive.min(), rel=1e-8)

    def test_spectral_norm_matches_svd(self):
        rng = np.random.default_rng(4)
        data = random_data(rng, m=80, n=25)
        op = assemble_operator(data)
        exact = np.linalg.norm(op.a_matrix, 2)
        assert op.spectral_norm == pytest.approx(exact, rel=1e-9)

    def test_degenerate_features_error(self):
        data = LstdData(np.zeros((4, 3)), np.zeros((4, 3)), np.zeros(4), 0.9)
        with pytest.raises(ValueError, match="degenerate"):
            assemble_operator(data)


class TestCheckConvexityCondition:
    def config(self, mu, tau, q=3):
        return PmcSolverConfig(
            mu=mu, tau=tau, q=q, alpha=0.4, epsilon=1.0 / 6.0, eta=1.0 / 6.0
        )

    def test_boundary_is_admissible(self):
        op = fake_operator_data([2.0, 1.0, 0.4, 0.0], lambda_min_pos=0.5)
        assert check_convexity_condition(self.config(1.0, 2.0), op) is None

    def test_violation_reports_admissible_ratio(self):
        op = fake_operator_data([2.0, 1.0, 0.4, 0.0], lambda_min_pos=0.5)
        msg = check_convexity_condition(self.config(1.0, 1.0), op)
        assert msg is not None and "(C-1)" in msg and "0.5" in msg

    def test_mu_zero_is_vacuous(self):
        op = fake_operator_data([2.0, 1.0, 0.4, 0.0], lambda_min_pos=0.5)
        assert check_convexity_condition(self.config(0.0, 5.0), op) is None

    def test_q_zero_is_vacuous(self):
        op = fake_operator_data([2.0, 1.0, 0.4, 0.0], lambda_min_pos=0.5)
        config = PmcSolverConfig(
            mu=10.0, tau=1.0, q=0, alpha=1.0 / 11.0,
            epsilon=1.0 / 6.0, eta=1.0 / 6.0,
        )
        assert check_convexity_condition(config, op) is None

    def test_alpha_out_of_range(self):
        op = fake_operator_data([2.0, 1.0], lambda_min_pos=1.0, spectral_norm=3.0)
        config = PmcSolverConfig(
            mu=1.0, tau=1.0, q=1, alpha=0.3, epsilon=1.0 / 6.0, eta=1.0 / 6.0
        )
        msg = check_convexity_condition(config, op)
        assert msg is not None and "(C-3)" in msg

    def test_bad_schedule(self):
        op = fake_operator_data([2.0, 1.0], lambda_min_pos=1.0, spectral_norm=3.0)
        config = PmcSolverConfig(
            mu=1.0, tau=1.0, q=1, alpha=0.25, epsilon=0.4, eta=0.4
        )
        msg = check_convexity_condition(config, op)
        assert msg is not None and "(C-2)" in msg


class TestDefaultConfig:
    def test_formulas(self):
        op = fake_operator_data([4.0, 2.0], lambda_min_pos=2.0, spectral_norm=3.0)
        config = default_config(op, mu=1.0, tau=1.0, q=1)
        assert config.alpha == pytest.approx(0.25)
        assert config.epsilon == pytest.approx(1.0 / 6.0)
        assert config.eta == pytest.approx(1.0 / 6.0)
        assert config.tolerance == 1e-8
        assert config.max_iterations == 100_000

    def test_mu_zero(self):
        op = fake_operator_data([4.0, 2.0], lambda_min_pos=2.0, spectral_norm=5.0)
        config = default_config(op, mu=0.0, tau=1.0, q=0)
        assert config.alpha == pytest.approx(0.2)
        assert config.eta == pytest.approx(1.0 / 6.0)

    def test_rejects_inadmissible_ratio(self):
        op = fake_operator_data([4.0, 0.1], lambda_min_pos=0.1, spectral_norm=1.0)
        with pytest.raises(ValueError, match="admissible"):
            default_config(op, mu=10.0, tau=1.0, q=2)

    def test_passes_convexity_check(self):
        rng = np.random.default_rng(12)
        op = assemble_operator(random_data(rng))
        config = default_config(op, mu=0.3, tau=1.0, q=op.rank)
        assert check_convexity_condition(config, op) is None


class TestPmcOperatorT:
    def test_mu_zero_is_residual_map(self):
        rng = np.random.default_rng(5)
        op = assemble_operator(random_data(rng))
        config = default_config(op, mu=0.0, tau=1.0, q=0)
        basis = op.basis(0)
        w = rng.standard_normal(op.n_features)
        np.testing.assert_allclose(
            pmc_operator_T(w, op, config, basis),
            op.a_matrix @ w - op.b_vector,
        )

    def test_origin_gives_minus_b(self):
        rng = np.random.default_rng(6)
        op = assemble_operator(random_data(rng))
        config = default_config(op, mu=0.2, tau=1.0, q=op.rank)
        basis = op.basis(config.q)
        np.testing.assert_allclose(
            pmc_operator_T(np.zeros(op.n_features), op, config, basis),
            -op.b_vector,
        )

    def test_scalar_example(self):
        op = LstdOperatorData(
            a_matrix=np.array([[2.0]]),
            b_vector=np.array([0.0]),
            gram_eigvecs=np.eye(1),
            gram_eigvals=np.array([2.0]),
            lambda_min_pos=2.0,
            spectral_norm=2.0,
            rank=1,
        )
        config = PmcSolverConfig(
            mu=1.0, tau=1.0, q=1, alpha=1.0 / 3.0,
            epsilon=1.0 / 6.0, eta=1.0 / 6.0,
        )
        out = pmc_operator_T(np.array([0.5]), op, config, op.basis(1))
        np.testing.assert_allclose(out, [0.5])

    def test_matches_finite_difference_gradient(self):
        # T is the gradient of
        #   u -> 0.5 ||phi u - y||^2 - mu * envelope(P u, tau)
        # at u = w, with y the bootstrapped target for that same w.
        rng = np.random.default_rng(17)
        data = random_data(rng, m=30, n=6)
        op = assemble_operator(data)
        q = 3
        tau = 1.0
        mu = 0.4 * float(op.gram_eigvals[q - 1]) * tau
        config = default_config(op, mu=mu, tau=tau, q=q)
        basis = op.basis(q)
        checked = 0
        while checked < 10:
            w = rng.standard_normal(6)
            projected = basis.project(w)
            if np.any(np.abs(np.abs(projected) - tau) < 1e-3):
                continue
            y = data.payoffs + data.gamma * (data.phi_next @ w)

            def objective(u):
                fit = 0.5 * np.sum((data.phi @ u - y) ** 2)
                return fit - mu * moreau_env_l1(basis.project(u), tau)

            fd = central_difference_gradient(objective, w, h=1e-6)
            np.testing.assert_allclose(
                pmc_operator_T(w, op, config, basis), fd, atol=1e-5
            )
            checked += 1


class TestRecastMapProperties:
    def make_forward(self, rng, mu, q_frac=1.0):
        data = random_data(rng, m=50, n=12)
        op = assemble_operator(data)
        q = max(1, int(op.rank * q_frac)) if mu > 0 else 0
        tau = 1.0
        if mu > 0:
            # keep (C-1) satisfied with margin
            mu = min(mu, 0.9 * float(op.gram_eigvals[q - 1]) * tau)
        config = default_config(op, mu=mu, tau=tau, q=q)
        basis = op.basis(q)
        beta = config.alpha * (op.spectral_norm + mu / tau) + 1.0

        def forward(x):
            return config.alpha * pmc_operator_T(x, op, config, basis) + x

        return forward, beta, op.n_features

    def test_monotone_and_lipschitz(self):
        rng = np.random.default_rng(23)
        for mu in (0.0, 0.5, 2.0):
            forward, beta, n = self.make_forward(rng, mu)
            for _ in range(334):
                x = rng.standard_normal(n) * 3
                y = rng.standard_normal(n) * 3
                dx = x - y
                db = forward(x) - forward(y)
                assert dx @ db >= -1e-10
                assert np.linalg.norm(db) <= beta * np.linalg.norm(dx) + 1e-10

    def test_lower_level_midpoint_convexity(self):
        # 0.5 ||phi u - y||^2 + mu * pmc(u) is convex under the ratio bound.
        rng = np.random.default_rng(29)
        data = random_data(rng, m=50, n=8)
        op = assemble_operator(data)
        q = op.rank
        tau = 1.0
        mu = float(op.gram_eigvals[q - 1]) * tau  # boundary of the condition
        basis = op.basis(q)
        w = rng.standard_normal(8)
        y = data.payoffs + data.gamma * (data.phi_next @ w)

        def lower(u):
            return 0.5 * np.sum((data.phi @ u - y) ** 2) + mu * pmc_penalty(
                u, tau, basis
            )

        for _ in range(1000):
            a = rng.standard_normal(8) * 2
            b = rng.standard_normal(8) * 2
            mid = lower(0.5 * (a + b))
            assert mid <= 0.5 * (lower(a) + lower(b)) + 1e-10


class TestPmcLstdSolve:
    def test_mu_zero_matches_closed_form(self):
        rng = np.random.default_rng(41)
        for _ in range(5):
            data = random_data(rng, m=80, n=15)
            op = assemble_operator(data)
            config = default_config(op, mu=0.0, tau=1.0, q=0, tolerance=1e-12)
            report = pmc_lstd_solve(data, config)
            assert report.converged
            w_exact = lstd_closed_form(op)
            rel = np.linalg.norm(report.x - w_exact) / np.linalg.norm(w_exact)
            assert rel <= 1e-6

    def test_l1_mode_matches_lasso_oracle(self):
        rng = np.random.default_rng(43)
        data = symmetric_data(rng, m=60, n=12)
        op = assemble_operator(data)
        mu = 4.0
        config = default_config(op, mu=mu, tau=1.0, q=0, tolerance=1e-12)
        report = pmc_lstd_solve(data, config)
        assert report.converged
        oracle = cd_lasso(data.phi, data.payoffs, mu)
        rel = np.linalg.norm(report.x - oracle) / np.linalg.norm(oracle)
        assert rel <= 1e-6

    def test_huge_tau_approaches_lasso(self):
        rng = np.random.default_rng(47)
        data = symmetric_data(rng, m=60, n=12)
        op = assemble_operator(data)
        mu = 4.0
        config = default_config(op, mu=mu, tau=1e8, q=op.rank, tolerance=1e-12)
        report = pmc_lstd_solve(data, config)
        assert report.converged
        oracle = cd_lasso(data.phi, data.payoffs, mu)
        rel = np.linalg.norm(report.x - oracle) / np.linalg.norm(oracle)
        assert rel <= 1e-4

    def test_debiasing_against_lasso(self):
        # Same support as the lasso oracle, but amplitudes essentially at
        # the support-restricted least-squares values.
        rng = np.random.default_rng(2718)
        m, n = 100, 20
        phi = rng.standard_normal((m, n))
        w_true = np.zeros(n)
        w_true[[2, 7, 11, 16]] = [4.0, -5.0, 3.5, 4.5]
        payoffs = phi @ w_true + 0.05 * rng.standard_normal(m)
        data = LstdData(phi, np.zeros((m, n)), payoffs, 0.5)
        op = assemble_operator(data)
        mu = 8.0
        config = default_config(op, mu=mu, tau=1.0, q=op.rank, tolerance=1e-12)
        report = pmc_lstd_solve(data, config)
        assert report.converged

        w_l1 = cd_lasso(phi, payoffs, mu)
        support = np.flatnonzero(w_l1)
        assert np.array_equal(np.flatnonzero(report.x), support)
        w_ls = restricted_least_squares(phi, payoffs, support)
        pmc_err = np.abs(report.x - w_ls)[support]
        l1_err = np.abs(w_l1 - w_ls)[support]
        assert np.all(pmc_err < l1_err)

    def test_stationarity_inclusion_at_solution(self):
        rng = np.random.default_rng(53)
        data = symmetric_data(rng, m=70, n=14)
        op = assemble_operator(data)
        mu = 3.0
        tau = 1.0
        config = default_config(op, mu=mu, tau=tau, q=op.rank, tolerance=1e-12)
        report = pmc_lstd_solve(data, config)
        assert report.converged
        t_w = pmc_operator_T(report.x, op, config, op.basis(config.q))
        assert np.all(np.abs(t_w) <= mu + 1e-6)
        nonzero = report.x != 0
        np.testing.assert_allclose(
            t_w[nonzero], -mu * np.sign(report.x[nonzero]), atol=1e-6
        )
        assert inclusion_residual_penalized(t_w, report.x, mu) <= 1e-6

    def test_rejects_invalid_config(self):
        rng = np.random.default_rng(59)
        data = random_data(rng)
        op = assemble_operator(data)
        config = PmcSolverConfig(
            mu=1.0, tau=1.0, q=0, alpha=100.0, epsilon=1.0 / 6.0, eta=1.0 / 6.0
        )
        with pytest.raises(ValueError, match="C-3"):
            pmc_lstd_solve(data, config)

    def test_warm_start_paths_agree(self):
        rng = np.random.default_rng(61)
        data = symmetric_data(rng, m=50, n=10)
        op = assemble_operator(data)
        config = default_config(op, mu=2.0, tau=1.0, q=0, tolerance=1e-12)
        cold = solve_assembled(op, config)
        warm = solve_assembled(op, config, cold.x, cold.x)
        assert warm.iterations <= cold.iterations
        np.testing.assert_allclose(warm.x, cold.x, atol=1e-9)


class TestLstdClosedForm:
    def test_two_by_two_inverse(self):
        op = fake_operator_data([1.0, 1.0], lambda_min_pos=1.0)
        op = LstdOperatorData(
            a_matrix=np.array([[1.0, -0.5], [-0.5, 1.0]]),
            b_vector=np.array([1.0, 0.0]),
            gram_eigvecs=op.gram_eigvecs,
            gram_eigvals=op.gram_eigvals,
            lambda_min_pos=op.lambda_min_pos,
            spectral_norm=1.5,
            rank=2,
        )
        np.testing.assert_allclose(
            lstd_closed_form(op), [4.0 / 3.0, 2.0 / 3.0], atol=1e-12
        )

    def test_identity_system(self):
        rng = np.random.default_rng(67)
        b = rng.standard_normal(6)
        op = fake_operator_data(np.ones(6), lambda_min_pos=1.0)
        op = LstdOperatorData(
            a_matrix=np.eye(6),
            b_vector=b,
            gram_eigvecs=np.eye(6),
            gram_eigvals=np.ones(6),
            lambda_min_pos=1.0,
            spectral_norm=1.0,
            rank=6,
        )
        np.testing.assert_allclose(lstd_closed_form(op), b)

    def test_zero_system_gives_zero(self):
        op = LstdOperatorData(
            a_matrix=np.zeros((3, 3)),
            b_vector=np.zeros(3),
            gram_eigvecs=np.eye(3),
            gram_eigvals=np.ones(3),
            lambda_min_pos=1.0,
            spectral_norm=0.0,
            rank=3,
        )
        np.testing.assert_allclose(lstd_closed_form(op), np.zeros(3))

    def test_singular_gives_minimum_norm(self):
        # Singular consistent system: the pseudoinverse solution has no
        # component in the null space.
        a = np.array([[1.0, 0.0], [0.0, 0.0]])
        op = LstdOperatorData(
            a_matrix=a,
            b_vector=np.array([2.0, 0.0]),
            gram_eigvecs=np.eye(2),
            gram_eigvals=np.array([1.0, 0.0]),
            lambda_min_pos=1.0,
            spectral_norm=1.0,
            rank=1,
        )
        np.testing.assert_allclose(lstd_closed_form(op), [2.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(
            lstd_closed_form(op, ridge=1.0), [1.0, 0.0], atol=1e-12
        )

    def test_rejects_negative_ridge(self):
        op = fake_operator_data([1.0], lambda_min_pos=1.0)
        with pytest.raises(ValueError):
            lstd_closed_form(op, ridge=-0.1)


class TestEstimators:
    def make_chain_free_problem(self, rng, m=80, n=12):
        phi = rng.standard_normal((m, n))
        phi_next = 0.3 * rng.standard_normal((m, n))
        payoffs = rng.standard_normal(m)
        return phi, phi_next, payoffs

    def test_pmc_fit_predict(self):
        rng = np.random.default_rng(71)
        phi, phi_next, payoffs = self.make_chain_free_problem(rng)
        est = PmcLstd(mu=0.5, tau=1.0, q="auto", gamma=0.9, tol=1e-10)
        assert est.fit(phi, phi_next, payoffs) is est
        assert est.coef_.shape == (12,)
        assert est.converged_
        np.testing.assert_allclose(est.predict(phi[:5]), phi[:5] @ est.coef_)

    def test_mu_zero_equals_lstd_regressor(self):
        rng = np.random.default_rng(73)
        phi, phi_next, payoffs = self.make_chain_free_problem(rng)
        sparse = PmcLstd(mu=0.0, q=0, gamma=0.9, tol=1e-12).fit(
            phi, phi_next, payoffs
        )
        closed = LstdRegressor(gamma=0.9).fit(phi, phi_next, payoffs)
        np.testing.assert_allclose(sparse.coef_, closed.coef_, atol=1e-6)

    def test_get_params_clone_roundtrip(self):
        est = PmcLstd(mu=0.7, tau=2.0, q=5, gamma=0.8, tol=1e-9, max_iter=500)
        params = est.get_params()
        assert params["mu"] == 0.7 and params["q"] == 5
        cloned = clone(est)
        assert cloned.get_params() == params

    def test_predict_before_fit_raises(self):
        with pytest.raises(ValueError, match="fit"):
            PmcLstd().predict(np.ones((2, 3)))
        with pytest.raises(ValueError, match="fit"):
            LstdRegressor().predict(np.ones((2, 3)))

    def test_warm_start_reuses_previous_solution(self):
        rng = np.random.default_rng(79)
        phi, phi_next, payoffs = self.make_chain_free_problem(rng)
        est = PmcLstd(mu=1.0, q=0, gamma=0.9, tol=1e-10, warm_start=True)
        est.fit(phi, phi_next, payoffs)
        first = est.n_iter_
        est.fit(phi, phi_next, payoffs)
        assert est.n_iter_ <= first

    def test_ridge_regressor(self):
        rng = np.random.default_rng(83)
        phi, phi_next, payoffs = self.make_chain_free_problem(rng)
        est = LstdRegressor(gamma=0.9, ridge=2.0).fit(phi, phi_next, payoffs)
        op = est.operator_data_
        expected = np.linalg.solve(
            op.a_matrix + 2.0 * np.eye(12), op.b_vector
        )
        np.testing.assert_allclose(est.coef_, expected, atol=1e-10)
