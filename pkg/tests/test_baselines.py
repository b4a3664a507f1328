"""Closed-form and oracle checks for the reference linear estimators."""

import numpy as np
import pytest

from partialfactor.baselines import (NIG_TAU_GRID, covariance_ridge,
                                     gprior_estimator, lars, nig_regression,
                                     pcr, pls, ridge_estimator,
                                     whiten_equivalence_check)


def random_pd(rng, p):
    A = rng.standard_normal((p, p))
    return A @ A.T + p * np.eye(p)


class TestRidgeEstimator:
    def test_hand_value(self):
        # (X^t X + tau) = 2 + 2, X^t y = 2
        beta = ridge_estimator(np.array([[1.0], [1.0]]), np.array([1.0, 1.0]), 2.0)
        assert beta.shape == (1,)
        assert abs(beta[0] - 0.5) < 1e-12

    def test_huge_penalty_kills_coefficients(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((12, 5))
        y = rng.standard_normal(12)
        assert np.linalg.norm(ridge_estimator(X, y, 1e12)) < 1e-6

    def test_zero_penalty_interpolates_identity(self):
        y = np.array([3.0, -1.0, 0.5, 2.0])
        assert np.allclose(ridge_estimator(np.eye(4), y, 0.0), y, atol=1e-12)

    def test_zero_penalty_needs_full_rank(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((4, 9))
        y = rng.standard_normal(4)
        with pytest.raises(ValueError):
            ridge_estimator(X, y, 0.0)
        beta = ridge_estimator(X, y, 1e-6)
        assert np.all(np.isfinite(beta))

    def test_negative_penalty_rejected(self):
        with pytest.raises(ValueError):
            ridge_estimator(np.eye(2), np.ones(2), -1.0)

    def test_row_count_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ridge_estimator(np.eye(3), np.ones(2), 1.0)

    def test_dual_form_identity(self):
        # (X^t X + tau I)^{-1} X^t y = X^t (X X^t + tau I)^{-1} y, so the
        # transposed-data convention gives the same estimator.
        for seed in range(30):
            rng = np.random.default_rng(seed)
            n, p = rng.integers(3, 12, size=2)
            X = rng.standard_normal((n, p))
            y = rng.standard_normal(n)
            tau = float(rng.uniform(0.1, 10.0))
            primal = ridge_estimator(X, y, tau)
            dual = X.T @ np.linalg.solve(X @ X.T + tau * np.eye(n), y)
            assert np.allclose(primal, dual, atol=1e-10)


class TestGPrior:
    def test_vanishing_g_recovers_least_squares(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((15, 4))
        y = rng.standard_normal(15)
        beta_ls = np.linalg.lstsq(X, y, rcond=None)[0]
        assert np.allclose(gprior_estimator(X, y, 0.0), beta_ls, atol=1e-12)
        assert np.allclose(gprior_estimator(X, y, 1e-12), beta_ls, atol=1e-9)

    def test_unit_g_halves(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((10, 3))
        y = rng.standard_normal(10)
        assert np.allclose(gprior_estimator(X, y, 1.0),
                           gprior_estimator(X, y, 0.0) / 2.0, atol=1e-13)

    def test_scaling_identity_including_wide(self):
        # (1+g) * estimate equals minimum-norm least squares exactly.
        for seed in range(20):
            rng = np.random.default_rng(seed)
            n = int(rng.integers(3, 10))
            p = int(rng.integers(2, 15))
            X = rng.standard_normal((n, p))
            y = rng.standard_normal(n)
            g = float(rng.uniform(0.0, 5.0))
            beta_ls = np.linalg.lstsq(X, y, rcond=1e-10)[0]
            assert np.max(np.abs(gprior_estimator(X, y, g) * (1 + g) - beta_ls)) < 1e-12

    def test_wide_fit_projects_response(self):
        # With full row rank the fitted values are y shrunk by 1/(1+g).
        rng = np.random.default_rng(4)
        X = rng.standard_normal((4, 9))
        y = rng.standard_normal(4)
        fitted = X @ gprior_estimator(X, y, 3.0)
        assert np.allclose(fitted, y / 4.0, atol=1e-10)

    def test_negative_g_rejected(self):
        with pytest.raises(ValueError):
            gprior_estimator(np.eye(2), np.ones(2), -0.5)


class TestCovarianceRidge:
    def test_no_rows_returns_prior_mean(self):
        rng = np.random.default_rng(5)
        Sigma = random_pd(rng, 3)
        V0 = rng.standard_normal(3)
        beta = covariance_ridge(np.zeros((0, 3)), np.zeros(0), Sigma, V0, 2.5)
        assert np.allclose(beta, np.linalg.solve(Sigma, V0), atol=1e-12)

    def test_identity_covariance_collapses_to_ridge(self):
        rng = np.random.default_rng(6)
        X = rng.standard_normal((9, 4))
        y = rng.standard_normal(9)
        for tau in (0.01, 1.0, 37.0):
            got = covariance_ridge(X, y, np.eye(4), np.zeros(4), tau)
            assert np.allclose(got, ridge_estimator(X, y, tau), atol=1e-10)

    def test_moment_form_oracle(self):
        # At tau = 1 the solve can be rewritten with sample moments:
        # (I + n S^{-1} Shat)^{-1} (S^{-1} V0 + n S^{-1} Vhat).
        worst = 0.0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            p = int(rng.integers(2, 7))
            n = int(rng.integers(1, 12))
            X = rng.standard_normal((n, p))
            y = rng.standard_normal(n)
            Sigma = random_pd(rng, p)
            V0 = rng.standard_normal(p)
            got = covariance_ridge(X, y, Sigma, V0, 1.0)
            Shat = X.T @ X / n
            Vhat = X.T @ y / n
            Sinv = np.linalg.inv(Sigma)
            oracle = np.linalg.solve(np.eye(p) + n * Sinv @ Shat,
                                     Sinv @ V0 + n * Sinv @ Vhat)
            worst = max(worst, float(np.max(np.abs(got - oracle))))
        assert worst < 1e-10

    def test_nonpd_covariance_rejected(self):
        X = np.ones((2, 2))
        with pytest.raises(ValueError):
            covariance_ridge(X, np.ones(2), np.diag([1.0, -1.0]), np.zeros(2), 1.0)

    def test_nonpositive_tau_rejected(self):
        with pytest.raises(ValueError):
            covariance_ridge(np.eye(2), np.ones(2), np.eye(2), np.zeros(2), 0.0)


class TestWhitenEquivalence:
    def test_identity_covariance_is_plain_ridge(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((8, 3))
        y = rng.standard_normal(8)
        direct, mapped = whiten_equivalence_check(X, y, np.eye(3), 0.7)
        ridge = ridge_estimator(X, y, 0.7)
        assert np.allclose(direct, ridge, atol=1e-12)
        assert np.allclose(mapped, ridge, atol=1e-10)

    def test_diagonal_covariance_hand_solve(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((6, 2))
        y = rng.standard_normal(6)
        Sigma = np.diag([1.0, 4.0])
        direct, mapped = whiten_equivalence_check(X, y, Sigma, 2.0)
        byhand = np.linalg.solve(X.T @ X + 2.0 * Sigma, X.T @ y)
        assert np.allclose(direct, byhand, atol=1e-12)
        assert np.allclose(mapped, byhand, atol=1e-10)

    def test_random_pd_agreement(self):
        worst = 0.0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            p = int(rng.integers(2, 8))
            n = int(rng.integers(2, 10))  # wide designs included
            X = rng.standard_normal((n, p))
            y = rng.standard_normal(n)
            Sigma = random_pd(rng, p)
            tau = float(rng.uniform(0.05, 20.0))
            direct, mapped = whiten_equivalence_check(X, y, Sigma, tau)
            worst = max(worst, float(np.max(np.abs(direct - mapped))))
        assert worst < 1e-10


class TestNigRegression:
    def test_single_point_grid_is_ridge(self):
        rng = np.random.default_rng(9)
        X = rng.standard_normal((14, 6))
        y = rng.standard_normal(14)
        fit = nig_regression(X, y, tau_grid=(3.7,))
        assert np.allclose(fit.beta, ridge_estimator(X, y, 3.7), atol=1e-10)
        assert fit.method == "nig"

    def test_zero_response_gives_zero(self):
        rng = np.random.default_rng(10)
        X = rng.standard_normal((9, 12))
        fit = nig_regression(X, np.zeros(9))
        assert np.allclose(fit.beta, 0.0, atol=1e-14)

    def test_weights_form_distribution(self):
        rng = np.random.default_rng(11)
        X = rng.standard_normal((10, 4))
        y = rng.standard_normal(10)
        w = nig_regression(X, y).tuning["weights"]
        assert w.shape == (len(NIG_TAU_GRID),)
        assert np.all(w >= 0)
        assert abs(w.sum() - 1.0) < 1e-12

    def test_tracks_oracle_penalty_ridge(self):
        # Data generated from the ridge prior itself: averaging over the
        # penalty should predict about as well as knowing the true one.
        tau_true, sigma = 4.0, 0.5
        p, n_train, n_test = 12, 40, 200
        mse_nig, mse_oracle = 0.0, 0.0
        for rep in range(20):
            rng = np.random.default_rng(100 + rep)
            beta = rng.normal(0.0, sigma / np.sqrt(tau_true), size=p)
            X = rng.standard_normal((n_train, p))
            y = X @ beta + sigma * rng.standard_normal(n_train)
            Xt = rng.standard_normal((n_test, p))
            yt = Xt @ beta + sigma * rng.standard_normal(n_test)
            mse_nig += float(np.mean((yt - Xt @ nig_regression(X, y).beta) ** 2))
            mse_oracle += float(np.mean(
                (yt - Xt @ ridge_estimator(X, y, tau_true)) ** 2))
        assert mse_nig < 1.05 * mse_oracle

    def test_invalid_arguments(self):
        X, y = np.eye(3), np.ones(3)
        with pytest.raises(ValueError):
            nig_regression(X, y, a=0.0)
        with pytest.raises(ValueError):
            nig_regression(X, y, b=-1.0)
        with pytest.raises(ValueError):
            nig_regression(X, y, tau_grid=())
        with pytest.raises(ValueError):
            nig_regression(X, y, tau_grid=(1.0, -2.0))


class TestPcr:
    def test_full_component_count_is_least_squares(self):
        rng = np.random.default_rng(12)
        X = rng.standard_normal((15, 5))
        y = rng.standard_normal(15)
        fit = pcr(X, y, 5)
        beta_ls = np.linalg.lstsq(X, y, rcond=None)[0]
        assert np.allclose(fit.beta, beta_ls, atol=1e-10)

    def test_wide_full_rank_is_minimum_norm_least_squares(self):
        rng = np.random.default_rng(13)
        X = rng.standard_normal((4, 9))
        y = rng.standard_normal(4)
        fit = pcr(X, y, 4)
        assert np.allclose(fit.beta, np.linalg.pinv(X) @ y, atol=1e-10)

    def test_one_component_discards_spread_direction(self):
        # Right singular vectors fixed to the average and difference of two
        # predictors; keeping one component zeroes the difference weight no
        # matter how predictive it is.
        rng = np.random.default_rng(14)
        V = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)
        U = np.linalg.qr(rng.standard_normal((30, 2)))[0]
        X = U @ np.diag([3.0, 0.4]) @ V.T
        y = X[:, 0] - X[:, 1] + 0.01 * rng.standard_normal(30)
        beta = pcr(X, y, 1).beta
        assert abs(beta[0] - beta[1]) < 1e-12

    def test_truncated_svd_oracle(self):
        rng = np.random.default_rng(15)
        X = rng.standard_normal((8, 5))
        y = rng.standard_normal(8)
        fit = pcr(X, y, 2)
        U = np.linalg.svd(X, full_matrices=False)[0][:, :2]
        assert np.allclose(X @ fit.beta, U @ (U.T @ y), atol=1e-10)

    def test_component_bounds(self):
        rng = np.random.default_rng(16)
        X = rng.standard_normal((6, 3))
        X = np.column_stack([X, X[:, 0]])  # rank 3, p 4
        y = rng.standard_normal(6)
        with pytest.raises(ValueError):
            pcr(X, y, 0)
        with pytest.raises(ValueError):
            pcr(X, y, 4)
        assert pcr(X, y, 3).beta.shape == (4,)


class TestPls:
    def test_single_column_is_least_squares(self):
        rng = np.random.default_rng(17)
        X = rng.standard_normal((20, 1))
        y = rng.standard_normal(20)
        fit = pls(X, y, 1)
        assert np.allclose(fit.beta, np.linalg.lstsq(X, y, rcond=None)[0],
                           atol=1e-10)

    def test_saturated_fit_matches_least_squares(self):
        rng = np.random.default_rng(18)
        X = rng.standard_normal((8, 7))
        y = rng.standard_normal(8)
        fit = pls(X, y, 7)
        fitted_ls = X @ np.linalg.lstsq(X, y, rcond=None)[0]
        assert np.allclose(X @ fit.beta, fitted_ls, atol=1e-8)

    def test_first_direction_follows_response_covariance(self):
        rng = np.random.default_rng(19)
        X = rng.standard_normal((12, 5))
        y = rng.standard_normal(12)
        beta = pls(X, y, 1).beta
        w = X.T @ y
        cos = beta @ w / (np.linalg.norm(beta) * np.linalg.norm(w))
        assert abs(abs(cos) - 1.0) < 1e-10

    def test_orthogonal_response_stops_early(self):
        rng = np.random.default_rng(20)
        y = rng.standard_normal(10)
        X = rng.standard_normal((10, 4))
        X = X - np.outer(y, y @ X) / (y @ y)  # every column now orthogonal to y
        with pytest.warns(RuntimeWarning):
            fit = pls(X, y, 2)
        assert fit.tuning["status"] == "early_stop"
        assert fit.tuning["components"] == 0
        assert np.allclose(fit.beta, 0.0)

    def test_component_bounds(self):
        X = np.eye(3)
        with pytest.raises(ValueError):
            pls(X, np.ones(3), 0)
        with pytest.raises(ValueError):
            pls(X, np.ones(3), 4)


class TestLars:
    def test_first_step_picks_max_correlation(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            X = rng.standard_normal((15, 6))
            y = rng.standard_normal(15)
            beta = lars(X, y, 1).beta
            nonzero = np.flatnonzero(beta)
            assert nonzero.size == 1
            assert nonzero[0] == int(np.argmax(np.abs(X.T @ y)))

    def test_orthonormal_design_soft_thresholds(self):
        # With X^t X = I the path after m steps keeps the m largest
        # |correlations|, each pulled toward zero by the (m+1)-th largest.
        rng = np.random.default_rng(21)
        X = np.linalg.qr(rng.standard_normal((12, 6)))[0]
        y = rng.standard_normal(12)
        c = X.T @ y
        order = np.argsort(-np.abs(c))
        for m in range(1, 7):
            cut = np.abs(c[order[m]]) if m < 6 else 0.0
            oracle = np.sign(c) * np.maximum(np.abs(c) - cut, 0.0)
            assert np.allclose(lars(X, y, m).beta, oracle, atol=1e-8)

    def test_full_path_reaches_least_squares(self):
        rng = np.random.default_rng(22)
        X = rng.standard_normal((20, 5))
        y = rng.standard_normal(20)
        beta_ls = np.linalg.lstsq(X, y, rcond=None)[0]
        assert np.allclose(lars(X, y, 5).beta, beta_ls, atol=1e-8)
        # extra steps change nothing once correlations vanish
        assert np.allclose(lars(X, y, 9).beta, beta_ls, atol=1e-8)

    def test_step_count_validated(self):
        with pytest.raises(ValueError):
            lars(np.eye(2), np.ones(2), 0)


def test_every_fitter_is_deterministic():
    rng = np.random.default_rng(23)
    X = rng.standard_normal((10, 6))
    y = rng.standard_normal(10)
    pairs = [
        (lambda: ridge_estimator(X, y, 1.3),) * 2,
        (lambda: gprior_estimator(X, y, 2.0),) * 2,
        (lambda: covariance_ridge(X, y, random_pd(np.random.default_rng(1), 6),
                                  np.zeros(6), 1.0),) * 2,
        (lambda: nig_regression(X, y).beta,) * 2,
        (lambda: pcr(X, y, 3).beta,) * 2,
        (lambda: pls(X, y, 2).beta,) * 2,
        (lambda: lars(X, y, 3).beta,) * 2,
    ]
    for first, second in pairs:
        a, b = first(), second()
        assert np.array_equal(np.asarray(a), np.asarray(b))
