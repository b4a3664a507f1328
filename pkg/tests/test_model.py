"""Exact-algebra checks for the joint Gaussian model layer.

Oracles here are independent of the implementation: Schur-complement
conditioning on the assembled covariance, scipy's multivariate normal
density, and hand computations on tiny instances.
"""

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from partialfactor.model import (
    DataMatrix,
    FactorModel,
    JointCovariance,
    PartialFactorModel,
    center,
    conditional_moments,
    full_covariance,
    implied_beta,
    joint_covariance,
    log_likelihood,
    marginal_covariance,
    sample_joint,
)

EXAMPLE2_B = np.array([
    [0.0, 1.0],
    [-4.0, 0.0],
    [0.0, 0.0],
    [-8.0, -1.0],
    [-4.0, 0.0],
    [-6.0, 1.0],
    [1.0, 0.0],
    [-1.0, 1.0],
    [4.0, 0.0],
    [0.0, 1.0],
])


def random_model(rng, p=4, k=1, pure=False):
    B = rng.normal(size=(p, k))
    Psi = rng.uniform(0.3, 2.0, size=p)
    theta = rng.normal(size=k)
    base = FactorModel(B=B, Psi=Psi)
    if pure:
        return PartialFactorModel.pure_factor(base, theta, sigma2=rng.uniform(0.2, 1.5))
    # Perturb V away from theta B^t, keeping enough omega for a valid model.
    V = theta @ B.T + 0.3 * rng.normal(size=p)
    lam_sq = float(np.sum((V - theta @ B.T) ** 2 / Psi))
    omega = float(theta @ theta) + lam_sq + rng.uniform(0.2, 1.5)
    return PartialFactorModel.from_omega(base, theta, V, omega)


class TestMarginalCovariance:
    def test_zero_loadings_identity(self):
        S = marginal_covariance(np.zeros((5, 2)), np.ones(5))
        assert np.array_equal(S, np.eye(5))

    def test_rank_one_update(self):
        e1 = np.zeros((4, 1))
        e1[0, 0] = 1.0
        S = marginal_covariance(e1, np.ones(4))
        assert S[0, 0] == 2.0
        assert np.array_equal(S - np.outer(e1, e1), np.eye(4))

    def test_two_factor_corner_entry(self):
        S = marginal_covariance(EXAMPLE2_B, np.full(10, 0.2))
        assert S[9, 9] == pytest.approx(0.0**2 + 1.0**2 + 0.2, abs=1e-15)

    def test_rejects_nonpositive_psi(self):
        with pytest.raises(ValueError):
            marginal_covariance(np.zeros((3, 1)), np.array([1.0, 0.0, 1.0]))


class TestFullCovariance:
    def test_independent_response_is_block_diagonal(self):
        base = FactorModel(B=np.zeros((3, 2)), Psi=np.ones(3))
        m = PartialFactorModel(base=base, theta=np.zeros(2), V=np.zeros(3),
                               sigma2=1.0, omega=1.0)
        S = full_covariance(m)
        expect = np.zeros((6, 6))
        expect[:3, :3] = np.eye(3)
        expect[3:5, 3:5] = np.eye(2)
        expect[5, 5] = 1.0
        assert np.allclose(S, expect)

    def test_pure_factor_cross_blocks(self):
        rng = np.random.default_rng(0)
        m = random_model(rng, p=5, k=2, pure=True)
        S = full_covariance(m)
        assert np.allclose(S[5:7, 7], m.theta)
        assert np.allclose(S[:5, 7], m.theta @ m.base.B.T)
        assert np.allclose(S, S.T)

    def test_schur_complement_matches_conditional_variance(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            m = random_model(rng, p=4, k=1)
            S = full_covariance(m)
            q = m.p + m.k
            cond_var = S[q, q] - S[q, :q] @ np.linalg.solve(S[:q, :q], S[:q, q])
            _, var = conditional_moments(m, np.zeros(m.k), np.zeros(m.p))
            assert var == pytest.approx(cond_var, abs=1e-10)

    def test_xy_marginal_equals_joint_covariance(self):
        rng = np.random.default_rng(2)
        m = random_model(rng, p=6, k=2)
        S = full_covariance(m)
        keep = list(range(6)) + [8]
        assert np.allclose(S[np.ix_(keep, keep)], joint_covariance(m).Sigma, atol=1e-12)

    def test_inconsistent_model_rejected(self):
        base = FactorModel(B=np.ones((2, 1)), Psi=np.ones(2))
        with pytest.raises(ValueError):
            PartialFactorModel(base=base, theta=np.array([10.0]),
                               V=np.zeros(2), sigma2=1.0, omega=1.0)


class TestConditionalMoments:
    def test_pure_factor_mean_ignores_x(self):
        rng = np.random.default_rng(3)
        m = random_model(rng, p=5, k=2, pure=True)
        f = rng.normal(size=2)
        for _ in range(5):
            x = rng.normal(size=5)
            mean, var = conditional_moments(m, f, x)
            assert mean == pytest.approx(float(m.theta @ f), abs=1e-12)
            assert var == m.sigma2

    def test_null_regression(self):
        base = FactorModel(B=np.zeros((3, 1)), Psi=np.ones(3))
        m = PartialFactorModel(base=base, theta=np.zeros(1), V=np.zeros(3),
                               sigma2=2.0, omega=2.0)
        mean, var = conditional_moments(m, np.ones(1), np.ones(3))
        assert mean == 0.0
        assert var == 2.0

    def test_against_schur_oracle(self):
        rng = np.random.default_rng(4)
        worst = 0.0
        for _ in range(1000):
            p = int(rng.integers(2, 6))
            k = int(rng.integers(1, p + 1))
            m = random_model(rng, p=p, k=k)
            S = full_covariance(m)
            q = p + k
            f = rng.normal(size=k)
            x = rng.normal(size=p)
            given = np.concatenate([x, f])
            w = np.linalg.solve(S[:q, :q], S[:q, q])
            mean_o = float(w @ given)
            var_o = float(S[q, q] - S[q, :q] @ w)
            mean, var = conditional_moments(m, f, x)
            worst = max(worst, abs(mean - mean_o), abs(var - var_o))
        assert worst < 1e-10

    def test_variance_positive_and_constant(self):
        rng = np.random.default_rng(5)
        m = random_model(rng, p=4, k=2)
        variances = {conditional_moments(m, rng.normal(size=2), rng.normal(size=4))[1]
                     for _ in range(10)}
        assert variances == {m.sigma2}
        assert m.sigma2 > 0


class TestImpliedBeta:
    def test_zero_v(self):
        base = FactorModel(B=np.zeros((3, 1)), Psi=np.ones(3))
        m = PartialFactorModel(base=base, theta=np.zeros(1), V=np.zeros(3),
                               sigma2=1.0, omega=1.0)
        assert np.allclose(implied_beta(m), 0.0)

    def test_identity_covariance_returns_v(self):
        base = FactorModel(B=np.zeros((4, 1)), Psi=np.ones(4))
        V = np.array([0.1, -0.2, 0.3, 0.0])
        m = PartialFactorModel.from_omega(base, np.zeros(1), V, omega=2.0)
        assert np.allclose(implied_beta(m), V, atol=1e-12)

    def test_conditioning_oracle(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            m = random_model(rng, p=5, k=2)
            S = joint_covariance(m).Sigma
            beta_o = np.linalg.solve(S[:5, :5], S[:5, 5])
            x = rng.normal(size=5)
            assert implied_beta(m) @ x == pytest.approx(beta_o @ x, abs=1e-10)

    def test_pure_factor_closed_form(self):
        rng = np.random.default_rng(7)
        m = random_model(rng, p=6, k=2, pure=True)
        Sx = m.base.covariance()
        expect = m.theta @ m.base.B.T @ np.linalg.inv(Sx)
        assert np.allclose(implied_beta(m), expect, atol=1e-10)


class TestSampleJoint:
    def test_deterministic(self):
        rng = np.random.default_rng(8)
        m = random_model(rng, p=3, k=1)
        a = sample_joint(m, 1, seed=42)
        b = sample_joint(m, 1, seed=42)
        assert np.array_equal(a.X, b.X)
        assert np.array_equal(a.y, b.y)

    def test_independent_response_uncorrelated(self):
        base = FactorModel(B=np.zeros((3, 1)), Psi=np.ones(3))
        m = PartialFactorModel(base=base, theta=np.zeros(1), V=np.zeros(3),
                               sigma2=1.0, omega=1.0)
        data = sample_joint(m, 200_000, seed=0)
        corr = data.X.T @ data.y / data.n
        assert np.abs(corr).max() < 0.01

    def test_two_factor_corner_variance(self):
        base = FactorModel(B=EXAMPLE2_B, Psi=np.full(10, 0.2))
        m = PartialFactorModel.pure_factor(base, np.zeros(2), sigma2=1.0)
        data = sample_joint(m, 100_000, seed=1)
        assert data.X[:, 9].var() == pytest.approx(1.2, rel=0.02)

    def test_sample_covariance_converges(self):
        rng = np.random.default_rng(9)
        m = random_model(rng, p=4, k=2)
        data = sample_joint(m, 100_000, seed=2)
        joint = np.column_stack([data.X, data.y])
        S_hat = joint.T @ joint / data.n
        S = joint_covariance(m).Sigma
        assert np.abs(S_hat - S).max() < 0.05 * np.abs(S).max()


class TestLogLikelihood:
    def test_standard_normal_at_zero(self):
        assert log_likelihood(np.eye(1), np.zeros((1, 1))) == pytest.approx(
            -0.5 * np.log(2 * np.pi), abs=1e-15)

    def test_scaling_identity(self):
        rng = np.random.default_rng(10)
        X = rng.normal(size=(7, 3))
        S = np.cov(rng.normal(size=(20, 3)), rowvar=False)
        c = 2.7
        diff = log_likelihood(c * S, np.sqrt(c) * X) - log_likelihood(S, X)
        assert diff == pytest.approx(-(7 * 3 / 2) * np.log(c), abs=1e-9)

    def test_density_product_oracle(self):
        rng = np.random.default_rng(11)
        A = rng.normal(size=(3, 3))
        S = A @ A.T + np.eye(3)
        X = rng.normal(size=(9, 3))
        expect = multivariate_normal(mean=np.zeros(3), cov=S).logpdf(X).sum()
        assert log_likelihood(S, X) == pytest.approx(expect, abs=1e-10)

    def test_average_converges_to_entropy_rate(self):
        rng = np.random.default_rng(12)
        A = rng.normal(size=(2, 2))
        S = A @ A.T + np.eye(2)
        X = np.random.default_rng(13).multivariate_normal(np.zeros(2), S, size=200_000)
        sign, logdet = np.linalg.slogdet(S)
        expect = -np.log(2 * np.pi) - 0.5 * logdet - 1.0
        assert log_likelihood(S, X) / len(X) == pytest.approx(expect, rel=0.01)

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError):
            log_likelihood(np.array([[1.0, 2.0], [2.0, 1.0]]), np.zeros((1, 2)))


class TestJointCovarianceType:
    def test_rejects_asymmetric(self):
        S = np.eye(3)
        S[0, 1] = 0.5
        with pytest.raises(ValueError):
            JointCovariance(S)

    def test_block_accessors(self):
        rng = np.random.default_rng(14)
        m = random_model(rng, p=4, k=1)
        jc = joint_covariance(m)
        assert np.allclose(jc.sigma_x, m.base.covariance())
        assert np.allclose(jc.v, m.V)
        assert jc.omega == pytest.approx(m.omega)


class TestDataMatrix:
    def test_center_zeroes_columns(self):
        rng = np.random.default_rng(15)
        data = center(DataMatrix(X=rng.normal(2.0, 1.0, size=(30, 4))))
        assert np.abs(data.X.mean(axis=0)).max() < 1e-10

    def test_center_composes(self):
        rng = np.random.default_rng(16)
        raw = rng.normal(5.0, 1.0, size=(20, 3))
        once = center(DataMatrix(X=raw))
        twice = center(DataMatrix(X=once.X + 1.0, column_means=once.column_means - 1.0))
        assert np.allclose(twice.column_means, raw.mean(axis=0))
        assert np.allclose(raw - twice.column_means, twice.X)

    def test_labeled_defaults_from_nan(self):
        X = np.zeros((3, 2))
        data = DataMatrix(X=X, y=np.array([1.0, np.nan, 2.0]))
        assert data.labeled.tolist() == [True, False, True]
        assert data.n_labeled == 2
        Xl, yl = data.labeled_arrays()
        assert Xl.shape == (2, 2) and yl.tolist() == [1.0, 2.0]

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            DataMatrix(X=np.zeros((3, 2)), y=np.zeros(4))
        with pytest.raises(ValueError):
            DataMatrix(X=np.zeros((3, 2)), labeled=np.zeros(2, dtype=bool))
