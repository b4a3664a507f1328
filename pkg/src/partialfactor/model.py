"""Exact Gaussian algebra for factor and partial factor models.

A k-factor model describes a p-dimensional predictor vector as
``x = B f + noise`` with ``f ~ N(0, I_k)`` and diagonal noise covariance
``Psi``, so that ``cov(x) = B B^t + diag(Psi)``.  The partial factor model
couples a scalar response to the predictors through an unrestricted
cross-covariance row ``V``, keeping the factor structure on the predictor
block only.  Everything in this module is closed-form linear algebra:
covariance assembly, Gaussian conditioning, implied regression
coefficients, joint sampling, and log-likelihoods.

Data is stored row-per-observation (n x p) throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

# Relative pivot floor for the positive-definiteness check.
PD_PIVOT_RTOL = 1e-12


def _as_matrix(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got shape {a.shape}")
    return a


def _as_vector(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 1:
        raise ValueError(f"{name} must be a 1-d array, got shape {a.shape}")
    return a


def chol_pd(S: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor of ``S``, raising ValueError if not PD.

    A matrix passes when the Cholesky factorization of its symmetrized
    form succeeds and the smallest pivot exceeds ``PD_PIVOT_RTOL`` times
    the largest pivot.
    """
    S = _as_matrix(S, name)
    Ssym = 0.5 * (S + S.T)
    try:
        L = np.linalg.cholesky(Ssym)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{name} is not positive definite") from exc
    pivots = np.diag(L) ** 2
    if pivots.min() <= PD_PIVOT_RTOL * pivots.max():
        raise ValueError(f"{name} is numerically singular")
    return L


def marginal_covariance(B, Psi) -> np.ndarray:
    """Predictor covariance ``B B^t + diag(Psi)`` implied by a factor model.

    Parameters
    ----------
    B : array (p, k)
        Factor loadings.
    Psi : array (p,)
        Strictly positive idiosyncratic variances.
    """
    B = _as_matrix(B, "B")
    Psi = _as_vector(Psi, "Psi")
    if B.shape[0] != Psi.shape[0]:
        raise ValueError("B and Psi disagree on the number of variables")
    if np.any(Psi <= 0):
        raise ValueError("Psi entries must be strictly positive")
    S = B @ B.T
    S[np.diag_indices_from(S)] += Psi
    return 0.5 * (S + S.T)


@dataclass
class FactorModel:
    """Marginal predictor law: loadings ``B`` (p x k) and variances ``Psi`` (p,)."""

    B: np.ndarray
    Psi: np.ndarray

    def __post_init__(self):
        self.B = _as_matrix(self.B, "B")
        self.Psi = _as_vector(self.Psi, "Psi")
        if self.B.shape[0] != self.Psi.shape[0]:
            raise ValueError("B and Psi disagree on the number of variables")
        if self.k > self.p:
            raise ValueError(f"more factors ({self.k}) than variables ({self.p})")
        if np.any(self.Psi <= 0):
            raise ValueError("Psi entries must be strictly positive")
        if not (np.all(np.isfinite(self.B)) and np.all(np.isfinite(self.Psi))):
            raise ValueError("non-finite model parameters")

    @property
    def p(self) -> int:
        return self.B.shape[0]

    @property
    def k(self) -> int:
        return self.B.shape[1]

    def covariance(self) -> np.ndarray:
        """Implied predictor covariance ``B B^t + diag(Psi)``."""
        return marginal_covariance(self.B, self.Psi)


@dataclass
class PartialFactorModel:
    """Joint (X, Y) Gaussian with factor-structured predictor block.

    The predictor block of the joint covariance is ``B B^t + diag(Psi)``;
    the cross-covariance row ``V = cov(Y, X)`` is unrestricted.  ``theta``
    collects the regression coefficients of Y on the latent factors,
    ``omega = var(Y)`` and ``sigma2 = var(Y | X, f)``.  The residual
    variance is determined by the other parameters,

        sigma2 = omega - theta theta^t - (V - theta B^t) Psi^{-1} (V - theta B^t)^t,

    and the constructor validates that identity.
    """

    base: FactorModel
    theta: np.ndarray
    V: np.ndarray
    sigma2: float
    omega: float

    def __post_init__(self):
        self.theta = _as_vector(self.theta, "theta")
        self.V = _as_vector(self.V, "V")
        if self.theta.shape[0] != self.base.k:
            raise ValueError("theta length must equal the number of factors")
        if self.V.shape[0] != self.base.p:
            raise ValueError("V length must equal the number of predictors")
        implied = residual_variance(self.base, self.theta, self.V, self.omega)
        if implied <= 0:
            raise ValueError(
                "model is inconsistent: implied conditional variance "
                f"{implied:.3e} is not positive"
            )
        if not np.isclose(self.sigma2, implied, rtol=1e-8, atol=1e-12):
            raise ValueError(
                f"sigma2={self.sigma2!r} does not match the value {implied!r} "
                "implied by (B, Psi, theta, V, omega)"
            )

    @property
    def p(self) -> int:
        return self.base.p

    @property
    def k(self) -> int:
        return self.base.k

    @classmethod
    def from_omega(cls, base: FactorModel, theta, V, omega: float) -> "PartialFactorModel":
        """Build a model from the marginal response variance ``omega``."""
        theta = _as_vector(theta, "theta")
        V = _as_vector(V, "V")
        sigma2 = residual_variance(base, theta, V, omega)
        if sigma2 <= 0:
            raise ValueError(
                f"omega={omega} leaves no residual variance (implied {sigma2:.3e})"
            )
        return cls(base=base, theta=theta, V=V, sigma2=sigma2, omega=omega)

    @classmethod
    def pure_factor(cls, base: FactorModel, theta, sigma2: float) -> "PartialFactorModel":
        """Pure factor regression: ``V = theta B^t`` and ``omega = sigma2 + theta theta^t``."""
        theta = _as_vector(theta, "theta")
        if sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        V = theta @ base.B.T
        omega = sigma2 + float(theta @ theta)
        return cls(base=base, theta=theta, V=V, sigma2=sigma2, omega=omega)


def residual_variance(base: FactorModel, theta, V, omega: float) -> float:
    """Conditional variance var(Y | X, f) implied by the joint covariance.

    Equivalent to ``omega - [V theta] Sigma_{X,f}^{-1} [V theta]^t`` where
    Sigma_{X,f} is the (p+k) covariance of the predictors and factors;
    computed through the independent (factors, scaled noise) coordinates.
    """
    lam = (V - theta @ base.B.T) / np.sqrt(base.Psi)
    return float(omega - theta @ theta - lam @ lam)


@dataclass
class JointCovariance:
    """(p+1) x (p+1) covariance of (X, Y): ``[[Sigma_X, V^t], [V, omega]]``."""

    Sigma: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.Sigma = _as_matrix(self.Sigma, "Sigma")
        if self.Sigma.shape[0] != self.Sigma.shape[1]:
            raise ValueError("joint covariance must be square")
        if not np.allclose(self.Sigma, self.Sigma.T, atol=1e-12):
            raise ValueError("joint covariance must be symmetric")
        chol_pd(self.Sigma, "joint covariance")

    @property
    def p(self) -> int:
        return self.Sigma.shape[0] - 1

    @property
    def sigma_x(self) -> np.ndarray:
        return self.Sigma[: self.p, : self.p]

    @property
    def v(self) -> np.ndarray:
        return self.Sigma[self.p, : self.p]

    @property
    def omega(self) -> float:
        return float(self.Sigma[self.p, self.p])


def joint_covariance(m: PartialFactorModel) -> JointCovariance:
    """Assemble the (p+1) x (p+1) covariance of (X, Y)."""
    p = m.p
    S = np.empty((p + 1, p + 1))
    S[:p, :p] = m.base.covariance()
    S[p, :p] = m.V
    S[:p, p] = m.V
    S[p, p] = m.omega
    return JointCovariance(S)


def full_covariance(m: PartialFactorModel) -> np.ndarray:
    """Assemble the (p+k+1) x (p+k+1) covariance of (X, f, Y).

    Block layout::

        [ B B^t + Psi   B     V^t   ]
        [ B^t           I_k   theta^t ]
        [ V             theta omega ]

    Raises ValueError when the assembled matrix is not positive
    semi-definite, which signals inconsistent model parameters.
    """
    p, k = m.p, m.k
    n = p + k + 1
    S = np.empty((n, n))
    S[:p, :p] = m.base.covariance()
    S[:p, p : p + k] = m.base.B
    S[p : p + k, :p] = m.base.B.T
    S[p : p + k, p : p + k] = np.eye(k)
    S[:p, -1] = m.V
    S[-1, :p] = m.V
    S[p : p + k, -1] = m.theta
    S[-1, p : p + k] = m.theta
    S[-1, -1] = m.omega
    eigmin = np.linalg.eigvalsh(S).min()
    if eigmin < -1e-10 * max(1.0, np.abs(S).max()):
        raise ValueError(
            f"model is inconsistent: joint (X, f, Y) covariance has a negative "
            f"eigenvalue {eigmin:.3e}"
        )
    return S


def conditional_moments(m: PartialFactorModel, f, x) -> tuple[float, float]:
    """Mean and variance of Y given the factors and predictors.

    The mean is ``theta f + (V - theta B^t) Psi^{-1/2} . Psi^{-1/2}(x - B f)``;
    the variance is the constant residual variance sigma2.
    """
    f = _as_vector(f, "f")
    x = _as_vector(x, "x")
    if f.shape[0] != m.k or x.shape[0] != m.p:
        raise ValueError("f or x has the wrong length")
    root = np.sqrt(m.base.Psi)
    lam = (m.V - m.theta @ m.base.B.T) / root
    mean = float(m.theta @ f + lam @ ((x - m.base.B @ f) / root))
    return mean, m.sigma2


def implied_beta(m: PartialFactorModel) -> np.ndarray:
    """Coefficients of the conditional regression E(Y | X = x) = beta^t x.

    Solves ``Sigma_X beta = V^t`` so that ``beta = V Sigma_X^{-1}``.
    """
    Sx = m.base.covariance()
    factor = cho_factor(Sx, lower=True)
    return cho_solve(factor, m.V)


def sample_joint(m: PartialFactorModel, n: int, seed) -> "DataMatrix":
    """Draw ``n`` i.i.d. joint (X, Y) observations, deterministic given seed.

    Sampling follows the generative form: factors, then idiosyncratic
    noise, then the response from its exact conditional given (X, f).
    ``seed`` may be anything ``np.random.default_rng`` accepts, including
    an existing Generator whose stream should be continued.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    B, Psi = m.base.B, m.base.Psi
    F = rng.standard_normal((n, m.k))
    noise = rng.standard_normal((n, m.p)) * np.sqrt(Psi)
    X = F @ B.T + noise
    lam = (m.V - m.theta @ B.T) / np.sqrt(Psi)
    mean_y = F @ m.theta + (noise / np.sqrt(Psi)) @ lam
    y = mean_y + np.sqrt(m.sigma2) * rng.standard_normal(n)
    return DataMatrix(X=X, y=y)


def log_likelihood(Sigma, X) -> float:
    """Total zero-mean Gaussian log-density of the rows of ``X`` under ``Sigma``."""
    Sigma = _as_matrix(Sigma, "Sigma")
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    n, d = X.shape
    if Sigma.shape != (d, d):
        raise ValueError("Sigma and X disagree on dimension")
    L = chol_pd(Sigma, "Sigma")
    half = solve_triangular(L, X.T, lower=True)
    quad = float(np.sum(half**2))
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return -0.5 * (n * d * np.log(2.0 * np.pi) + n * logdet + quad)


@dataclass
class DataMatrix:
    """An n x p predictor matrix with an optional, possibly partial, response.

    ``y`` may contain NaN on rows whose response is unobserved; ``labeled``
    is the boolean mask of rows with an observed response.  ``column_means``
    records the shift applied by :func:`center` so the same statistics can
    be applied to future rows.
    """

    X: np.ndarray
    y: np.ndarray | None = None
    labeled: np.ndarray | None = None
    column_means: np.ndarray | None = None

    def __post_init__(self):
        self.X = _as_matrix(self.X, "X")
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=float)
            if self.y.shape != (self.X.shape[0],):
                raise ValueError("y must have one entry per row of X")
        if self.labeled is None:
            if self.y is None:
                self.labeled = np.zeros(self.X.shape[0], dtype=bool)
            else:
                self.labeled = ~np.isnan(self.y)
        else:
            self.labeled = np.asarray(self.labeled, dtype=bool)
            if self.labeled.shape != (self.X.shape[0],):
                raise ValueError("labeled mask must have one entry per row of X")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def n_labeled(self) -> int:
        return int(self.labeled.sum())

    def labeled_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, y) restricted to rows with an observed response."""
        if self.y is None:
            raise ValueError("data matrix has no response")
        return self.X[self.labeled], self.y[self.labeled]


def center(data: DataMatrix) -> DataMatrix:
    """Center the predictor columns to mean zero, recording the shift.

    Composes with any previous centering: the stored ``column_means``
    always map raw coordinates to the current ones.
    """
    means = data.X.mean(axis=0)
    total = means if data.column_means is None else data.column_means + means
    return DataMatrix(
        X=data.X - means,
        y=None if data.y is None else data.y.copy(),
        labeled=data.labeled.copy(),
        column_means=total,
    )
