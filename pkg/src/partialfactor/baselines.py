"""Reference regression estimators the factor machinery is compared against.

Everything here is a plain linear-in-x procedure: classical ridge, the
shrunk least-squares g-prior posterior mean, ridge toward a general
covariance (the conjugate-prior closed form), marginal-likelihood-averaged
ridge under an inverse-gamma prior on the penalty scale, principal
components regression, partial least squares, and least angle regression.
All fitters expect centered inputs and fit no intercept.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.special import gammaln, logsumexp

from .model import _as_matrix, _as_vector, chol_pd

# Singular values below rcond * s_max are treated as zero in pseudo-inverse
# work, matching the tolerance used for g-prior least squares.
LSTSQ_RCOND = 1e-10

NIG_TAU_GRID = tuple(np.logspace(-3, 3, 21))


@dataclass
class LinearFit:
    """Coefficient vector plus a record of how it was tuned."""

    beta: np.ndarray
    method: str
    tuning: dict = field(default_factory=dict)

    def predict(self, X) -> np.ndarray:
        X = _as_matrix(X, "X")
        return X @ self.beta


def _check_xy(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = _as_matrix(X, "X")
    y = _as_vector(y, "y")
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y disagree on the number of rows")
    return X, y


def ridge_estimator(X, y, tau: float) -> np.ndarray:
    """Solve (X^t X + tau I) beta = X^t y.

    ``tau = 0`` is permitted only when X^t X is invertible; a singular
    Gram matrix then raises.
    """
    X, y = _check_xy(X, y)
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    G = X.T @ X
    G[np.diag_indices(G.shape[0])] += tau
    try:
        factor = cho_factor(G, lower=True)
    except np.linalg.LinAlgError as exc:
        raise ValueError("X^t X + tau I is rank deficient; increase tau") from exc
    return cho_solve(factor, X.T @ y)


def gprior_estimator(X, y, g: float) -> np.ndarray:
    """Posterior mean under Zellner's g-prior: least squares shrunk by 1/(1+g).

    Rank-deficient designs fall back to the minimum-norm least squares
    solution (pseudo-inverse with relative cutoff 1e-10).
    """
    X, y = _check_xy(X, y)
    if g < 0:
        raise ValueError("g must be nonnegative")
    beta_ls = np.linalg.lstsq(X, y, rcond=LSTSQ_RCOND)[0]
    return beta_ls / (1.0 + g)


def covariance_ridge(X, y, Sigma_X, V0, tau: float) -> np.ndarray:
    """Ridge toward a full covariance: solve (X^t X + tau Sigma_X) b = X^t y + tau V0.

    This is the conditional posterior mean of the regression coefficients
    when the prior is centered at ``Sigma_X^{-1} V0`` with precision
    proportional to ``Sigma_X``; the noise scale cancels from the mean.
    """
    X, y = _check_xy(X, y)
    Sigma_X = _as_matrix(Sigma_X, "Sigma_X")
    V0 = _as_vector(V0, "V0")
    if tau <= 0:
        raise ValueError("tau must be strictly positive")
    chol_pd(Sigma_X, "Sigma_X")
    G = X.T @ X + tau * Sigma_X
    rhs = X.T @ y + tau * V0
    return cho_solve(cho_factor(G, lower=True), rhs)


def whiten_equivalence_check(X, y, Sigma_X, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Covariance ridge computed directly and via whitening; both returned.

    With ``C`` the lower Cholesky factor of ``Sigma_X``, regressing y on the
    whitened design ``X C^{-t}`` with an ordinary ridge penalty and mapping
    the coefficients back through ``C^{-t}`` must reproduce the direct
    solve with a zero prior center.
    """
    X, y = _check_xy(X, y)
    Sigma_X = _as_matrix(Sigma_X, "Sigma_X")
    direct = covariance_ridge(X, y, Sigma_X, np.zeros(X.shape[1]), tau)
    C = chol_pd(Sigma_X, "Sigma_X")
    Xw = solve_triangular(C, X.T, lower=True).T
    alpha = ridge_estimator(Xw, y, tau)
    mapped = solve_triangular(C, alpha, lower=True, trans="T")
    return direct, mapped


def nig_regression(X, y, a: float = 1.0, b: float = 1.0,
                   tau_grid=NIG_TAU_GRID) -> LinearFit:
    """Ridge averaged over the penalty under an inverse-gamma prior scale.

    The prior treats the coefficient scale ``tau`` as unknown with an
    IG(a, b)-style weighting discretized onto ``tau_grid``; each grid point
    contributes its conjugate marginal likelihood
    ``m(y | tau) propto b^a Gamma(a + n/2) / Gamma(a) * |M|^{-1/2}
    (b + y^t M^{-1} y / 2)^{-(a + n/2)}`` with ``M = I + X X^t / tau``,
    and the returned coefficients are the weighted average of the per-tau
    ridge posterior means.  A single-point grid reduces exactly to
    :func:`ridge_estimator` at that penalty.
    """
    X, y = _check_xy(X, y)
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be strictly positive")
    taus = np.unique(np.asarray(tau_grid, dtype=float))
    if taus.size == 0 or np.any(taus <= 0):
        raise ValueError("tau_grid must contain strictly positive values")
    n = X.shape[0]

    # One symmetric eigendecomposition of X X^t serves every grid point:
    # both the marginal likelihood of M = I + X X^t / tau and the dual-form
    # ridge mean X^t (X X^t + tau I)^{-1} y are spectral functions of it.
    K = X @ X.T
    evals, Q = np.linalg.eigh(K)
    evals = np.maximum(evals, 0.0)
    qty = Q.T @ y

    log_weights = np.empty(taus.size)
    betas = np.empty((taus.size, X.shape[1]))
    const = a * np.log(b) + gammaln(a + 0.5 * n) - gammaln(a) - 0.5 * n * np.log(2 * np.pi)
    for i, tau in enumerate(taus):
        logdet = float(np.sum(np.log1p(evals / tau)))
        quad = float(np.sum(qty**2 / (1.0 + evals / tau)))
        log_weights[i] = const - 0.5 * logdet - (a + 0.5 * n) * np.log(b + 0.5 * quad)
        betas[i] = X.T @ (Q @ (qty / (evals + tau)))
    weights = np.exp(log_weights - logsumexp(log_weights))
    beta = weights @ betas
    return LinearFit(beta=beta, method="nig",
                     tuning={"a": a, "b": b, "tau_grid": taus,
                             "weights": weights})


def pcr(X, y, components: int) -> LinearFit:
    """Least squares on the top principal component scores of X."""
    X, y = _check_xy(X, y)
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    rank = int(np.sum(s > LSTSQ_RCOND * s[0])) if s.size else 0
    if not 1 <= components <= rank:
        raise ValueError(f"components must lie in [1, rank(X)={rank}]")
    coefs = (U[:, :components].T @ y) / s[:components]
    beta = Vt[:components].T @ coefs
    return LinearFit(beta=beta, method="pcr", tuning={"components": components})


def pls(X, y, components: int) -> LinearFit:
    """Univariate partial least squares (NIPALS) with deflation of X.

    Stops early, with a warning and ``status = "early_stop"`` recorded in
    the tuning map, once the residual covariance direction degenerates;
    the coefficients then use the components extracted so far.
    """
    X, y = _check_xy(X, y)
    if components < 1:
        raise ValueError("components must be at least 1")
    if components > min(X.shape):
        raise ValueError("components exceeds min(n, p)")
    Xd = X.copy()
    W = np.zeros((X.shape[1], components))
    P = np.zeros((X.shape[1], components))
    q = np.zeros(components)
    norm0 = float(np.linalg.norm(X.T @ y))
    used = 0
    status = "ok"
    for c in range(components):
        w = Xd.T @ y
        wn = float(np.linalg.norm(w))
        if wn <= 1e-12 * max(1.0, norm0):
            status = "early_stop"
            break
        w /= wn
        t = Xd @ w
        tt = float(t @ t)
        if tt <= 1e-24 * max(1.0, norm0):
            status = "early_stop"
            break
        P[:, c] = Xd.T @ t / tt
        q[c] = float(t @ y) / tt
        W[:, c] = w
        Xd = Xd - np.outer(t, P[:, c])
        used += 1
    if status == "early_stop":
        warnings.warn(f"PLS stopped after {used} of {components} components",
                      RuntimeWarning, stacklevel=2)
    if used == 0:
        beta = np.zeros(X.shape[1])
    else:
        Wu, Pu, qu = W[:, :used], P[:, :used], q[:used]
        beta = Wu @ np.linalg.solve(Pu.T @ Wu, qu)
    return LinearFit(beta=beta, method="pls",
                     tuning={"components": used, "status": status})


def lars(X, y, steps: int) -> LinearFit:
    """Least angle regression; returns the coefficients after ``steps`` moves.

    Each step admits the predictor most correlated with the residual and
    advances along the equiangular direction until a new predictor ties.
    The path stops on its own once residual correlations vanish (the active
    set then solves least squares) or the active Gram matrix degenerates.
    """
    X, y = _check_xy(X, y)
    if steps < 1:
        raise ValueError("steps must be at least 1")
    n, p = X.shape
    beta = np.zeros(p)
    mu = np.zeros(n)
    active: list[int] = []
    tol = 1e-10 * max(1.0, float(np.abs(X.T @ y).max()))
    taken = 0
    for _ in range(steps):
        c = X.T @ (y - mu)
        c_abs = np.abs(c)
        if active:
            c_abs[active] = -np.inf
        if len(active) == p:
            break
        j_new = int(np.argmax(c_abs))
        if np.abs(c[j_new]) < tol and active:
            break
        active.append(j_new)
        signs = np.sign(c[active])
        signs[signs == 0] = 1.0
        Xa = X[:, active] * signs
        G = Xa.T @ Xa
        try:
            factor = cho_factor(G, lower=True)
        except np.linalg.LinAlgError:
            active.pop()
            break
        ones = np.ones(len(active))
        Ginv1 = cho_solve(factor, ones)
        denom = float(ones @ Ginv1)
        if denom <= 0:
            active.pop()
            break
        A = 1.0 / np.sqrt(denom)
        w = A * Ginv1
        u = Xa @ w
        C = float(np.abs(c[active]).max())
        a_corr = X.T @ u
        gamma = C / A
        inactive = [j for j in range(p) if j not in active]
        for j in inactive:
            for cand in ((C - c[j]) / (A - a_corr[j]), (C + c[j]) / (A + a_corr[j])):
                if tol < cand < gamma:
                    gamma = float(cand)
        beta_step = np.zeros(p)
        beta_step[active] = gamma * w * signs
        beta += beta_step
        mu += gamma * u
        taken += 1
        if float(np.abs(X.T @ (y - mu)).max()) < tol:
            break
    return LinearFit(beta=beta, method="lars", tuning={"steps": taken})
