"""Prediction on the augmented design [factor scores | standardized residuals].

Given a fitted factor posterior, each observation x is mapped to
``z = (f_hat, r)`` with ``r = Psi^{-1/2} (x - B f_hat)`` at the posterior
means of (B, Psi).  The response is then regressed on z with two ridge
penalties, one shared by the score block and one by the residual block.
Sending the residual penalty to infinity recovers plain factor regression;
making both penalties equal (with trivial loadings) recovers ordinary
ridge on x.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .gibbs import (FactorPosterior, FactorPriors, choose_k,
                    conditional_score_means, gibbs_factor)
from .model import DataMatrix, _as_matrix, _as_vector, center

DEFAULT_GRID = tuple(np.logspace(-3, 3, 13))
# Residual penalty used when the residual block is effectively switched off.
FACTOR_ONLY_PENALTY = 1e12


@dataclass
class AugmentedDesign:
    """n x (k + p) design whose first k columns are factor scores."""

    Z: np.ndarray
    k: int

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def p(self) -> int:
        return self.Z.shape[1] - self.k

    def score_block(self) -> np.ndarray:
        return self.Z[:, : self.k]

    def residual_block(self) -> np.ndarray:
        return self.Z[:, self.k :]


def augment(post: FactorPosterior, X) -> AugmentedDesign:
    """Build the augmented design for rows of ``X`` under a factor posterior.

    Rows that match a training row bitwise reuse that row's posterior-mean
    factor scores; any other row gets the plug-in conditional score mean
    under (mean_B, mean_Psi).  Residuals are standardized by sqrt(mean_Psi)
    in both cases.
    """
    if isinstance(X, DataMatrix):
        X = X.X
    X = _as_matrix(X, "X")
    if X.shape[1] != post.p:
        raise ValueError("X column count does not match the posterior")
    lookup = {post.train_X[i].tobytes(): i for i in range(post.train_X.shape[0])}
    scores = np.empty((X.shape[0], post.k))
    fresh = []
    for i in range(X.shape[0]):
        j = lookup.get(X[i].tobytes())
        if j is None:
            fresh.append(i)
        else:
            scores[i] = post.mean_F[j]
    if fresh:
        idx = np.asarray(fresh)
        scores[idx] = conditional_score_means(post.mean_B, post.mean_Psi, X[idx])
    resid = (X - scores @ post.mean_B.T) / np.sqrt(post.mean_Psi)
    return AugmentedDesign(Z=np.hstack([scores, resid]), k=post.k)


def _ridge_solve(Z: np.ndarray, y: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Solve (Z^t Z + diag(d)) gamma = Z^t y, using the dual form when wide.

    The dual form rewrites the solution as
    ``d^{-1} Z^t (Z diag(d)^{-1} Z^t + I_n)^{-1} y``, an exact identity that
    only ever factors an n x n matrix.
    """
    n, m = Z.shape
    if m <= n:
        G = Z.T @ Z
        G[np.diag_indices(m)] += d
        return cho_solve(cho_factor(G, lower=True), Z.T @ y)
    Zd = Z / d
    K = Zd @ Z.T
    K[np.diag_indices(n)] += 1.0
    alpha = cho_solve(cho_factor(K, lower=True), y)
    return Zd.T @ alpha


@dataclass
class PfrFit:
    """Fitted two-penalty ridge: coefficients plus the selection record."""

    gamma: np.ndarray
    k: int
    tau_f: float
    tau_r: float
    sigma2_hat: float
    cv_table: dict = field(default_factory=dict, repr=False)

    def predict_design(self, Z: AugmentedDesign) -> np.ndarray:
        if Z.Z.shape[1] != self.gamma.shape[0]:
            raise ValueError("design width does not match the fit")
        return Z.Z @ self.gamma


def two_penalty_ridge(Z: AugmentedDesign, y, tau_f: float, tau_r: float) -> PfrFit:
    """Ridge fit with separate penalties on the score and residual blocks."""
    y = _as_vector(y, "y")
    if y.shape[0] != Z.n:
        raise ValueError("y length does not match the design")
    if tau_f <= 0 or tau_r <= 0:
        raise ValueError("penalties must be strictly positive")
    d = np.concatenate([np.full(Z.k, float(tau_f)), np.full(Z.p, float(tau_r))])
    gamma = _ridge_solve(Z.Z, y, d)
    resid = y - Z.Z @ gamma
    # Effective degrees of freedom of the linear smoother, for the
    # variance estimate's denominator.
    if Z.Z.shape[1] <= Z.n:
        G = Z.Z.T @ Z.Z
        Gd = G.copy()
        Gd[np.diag_indices(Gd.shape[0])] += d
        df = float(np.trace(cho_solve(cho_factor(Gd, lower=True), G)))
    else:
        Zd = Z.Z / d
        K = Zd @ Z.Z.T
        K[np.diag_indices(Z.n)] += 1.0
        df = float(np.trace(cho_solve(cho_factor(K, lower=True), Zd @ Z.Z.T)))
    denom = max(Z.n - df, 1.0)
    sigma2_hat = float(resid @ resid) / denom
    return PfrFit(gamma=gamma, k=Z.k, tau_f=float(tau_f), tau_r=float(tau_r),
                  sigma2_hat=sigma2_hat)


def fold_indices(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Deterministic shuffled fold assignment used by every cross-validation."""
    if not 2 <= folds <= n:
        raise ValueError(f"folds must lie in [2, {n}] (got {folds})")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def cross_validate(Z: AugmentedDesign, y, grid_f, grid_r, folds: int = 10,
                   seed: int = 0) -> PfrFit:
    """Grid-search both penalties by K-fold CV, then refit on all rows.

    Grids are deduplicated and sorted ascending.  Mean squared held-out
    error decides; exact ties go to the larger (tau_f, tau_r) pair in
    lexicographic order, i.e. toward more shrinkage.
    """
    y = _as_vector(y, "y")
    grid_f = np.unique(np.asarray(grid_f, dtype=float))
    grid_r = np.unique(np.asarray(grid_r, dtype=float))
    if grid_f.size == 0 or grid_r.size == 0:
        raise ValueError("penalty grids must be non-empty")
    if np.any(grid_f <= 0) or np.any(grid_r <= 0):
        raise ValueError("penalties must be strictly positive")
    parts = fold_indices(Z.n, folds, seed)

    cv_table: dict[tuple[float, float], float] = {}
    best_err = np.inf
    best_pair = None
    for tf in grid_f:
        for tr in grid_r:
            d = np.concatenate([np.full(Z.k, tf), np.full(Z.p, tr)])
            errs = []
            for held in parts:
                mask = np.ones(Z.n, dtype=bool)
                mask[held] = False
                gamma = _ridge_solve(Z.Z[mask], y[mask], d)
                pred = Z.Z[held] @ gamma
                errs.append(float(np.mean((y[held] - pred) ** 2)))
            err = float(np.mean(errs))
            cv_table[(float(tf), float(tr))] = err
            if err <= best_err:
                best_err = err
                best_pair = (float(tf), float(tr))

    fit = two_penalty_ridge(Z, y, *best_pair)
    fit.cv_table = cv_table
    return fit


def predict(fit: PfrFit, post: FactorPosterior, X) -> np.ndarray:
    """Predict responses for new predictor rows (already centered)."""
    return fit.predict_design(augment(post, X))


@dataclass
class PfrPipeline:
    """Everything needed to predict from raw, uncentered predictors."""

    posterior: FactorPosterior
    fit: PfrFit
    column_means: np.ndarray
    y_mean: float

    @property
    def k(self) -> int:
        return self.fit.k

    def predict(self, X_raw) -> np.ndarray:
        if isinstance(X_raw, DataMatrix):
            X_raw = X_raw.X
        X_raw = _as_matrix(X_raw, "X")
        Xc = X_raw - self.column_means
        return predict(self.fit, self.posterior, Xc) + self.y_mean


def fit_pfr(data: DataMatrix, k: int | None = None, variance_fraction: float = 0.90,
            priors: FactorPriors | None = None, sweeps: int = 2000, burn: int = 1000,
            thin: int = 1, folds: int = 10, grid_f=DEFAULT_GRID, grid_r=DEFAULT_GRID,
            seed: int = 0, factor_only: bool = False,
            posterior: FactorPosterior | None = None) -> PfrPipeline:
    """Full pipeline: center, sample the factor model, augment, cross-validate.

    The factor model uses every row of ``data`` (labeled or not); the
    penalized regression uses the labeled rows only.  ``factor_only``
    reduces the fit to plain Bayesian factor regression: the residual
    penalty is pinned large enough to zero that block out and the score
    penalty is pinned at 1, the unit normal prior on factor coefficients,
    with no tuning.  An already-sampled ``posterior`` for the same data
    may be passed in to skip the sampling step (useful when refitting
    with other penalties).
    """
    if data.n_labeled < 2:
        raise ValueError("need at least two labeled rows")
    centered = center(data)
    X_lab, y_lab = centered.labeled_arrays()
    y_mean = float(y_lab.mean())
    if posterior is not None:
        if posterior.p != centered.p:
            raise ValueError("posterior does not match the data dimension")
        post = posterior
        k = post.k
    else:
        if k is None:
            k = choose_k(centered.X, variance_fraction)
        post = gibbs_factor(centered.X, k, priors=priors, sweeps=sweeps, burn=burn,
                            thin=thin, seed=seed, keep_draws=False)
    Z = augment(post, X_lab)
    if factor_only:
        grid_f = (1.0,)
        grid_r = (FACTOR_ONLY_PENALTY,)
    fit = cross_validate(Z, y_lab - y_mean, grid_f, grid_r,
                         folds=min(folds, data.n_labeled), seed=seed)
    return PfrPipeline(posterior=post, fit=fit,
                       column_means=centered.column_means, y_mean=y_mean)
