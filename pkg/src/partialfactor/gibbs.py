"""Gibbs sampler for the Bayesian factor model on centered predictors.

The model is ``x_i = B f_i + noise_i`` with ``f_i ~ N(0, I_k)`` and
``noise ~ N(0, diag(Psi))``.  Priors: hierarchical normals on the loadings,
``b_jg | psi_j, xi_g ~ N(0, psi_j / xi_g)``, gamma hyperpriors on the column
precisions ``xi_g``, and inverse-gamma priors on the idiosyncratic
variances ``psi_j``.  All full conditionals are conjugate.

Rotational invariance is pinned down (by default) with a lower-triangular
loadings matrix whose diagonal is kept nonnegative by sign-folding each
sweep; the folding map flips a loadings column together with its factor
score column, which leaves the posterior invariant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .model import DataMatrix, _as_matrix, _as_vector

CONSTRAINTS = ("triangular", "sign", "none")

# Tolerance for the "columns centered" precondition.
CENTERED_ATOL = 1e-8


@dataclass(frozen=True)
class FactorPriors:
    """Hyperparameters for the loadings / variance hierarchy.

    ``xi_shape, xi_rate``: gamma hyperprior on each column precision xi_g.
    ``psi_shape, psi_rate``: inverse-gamma prior on each psi_j.
    """

    xi_shape: float = 2.0
    xi_rate: float = 2.0
    psi_shape: float = 2.0
    psi_rate: float = 0.2

    def __post_init__(self):
        for name in ("xi_shape", "xi_rate", "psi_shape", "psi_rate"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass
class FactorPosterior:
    """Retained Gibbs draws and posterior-mean summaries.

    ``draws_B``, ``draws_Psi``, ``draws_F`` stack the retained states along
    axis 0 (empty arrays when draw storage is disabled).  ``train_X`` keeps
    the training design so downstream consumers can match rows against it.
    """

    mean_B: np.ndarray
    mean_Psi: np.ndarray
    mean_F: np.ndarray
    draws_B: np.ndarray
    draws_Psi: np.ndarray
    draws_F: np.ndarray
    n_burn: int
    n_keep: int
    thin: int
    train_X: np.ndarray = field(repr=False)
    constraint: str = "triangular"

    @property
    def p(self) -> int:
        return self.mean_B.shape[0]

    @property
    def k(self) -> int:
        return self.mean_B.shape[1]

    def fingerprint(self) -> str:
        """Short content-derived identifier for this posterior."""
        import hashlib

        h = hashlib.sha1()
        h.update(self.mean_B.tobytes())
        h.update(self.mean_Psi.tobytes())
        return h.hexdigest()[:12]


def factor_score_conditional(B, Psi, x) -> tuple[np.ndarray, np.ndarray]:
    """Exact conditional law of the factor scores given one observation.

    Returns ``(mean, covariance)`` with
    ``covariance = (I_k + B^t Psi^{-1} B)^{-1}`` and
    ``mean = covariance B^t Psi^{-1} x``.
    """
    B = _as_matrix(B, "B")
    Psi = _as_vector(Psi, "Psi")
    x = _as_vector(x, "x")
    if np.any(Psi <= 0):
        raise ValueError("Psi entries must be strictly positive")
    k = B.shape[1]
    BtP = B.T / Psi
    M = np.eye(k) + BtP @ B
    cov = np.linalg.inv(M)
    cov = 0.5 * (cov + cov.T)
    mean = cov @ (BtP @ x)
    return mean, cov


def conditional_score_means(B, Psi, X) -> np.ndarray:
    """Row-wise conditional factor-score means for a batch of observations."""
    B = _as_matrix(B, "B")
    Psi = _as_vector(Psi, "Psi")
    X = _as_matrix(X, "X")
    k = B.shape[1]
    BtP = B.T / Psi
    M = np.eye(k) + BtP @ B
    return np.linalg.solve(M, BtP @ X.T).T


def choose_k(X, variance_fraction: float) -> int:
    """Smallest k whose top singular values carry the requested variance share.

    Works on squared singular values of the (centered) design matrix.
    """
    if isinstance(X, DataMatrix):
        X = X.X
    X = _as_matrix(X, "X")
    if not 0 < variance_fraction <= 1:
        raise ValueError("variance_fraction must lie in (0, 1]")
    s2 = np.linalg.svd(X, compute_uv=False) ** 2
    total = s2.sum()
    if total <= 0:
        raise ValueError("design matrix is identically zero")
    cum = np.cumsum(s2) / total
    return int(np.argmax(cum >= variance_fraction - 1e-12)) + 1


def initial_loadings(X, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic SVD-based starting state (B, Psi, F) for the chain."""
    X = _as_matrix(X, "X")
    n = X.shape[0]
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    B = Vt[:k].T * (s[:k] / np.sqrt(n))
    F = U[:, :k] * np.sqrt(n)
    resid = X - F @ B.T
    Psi = np.maximum(np.mean(resid**2, axis=0), 1e-8 * max(1.0, float(np.var(X))))
    return B, Psi, F


@dataclass
class GibbsState:
    """Current chain state; mutated in place by :func:`gibbs_sweep`."""

    B: np.ndarray
    Psi: np.ndarray
    xi: np.ndarray
    F: np.ndarray


def _triangular_free_counts(p: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Free-loading counts per row and per column under the triangular scheme."""
    row_free = np.minimum(np.arange(p) + 1, k)
    col_free = p - np.arange(k)
    return row_free, col_free


def _free_counts(p: int, k: int, constraint: str) -> tuple[np.ndarray, np.ndarray]:
    if constraint == "triangular":
        return _triangular_free_counts(p, k)
    return np.full(p, k), np.full(k, p)


def _apply_triangular_rotation(B: np.ndarray, F: np.ndarray) -> None:
    """Rotate (B, F) in place so the leading k x k block of B is lower triangular."""
    k = B.shape[1]
    T = B[:k, :]
    Q, _ = np.linalg.qr(T.T)
    B[:] = B @ Q
    F[:] = F @ Q
    B[np.triu_indices(min(k, B.shape[0]), k=1, m=k)] = 0.0


def fold_signs(state: GibbsState, theta: np.ndarray | None = None) -> None:
    """Flip loadings/score column pairs so diagonal loadings are nonnegative."""
    k = state.B.shape[1]
    for g in range(min(k, state.B.shape[0])):
        if state.B[g, g] < 0:
            state.B[:, g] *= -1
            state.F[:, g] *= -1
            if theta is not None:
                theta[g] *= -1


def draw_scores(X, B, Psi, rng) -> np.ndarray:
    """One draw of all factor-score rows from their shared full conditional."""
    k = B.shape[1]
    BtP = B.T / Psi
    M = np.eye(k) + BtP @ B
    L = np.linalg.cholesky(M)
    mean = cho_solve((L, True), BtP @ X.T).T
    z = rng.standard_normal((X.shape[0], k))
    noise = solve_triangular(L, z.T, lower=True, trans="T").T
    return mean + noise


def gibbs_sweep(state: GibbsState, X: np.ndarray, priors: FactorPriors, rng,
                constraint: str = "triangular") -> None:
    """One full scan of the conjugate conditionals, in place.

    Update order: scores, loadings rows, idiosyncratic variances, column
    precisions, then the sign fold.  Exposed so validation harnesses can
    drive the exact transition kernel used by :func:`gibbs_factor`.
    """
    n, p = X.shape
    k = state.B.shape[1]
    row_free, col_free = _free_counts(p, k, constraint)

    state.F = draw_scores(X, state.B, state.Psi, rng)
    F = state.F

    P = F.T @ F + np.diag(state.xi)
    LP = np.linalg.cholesky(P)
    if constraint == "triangular":
        # Leading rows have truncated support; the leading sub-blocks of LP
        # are exactly the Cholesky factors of the corresponding sub-blocks of P.
        for j in range(min(k - 1, p)):
            m = j + 1
            Lj = LP[:m, :m]
            rhs = F[:, :m].T @ X[:, j]
            mean_j = cho_solve((Lj, True), rhs)
            noise_j = solve_triangular(Lj, rng.standard_normal(m), lower=True, trans="T")
            state.B[j, :m] = mean_j + np.sqrt(state.Psi[j]) * noise_j
            state.B[j, m:] = 0.0
        start = min(k - 1, p)
    else:
        start = 0
    if start < p:
        rhs = F.T @ X[:, start:]
        mean_rows = cho_solve((LP, True), rhs).T
        z = rng.standard_normal((p - start, k))
        noise_rows = solve_triangular(LP, z.T, lower=True, trans="T").T
        state.B[start:] = mean_rows + np.sqrt(state.Psi[start:])[:, None] * noise_rows

    resid = X - F @ state.B.T
    ssr = np.sum(resid**2, axis=0)
    prior_quad = (state.B**2) @ state.xi
    shape = priors.psi_shape + 0.5 * n + 0.5 * row_free
    rate = priors.psi_rate + 0.5 * ssr + 0.5 * prior_quad
    state.Psi = rate / rng.gamma(shape)

    col_quad = np.sum(state.B**2 / state.Psi[:, None], axis=0)
    xi_shape = priors.xi_shape + 0.5 * col_free
    xi_rate = priors.xi_rate + 0.5 * col_quad
    state.xi = rng.gamma(xi_shape) / xi_rate

    if constraint in ("triangular", "sign"):
        fold_signs(state)


def prior_draw(n: int, p: int, k: int, priors: FactorPriors, rng,
               constraint: str = "triangular") -> GibbsState:
    """One exact draw of (B, Psi, xi, F) from the prior, constraint applied."""
    xi = rng.gamma(priors.xi_shape, size=k) / priors.xi_rate
    Psi = priors.psi_rate / rng.gamma(priors.psi_shape, size=p)
    B = rng.standard_normal((p, k)) * np.sqrt(Psi[:, None] / xi)
    if constraint == "triangular":
        B[np.triu_indices(min(k, p), k=1, m=k)] = 0.0
    F = rng.standard_normal((n, k))
    state = GibbsState(B=B, Psi=Psi, xi=xi, F=F)
    if constraint in ("triangular", "sign"):
        fold_signs(state)
    return state


def gibbs_factor(X, k: int, priors: FactorPriors | None = None, sweeps: int = 2000,
                 burn: int = 1000, thin: int = 1, seed: int = 0,
                 constraint: str = "triangular", keep_draws: bool = True) -> FactorPosterior:
    """Run the factor-model Gibbs sampler on a centered design.

    Parameters
    ----------
    X : DataMatrix or array (n, p)
        Centered predictors; every row participates (the factor model is
        fit to the marginal predictor distribution, labels play no role).
    k : int
        Number of latent factors, 1 <= k <= n.
    priors : FactorPriors, optional
    sweeps, burn, thin : int
        Total sweeps, discarded prefix, and retention stride.
    seed : int
        Chain seed; identical seeds give bitwise-identical output.
    constraint : {"triangular", "sign", "none"}
        Identification scheme applied during sampling.

    Returns
    -------
    FactorPosterior
    """
    if isinstance(X, DataMatrix):
        X = X.X
    X = _as_matrix(X, "X")
    n, p = X.shape
    if not 1 <= k <= n:
        raise ValueError(f"k must satisfy 1 <= k <= n (got k={k}, n={n})")
    if constraint not in CONSTRAINTS:
        raise ValueError(f"unknown constraint {constraint!r}")
    scale = max(1.0, float(np.abs(X).max()))
    if np.abs(X.mean(axis=0)).max() > CENTERED_ATOL * scale:
        raise ValueError("X must be column-centered; call model.center first")
    if not (sweeps > burn >= 0 and thin >= 1):
        raise ValueError("need sweeps > burn >= 0 and thin >= 1")
    priors = priors or FactorPriors()

    rng = np.random.default_rng(seed)
    B0, Psi0, F0 = initial_loadings(X, k)
    B0, F0 = B0.copy(), F0.copy()
    if constraint == "triangular":
        _apply_triangular_rotation(B0, F0)
    state = GibbsState(B=B0, Psi=Psi0,
                       xi=np.full(k, priors.xi_shape / priors.xi_rate), F=F0)
    if constraint in ("triangular", "sign"):
        fold_signs(state)

    n_keep = (sweeps - burn + thin - 1) // thin
    sum_B = np.zeros((p, k))
    sum_Psi = np.zeros(p)
    sum_F = np.zeros((n, k))
    if keep_draws:
        draws_B = np.empty((n_keep, p, k))
        draws_Psi = np.empty((n_keep, p))
        draws_F = np.empty((n_keep, n, k))
    else:
        draws_B = np.empty((0, p, k))
        draws_Psi = np.empty((0, p))
        draws_F = np.empty((0, n, k))

    kept = 0
    for sweep in range(sweeps):
        gibbs_sweep(state, X, priors, rng, constraint)
        if sweep >= burn and (sweep - burn) % thin == 0:
            sum_B += state.B
            sum_Psi += state.Psi
            sum_F += state.F
            if keep_draws:
                draws_B[kept] = state.B
                draws_Psi[kept] = state.Psi
                draws_F[kept] = state.F
            kept += 1

    return FactorPosterior(
        mean_B=sum_B / kept,
        mean_Psi=sum_Psi / kept,
        mean_F=sum_F / kept,
        draws_B=draws_B,
        draws_Psi=draws_Psi,
        draws_F=draws_F,
        n_burn=burn,
        n_keep=kept,
        thin=thin,
        train_X=X,
        constraint=constraint,
    )


def dump_draws(post: FactorPosterior, path) -> None:
    """Write retained draws as delimited text, one record per sweep.

    Field order per record: loadings row-major (b[0,0] .. b[p-1,k-1]),
    then the idiosyncratic variances (psi[0] .. psi[p-1]), then the factor
    scores row-major (f[0,0] .. f[n-1,k-1]).
    """
    if post.draws_B.shape[0] == 0:
        raise ValueError("posterior was built without retained draws")
    records = np.hstack([
        post.draws_B.reshape(post.n_keep, -1),
        post.draws_Psi,
        post.draws_F.reshape(post.n_keep, -1),
    ])
    np.savetxt(path, records, delimiter=",")
