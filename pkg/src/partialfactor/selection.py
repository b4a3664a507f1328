"""Variable selection inside the joint factor model, at desk scale.

The joint model is rewritten so the response regression reads
``y = theta^t f + Lambda^t Psi^{-1/2} (x - B f) + eps``: ``theta`` says
which latent factors drive Y, ``Lambda`` says which predictors act on Y
through their idiosyncratic part rather than through the factors.  Point
masses at zero on both give posterior inclusion probabilities, and the
event "Lambda = 0" is the pure factor regression hypothesis; conditional
on it, the number of nonzero theta entries is the dimension of the
predictive subspace.

Scale limits (p <= 50, n <= 200) are enforced: the sampler is written for
interactive exploration, not the p >> n prediction pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .gibbs import FactorPriors, GibbsState, fold_signs, initial_loadings
from .model import DataMatrix, FactorModel, PartialFactorModel, _as_matrix, _as_vector

MAX_P = 50
MAX_N = 200


@dataclass
class LambdaModel:
    """Joint model in (theta, Lambda) coordinates with explicit inclusion masks."""

    base: FactorModel
    theta: np.ndarray
    Lambda: np.ndarray
    sigma2: float
    inclusion_theta: np.ndarray
    inclusion_lambda: np.ndarray

    def __post_init__(self):
        self.theta = _as_vector(self.theta, "theta")
        self.Lambda = _as_vector(self.Lambda, "Lambda")
        self.inclusion_theta = np.asarray(self.inclusion_theta, dtype=bool)
        self.inclusion_lambda = np.asarray(self.inclusion_lambda, dtype=bool)
        if self.theta.shape[0] != self.base.k:
            raise ValueError("theta length must equal k")
        if self.Lambda.shape[0] != self.base.p:
            raise ValueError("Lambda length must equal p")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be strictly positive")
        if np.any(self.theta[~self.inclusion_theta] != 0):
            raise ValueError("theta must be zero wherever excluded")
        if np.any(self.Lambda[~self.inclusion_lambda] != 0):
            raise ValueError("Lambda must be zero wherever excluded")

    def to_model(self) -> PartialFactorModel:
        """Map back to the (V, omega) parametrization."""
        B, Psi = self.base.B, self.base.Psi
        V = self.theta @ B.T + self.Lambda * np.sqrt(Psi)
        omega = float(self.sigma2 + self.theta @ self.theta + self.Lambda @ self.Lambda)
        return PartialFactorModel(base=self.base, theta=self.theta, V=V,
                                  sigma2=self.sigma2, omega=omega)


def reparametrize(m: PartialFactorModel) -> LambdaModel:
    """Rewrite (V, omega) as (Lambda, sigma2): Lambda = (V - theta B^t) Psi^{-1/2}."""
    B, Psi = m.base.B, m.base.Psi
    lam = (m.V - m.theta @ B.T) / np.sqrt(Psi)
    return LambdaModel(base=m.base, theta=m.theta.copy(), Lambda=lam,
                       sigma2=m.sigma2,
                       inclusion_theta=m.theta != 0,
                       inclusion_lambda=lam != 0)


def conditional_mean_reduced(lm: LambdaModel, x) -> float:
    """E(Y | X = x) for a pure factor regression, via the reduced subspace form.

    With ``B_Y`` the loadings columns whose theta entry is active and
    ``Delta`` the covariance contributed by everything else, the mean is
    ``theta_Y [I - M (I + M)^{-1}] B_Y^t Delta^{-1} x`` with
    ``M = B_Y^t Delta^{-1} B_Y``; only the active columns enter, which is
    what makes the count of active theta entries the subspace dimension.
    """
    if np.any(lm.Lambda != 0):
        raise ValueError("reduced form requires Lambda = 0")
    x = _as_vector(x, "x")
    active = lm.theta != 0
    if not active.any():
        return 0.0
    B, Psi = lm.base.B, lm.base.Psi
    BY = B[:, active]
    BX = B[:, ~active]
    # Delta = B_X B_X^t + diag(Psi), inverted through its Cholesky factor.
    Delta = BX @ BX.T + np.diag(Psi)
    L = np.linalg.cholesky(Delta)
    DinvBY = cho_solve((L, True), BY)
    Dinvx = cho_solve((L, True), x)
    M = BY.T @ DinvBY
    w = BY.T @ Dinvx
    ka = M.shape[0]
    inner = w - M @ np.linalg.solve(np.eye(ka) + M, w)
    return float(lm.theta[active] @ inner)


@dataclass(frozen=True)
class SelectionPriors:
    """Slab precisions, inclusion probabilities, and variance hyperpriors."""

    theta_slab_prec: float = 1.0
    lambda_slab_prec: float = 1.0
    include_theta: float = 0.5
    include_lambda: float = 0.5
    include_b: float = 0.5
    sigma_shape: float = 2.0
    sigma_rate: float = 0.2
    factor: FactorPriors = field(default_factory=FactorPriors)

    def __post_init__(self):
        if self.theta_slab_prec <= 0 or self.lambda_slab_prec <= 0:
            raise ValueError("slab precisions must be strictly positive")
        for name in ("include_theta", "include_lambda", "include_b"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie strictly between 0 and 1")
        if self.sigma_shape <= 0 or self.sigma_rate <= 0:
            raise ValueError("sigma hyperparameters must be strictly positive")


@dataclass
class SelectionChain:
    """Retained draws of the selection sampler."""

    draws_B: np.ndarray
    draws_Psi: np.ndarray
    draws_F: np.ndarray
    draws_theta: np.ndarray
    draws_lambda: np.ndarray
    draws_sigma2: np.ndarray
    incl_theta: np.ndarray
    incl_lambda: np.ndarray
    incl_B: np.ndarray | None = None

    def __len__(self) -> int:
        return self.draws_theta.shape[0]

    @property
    def k(self) -> int:
        return self.draws_theta.shape[1]

    @property
    def p(self) -> int:
        return self.draws_lambda.shape[1]

    def state(self, t: int) -> LambdaModel:
        """Materialize draw ``t`` as a LambdaModel."""
        return LambdaModel(
            base=FactorModel(B=self.draws_B[t], Psi=self.draws_Psi[t]),
            theta=self.draws_theta[t],
            Lambda=self.draws_lambda[t],
            sigma2=float(self.draws_sigma2[t]),
            inclusion_theta=self.incl_theta[t],
            inclusion_lambda=self.incl_lambda[t],
        )


@dataclass
class SubspaceEstimate:
    """Posterior frequencies of the competing structural hypotheses.

    ``rank_distribution`` maps each subspace dimension j (number of active
    theta entries, given Lambda = 0) to its frequency; draws with any
    active Lambda entry are pooled under the key "H0".
    """

    prob_lambda_zero: float
    rank_distribution: dict

    def __post_init__(self):
        total = float(sum(self.rank_distribution.values()))
        if abs(total - 1.0) > 1e-9:
            raise ValueError("rank distribution frequencies must sum to 1")


@dataclass
class ThreeQuestionReport:
    """Per-parameter posterior inclusion probabilities."""

    prob_theta: np.ndarray
    prob_lambda: np.ndarray
    prob_b: np.ndarray | None = None


def three_question_report(chain: SelectionChain) -> ThreeQuestionReport:
    """Tabulate Pr(theta_g != 0), Pr(lambda_j != 0), and, when tracked, Pr(b_jg != 0)."""
    if len(chain) == 0:
        raise ValueError("chain holds no retained draws")
    prob_b = None if chain.incl_B is None else chain.incl_B.mean(axis=0)
    return ThreeQuestionReport(
        prob_theta=chain.incl_theta.mean(axis=0),
        prob_lambda=chain.incl_lambda.mean(axis=0),
        prob_b=prob_b,
    )


def subspace_estimate(chain: SelectionChain) -> SubspaceEstimate:
    """Aggregate indicator draws into hypothesis frequencies."""
    if len(chain) == 0:
        raise ValueError("chain holds no retained draws")
    any_lambda = chain.incl_lambda.any(axis=1)
    ranks = chain.incl_theta.sum(axis=1)
    n = len(chain)
    dist: dict = {}
    for j in range(chain.k + 1):
        dist[j] = float(np.sum((ranks == j) & ~any_lambda)) / n
    dist["H0"] = float(np.sum(any_lambda)) / n
    return SubspaceEstimate(prob_lambda_zero=float(np.mean(~any_lambda)),
                            rank_distribution=dist)


def _ssvs_scalar(z, u, sigma2, slab_prec, prior_incl, rng) -> tuple[float, bool]:
    """One spike-and-slab update for a scalar coefficient.

    ``z`` is the regressor column, ``u`` the partial residual with this
    coefficient removed.  The inclusion draw uses the conjugate marginal
    likelihood ratio of slab against point mass; on inclusion the value is
    drawn from its conditional normal.
    """
    prec = slab_prec + float(z @ z) / sigma2
    m = float(z @ u) / sigma2 / prec
    log_bf = 0.5 * (np.log(slab_prec) - np.log(prec)) + 0.5 * m * m * prec
    log_odds = np.log(prior_incl) - np.log1p(-prior_incl) + log_bf
    if np.log(rng.uniform()) < -np.logaddexp(0.0, -log_odds):
        return m + rng.standard_normal() / np.sqrt(prec), True
    return 0.0, False


def spike_slab_sampler(X, y, k: int, priors: SelectionPriors | None = None,
                       sweeps: int = 2000, burn: int | None = None, thin: int = 1,
                       seed: int = 0, b_sparsity: bool = False,
                       constraint: str = "triangular") -> tuple[SelectionChain, SubspaceEstimate]:
    """Gibbs sampler over (B, Psi, F, theta, Lambda, sigma2) with point masses.

    ``X`` and ``y`` are centered internally.  theta and Lambda entries get
    spike-and-slab updates; loadings rows, scores, and variances get their
    exact conditionals (the idiosyncratic variances use a proposal from
    the predictor-only conditional, corrected for the response likelihood).
    With ``b_sparsity`` the free loadings entries also carry point masses
    and the report gains the loadings inclusion table.

    Returns the retained chain and the subspace-hypothesis summary.
    """
    if isinstance(X, DataMatrix):
        X = X.X
    X = _as_matrix(X, "X").copy()
    y = _as_vector(y, "y").copy()
    n, p = X.shape
    if y.shape[0] != n:
        raise ValueError("y must have one entry per row of X")
    if p > MAX_P or n > MAX_N:
        raise ValueError(f"sampler is limited to p <= {MAX_P}, n <= {MAX_N}")
    if not 1 <= k <= n:
        raise ValueError("k must satisfy 1 <= k <= n")
    if burn is None:
        burn = sweeps // 2
    if not (sweeps > burn >= 0 and thin >= 1):
        raise ValueError("need sweeps > burn >= 0 and thin >= 1")
    priors = priors or SelectionPriors()
    fp = priors.factor
    X -= X.mean(axis=0)
    y -= y.mean()

    rng = np.random.default_rng(seed)
    B0, Psi0, F0 = initial_loadings(X, k)
    state = GibbsState(B=B0.copy(), Psi=Psi0.copy(),
                       xi=np.full(k, fp.xi_shape / fp.xi_rate), F=F0.copy())
    if constraint == "triangular":
        from .gibbs import _apply_triangular_rotation

        _apply_triangular_rotation(state.B, state.F)
    fold_signs(state)
    row_free = np.minimum(np.arange(p) + 1, k) if constraint == "triangular" else np.full(p, k)
    col_free = (p - np.arange(k)) if constraint == "triangular" else np.full(k, p)

    # Deterministic start for the regression part: factors on, residuals off.
    FtF = state.F.T @ state.F + np.eye(k)
    theta = np.linalg.solve(FtF, state.F.T @ y)
    incl_t = np.ones(k, dtype=bool)
    lam = np.zeros(p)
    incl_l = np.zeros(p, dtype=bool)
    sigma2 = max(float(np.mean((y - state.F @ theta) ** 2)), 1e-3)
    incl_b = np.ones((p, k), dtype=bool)
    if constraint == "triangular":
        incl_b &= ~np.triu(np.ones((p, k), dtype=bool), k=1)

    n_keep = (sweeps - burn + thin - 1) // thin
    chain = SelectionChain(
        draws_B=np.empty((n_keep, p, k)),
        draws_Psi=np.empty((n_keep, p)),
        draws_F=np.empty((n_keep, n, k)),
        draws_theta=np.empty((n_keep, k)),
        draws_lambda=np.empty((n_keep, p)),
        draws_sigma2=np.empty(n_keep),
        incl_theta=np.empty((n_keep, k), dtype=bool),
        incl_lambda=np.empty((n_keep, p), dtype=bool),
        incl_B=np.empty((n_keep, p, k), dtype=bool) if b_sparsity else None,
    )

    kept = 0
    for sweep in range(sweeps):
        B, Psi, xi, F = state.B, state.Psi, state.xi, state.F
        rtP = np.sqrt(Psi)

        # --- factor scores: X-likelihood plus the response coupling ---
        c = theta - (lam / rtP) @ B
        BtP = B.T / Psi
        M = np.eye(k) + BtP @ B + np.outer(c, c) / sigma2
        L = np.linalg.cholesky(M)
        d = X @ (lam / rtP)
        lin = BtP @ X.T + np.outer(c, (y - d) / sigma2)
        mean = cho_solve((L, True), lin).T
        z = rng.standard_normal((n, k))
        state.F = mean + solve_triangular(L, z.T, lower=True, trans="T").T
        F = state.F

        # Running response residual; updated in place by each block below.
        resid_cols = X - F @ B.T
        e = y - F @ theta - (resid_cols / rtP) @ lam

        # --- loadings rows ---
        FtF = F.T @ F
        for j in range(p):
            m_j = row_free[j]
            Fm = F[:, :m_j]
            lj = lam[j]
            xj = X[:, j]
            t = e + (lj / rtP[j]) * (xj - Fm @ B[j, :m_j])
            if b_sparsity:
                # Entry-wise point masses.  For candidate value beta of
                # b_jg the response residual is t - (lj/sqrt(psi_j)) *
                # (nu_g - beta f_g) with nu_g the X-column residual that
                # excludes this entry, so both likelihood pieces are
                # scalar-normal in beta.
                nu = xj - Fm @ B[j, :m_j]
                w_y = lj / rtP[j]
                for g in range(m_j):
                    fg = F[:, g]
                    nu_g = nu + B[j, g] * fg
                    prec = (xi[g] + (fg @ fg) * (1.0 + lj * lj / sigma2)) / Psi[j]
                    lin_g = (fg @ nu_g) / Psi[j]
                    if lj != 0:
                        lin_g += w_y * (w_y * (fg @ nu_g) - fg @ t) / sigma2
                    m_post = lin_g / prec
                    log_bf = (0.5 * (np.log(xi[g] / Psi[j]) - np.log(prec))
                              + 0.5 * m_post * m_post * prec)
                    log_odds = (np.log(priors.include_b)
                                - np.log1p(-priors.include_b) + log_bf)
                    if np.log(rng.uniform()) < -np.logaddexp(0.0, -log_odds):
                        B[j, g] = m_post + rng.standard_normal() / np.sqrt(prec)
                        incl_b[j, g] = True
                    else:
                        B[j, g] = 0.0
                        incl_b[j, g] = False
                    nu = nu_g - B[j, g] * fg
                e = t - w_y * nu
            else:
                scale = 1.0 + lj * lj / sigma2
                P = (np.diag(xi[:m_j]) + FtF[:m_j, :m_j] * scale) / Psi[j]
                Lp = np.linalg.cholesky(P)
                lin_j = Fm.T @ xj * (scale / Psi[j]) - (lj / (rtP[j] * sigma2)) * (Fm.T @ t)
                mean_j = cho_solve((Lp, True), lin_j)
                noise_j = solve_triangular(Lp, rng.standard_normal(m_j), lower=True, trans="T")
                B[j, :m_j] = mean_j + noise_j
                B[j, m_j:] = 0.0
                e = t - (lj / rtP[j]) * (xj - Fm @ B[j, :m_j])

        # --- idiosyncratic variances: proposal from the X-part, corrected
        #     for the response term when the residual coefficient is active ---
        resid_cols = X - F @ B.T
        ssr = np.sum(resid_cols**2, axis=0)
        prior_quad = (B**2) @ xi
        shape = fp.psi_shape + 0.5 * n + 0.5 * row_free
        rate = fp.psi_rate + 0.5 * ssr + 0.5 * prior_quad
        for j in range(p):
            psi_new = rate[j] / rng.gamma(shape[j])
            if lam[j] == 0:
                state.Psi[j] = psi_new
                continue
            e_new = e + lam[j] * resid_cols[:, j] * (1.0 / rtP[j] - 1.0 / np.sqrt(psi_new))
            log_acc = -0.5 * (e_new @ e_new - e @ e) / sigma2
            if np.log(rng.uniform()) < log_acc:
                state.Psi[j] = psi_new
                e = e_new
        Psi = state.Psi
        rtP = np.sqrt(Psi)

        # --- loadings column precisions ---
        col_quad = np.sum(B**2 / Psi[:, None], axis=0)
        state.xi = rng.gamma(fp.xi_shape + 0.5 * col_free) / (fp.xi_rate + 0.5 * col_quad)
        xi = state.xi

        # --- spike-and-slab on theta ---
        for g in range(k):
            zg = F[:, g]
            u = e + theta[g] * zg
            theta[g], incl_t[g] = _ssvs_scalar(zg, u, sigma2, priors.theta_slab_prec,
                                               priors.include_theta, rng)
            e = u - theta[g] * zg

        # --- spike-and-slab on Lambda ---
        R = resid_cols / rtP
        for j in range(p):
            zj = R[:, j]
            u = e + lam[j] * zj
            lam[j], incl_l[j] = _ssvs_scalar(zj, u, sigma2, priors.lambda_slab_prec,
                                             priors.include_lambda, rng)
            e = u - lam[j] * zj

        # --- response variance ---
        sigma2 = float((priors.sigma_rate + 0.5 * e @ e)
                       / rng.gamma(priors.sigma_shape + 0.5 * n))

        if constraint in ("triangular", "sign"):
            fold_signs(state, theta=theta)

        if sweep >= burn and (sweep - burn) % thin == 0:
            chain.draws_B[kept] = state.B
            chain.draws_Psi[kept] = state.Psi
            chain.draws_F[kept] = state.F
            chain.draws_theta[kept] = theta
            chain.draws_lambda[kept] = lam
            chain.draws_sigma2[kept] = sigma2
            chain.incl_theta[kept] = incl_t
            chain.incl_lambda[kept] = incl_l
            if b_sparsity:
                chain.incl_B[kept] = incl_b
            kept += 1

    return chain, subspace_estimate(chain)


def dump_selection(chain: SelectionChain, path) -> None:
    """Write the chain as delimited text, one record per retained sweep.

    Field order extends the factor-sampler format: loadings row-major,
    variances, scores row-major, then theta, Lambda, sigma2, and the
    theta/Lambda inclusion indicators as 0/1.
    """
    if len(chain) == 0:
        raise ValueError("chain holds no retained draws")
    n_keep = len(chain)
    records = np.hstack([
        chain.draws_B.reshape(n_keep, -1),
        chain.draws_Psi,
        chain.draws_F.reshape(n_keep, -1),
        chain.draws_theta,
        chain.draws_lambda,
        chain.draws_sigma2[:, None],
        chain.incl_theta.astype(float),
        chain.incl_lambda.astype(float),
    ])
    np.savetxt(path, records, delimiter=",")
