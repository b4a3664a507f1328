"""Study harnesses: analytic warm-ups, Monte Carlo comparisons, benchmarks.

Three groups live here.  First, small closed-form demonstrations: the 2x2
principal-component example and the KL-closest factor approximation of a
fixed covariance, fit by expectation-maximization on population moments.
Second, the simulation machinery: a data-generating recipe whose factor
strengths can be paired with the response weights favorably or
unfavorably, plus a multi-dataset study that scores competing predictors.
Third, a train/holdout benchmark protocol for real delimited data.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .baselines import lars, nig_regression, pcr, pls, ridge_estimator
from .gibbs import FactorPriors
from .model import (DataMatrix, FactorModel, PartialFactorModel, _as_matrix,
                    chol_pd, sample_joint)
from .regression import DEFAULT_GRID, fit_pfr, fold_indices

logger = logging.getLogger(__name__)

# Two-factor covariance used throughout the closed-form comparisons:
# loadings below (one factor per column), idiosyncratic variance 0.2.
EXAMPLE2_LOADINGS = np.array([
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
EXAMPLE2_PSI = 0.2


def example1_components(r: float) -> tuple[np.ndarray, np.ndarray]:
    """Principal directions and variances of [[1, r], [r, 1]].

    For r > 0 the leading direction is the equally weighted average
    (1, 1)/sqrt(2) with variance 1 + r; the difference direction
    (1, -1)/sqrt(2) carries only 1 - r.  Regressing on the leading
    component alone therefore throws away the difference coordinate no
    matter how predictive it is.
    """
    if not -1 < r < 1:
        raise ValueError("r must lie strictly inside (-1, 1)")
    S = np.array([[1.0, r], [r, 1.0]])
    vals, vecs = np.linalg.eigh(S)
    order = np.argsort(vals)[::-1]
    return vecs[:, order], vals[order]


def kl_gaussian(S1, S2) -> float:
    """KL divergence of N(0, S1) from N(0, S2) (both must be PD)."""
    S1 = _as_matrix(S1, "S1")
    S2 = _as_matrix(S2, "S2")
    if S1.shape != S2.shape:
        raise ValueError("S1 and S2 must have the same shape")
    L1 = chol_pd(S1, "S1")
    L2 = chol_pd(S2, "S2")
    d = S1.shape[0]
    tr = float(np.trace(cho_solve((L2, True), S1)))
    logdet1 = 2.0 * float(np.sum(np.log(np.diag(L1))))
    logdet2 = 2.0 * float(np.sum(np.log(np.diag(L2))))
    return 0.5 * (tr - d + logdet2 - logdet1)


def kl_closest_factor(Sigma, k: int, tol: float = 1e-10, max_iter: int = 2000,
                      return_kl_path: bool = False):
    """Best rank-k factor approximation of a covariance, in KL divergence.

    Treats ``Sigma`` as infinite-sample sufficient statistics and runs the
    factor-analysis EM recursion on population moments until the KL
    improvement drops below ``tol``.  Divergence to the fit never
    increases across iterations.  If the diagonal of ``Sigma`` alone
    already fits (Sigma diagonal), the zero-loadings model is returned
    outright.  Emits a RuntimeWarning when ``max_iter`` is exhausted.
    """
    Sigma = _as_matrix(Sigma, "Sigma")
    p = Sigma.shape[0]
    if not 1 <= k < p:
        raise ValueError("k must satisfy 1 <= k < p")
    chol_pd(Sigma, "Sigma")
    diag = np.diag(Sigma).copy()

    zero_fit = kl_gaussian(Sigma, np.diag(diag))
    if zero_fit <= tol:
        model = FactorModel(B=np.zeros((p, k)), Psi=diag)
        return (model, np.array([zero_fit])) if return_kl_path else model

    vals, vecs = np.linalg.eigh(Sigma)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    noise_guess = float(np.mean(vals[k:]))
    A = vecs[:, :k] * np.sqrt(np.maximum(vals[:k] - noise_guess, 1e-12 * vals[0]))
    D = np.maximum(diag - np.einsum("ij,ij->i", A, A), 1e-8 * diag.max())

    path = []
    kl = kl_gaussian(Sigma, A @ A.T + np.diag(D))
    path.append(kl)
    converged = False
    for _ in range(max_iter):
        M = A @ A.T + np.diag(D)
        beta = cho_solve((np.linalg.cholesky(M), True), A).T  # k x p
        C_xf = Sigma @ beta.T
        C_ff = np.eye(k) - beta @ A + beta @ C_xf
        A = np.linalg.solve(C_ff.T, C_xf.T).T
        D = np.maximum(diag - np.einsum("ij,ij->i", A, C_xf),
                       1e-10 * diag.max())
        kl_new = kl_gaussian(Sigma, A @ A.T + np.diag(D))
        path.append(kl_new)
        if kl - kl_new < tol:
            converged = True
            kl = kl_new
            break
        kl = kl_new
    if not converged:
        warnings.warn(f"factor EM stopped after {max_iter} iterations "
                      f"(last improvement above tol={tol})", RuntimeWarning,
                      stacklevel=2)
    model = FactorModel(B=A, Psi=D)
    return (model, np.asarray(path)) if return_kl_path else model


def _conditional_coef_last(S: np.ndarray) -> np.ndarray:
    """Coefficients predicting the last coordinate from the others."""
    p = S.shape[0]
    return np.linalg.solve(S[: p - 1, : p - 1], S[: p - 1, p - 1])


def example2_study(n_per_replicate: int, replicates: int, seed: int = 0,
                   chunk: int = 200) -> tuple[float, float, np.ndarray]:
    """Likelihood-ratio versus predictive comparison of two nested models.

    Draws ``replicates`` datasets of ``n_per_replicate`` observations from
    the two-factor model above and scores them against the closest
    one-factor approximation.  Returns the fraction of replicates whose
    likelihood ratio favors the true model, the fraction where the
    one-factor model predicts the last coordinate worse, and the per-
    replicate (delta loglik, delta MSE) pairs.
    """
    if replicates < 100:
        raise ValueError("need at least 100 replicates")
    if n_per_replicate < 1:
        raise ValueError("n_per_replicate must be positive")
    truth = FactorModel(B=EXAMPLE2_LOADINGS,
                        Psi=np.full(10, EXAMPLE2_PSI))
    S2 = truth.covariance()
    one = kl_closest_factor(S2, 1, tol=1e-13, max_iter=20000)
    S1 = one.covariance()

    L2 = np.linalg.cholesky(S2)
    L1 = np.linalg.cholesky(S1)
    logdet2 = 2.0 * float(np.sum(np.log(np.diag(L2))))
    logdet1 = 2.0 * float(np.sum(np.log(np.diag(L1))))
    c2 = _conditional_coef_last(S2)
    c1 = _conditional_coef_last(S1)

    rng = np.random.default_rng(seed)
    d_loglik = np.empty(replicates)
    d_mse = np.empty(replicates)
    done = 0
    while done < replicates:
        m = min(chunk, replicates - done)
        Z = rng.standard_normal((m * n_per_replicate, 10))
        X = Z @ L2.T
        half2 = solve_triangular(L2, X.T, lower=True)
        half1 = solve_triangular(L1, X.T, lower=True)
        q2 = np.sum(half2**2, axis=0).reshape(m, n_per_replicate).sum(axis=1)
        q1 = np.sum(half1**2, axis=0).reshape(m, n_per_replicate).sum(axis=1)
        # ll_true - ll_one for each replicate
        d_loglik[done:done + m] = -0.5 * (
            n_per_replicate * (logdet2 - logdet1) + q2 - q1)
        front = X[:, :9]
        err2 = (X[:, 9] - front @ c2).reshape(m, n_per_replicate)
        err1 = (X[:, 9] - front @ c1).reshape(m, n_per_replicate)
        d_mse[done:done + m] = np.mean(err1**2, axis=1) - np.mean(err2**2, axis=1)
        done += m
    scatter = np.column_stack([d_loglik, d_mse])
    return (float(np.mean(d_loglik > 0)), float(np.mean(d_mse > 0)), scatter)


@dataclass(frozen=True)
class ScenarioConfig:
    """Shape and seed of one synthetic dataset draw."""

    p: int = 80
    n: int = 50
    n_labeled: int = 35
    scenario: str = "favorable"
    seed: int | tuple = 0

    def __post_init__(self):
        if self.scenario not in ("favorable", "unfavorable"):
            raise ValueError("scenario must be 'favorable' or 'unfavorable'")
        if not 1 <= self.n_labeled < self.n:
            raise ValueError("need 1 <= n_labeled < n")
        if self.p < 1:
            raise ValueError("p must be positive")


def generate_simulation_dataset(cfg: ScenarioConfig) -> tuple[DataMatrix, PartialFactorModel]:
    """Draw one dataset from the hierarchical recipe.

    Steps: latent dimension uniform on {1..n-1}; raw loadings standard
    normal scaled column-wise by half-Cauchy magnitudes and normalized to
    unit Frobenius norm; idiosyncratic variances folded-t(5) with scale
    0.1; response weights mean-zero normal with per-entry folded-t(5)
    scales.  The scenario then pairs response weights with factor
    strengths: "favorable" matches the largest |theta| to the largest
    column magnitude |D|, "unfavorable" pairs them in reverse.  The
    response uses unit conditional variance and depends on X only through
    the factors.  Rows past ``n_labeled`` keep their response in ``y`` for
    scoring but are flagged unlabeled.
    """
    rng = np.random.default_rng(cfg.seed)
    k = int(rng.integers(1, cfg.n))
    A = rng.standard_normal((cfg.p, k))
    Dvals = np.abs(rng.standard_cauchy(k))
    AD = A * Dvals
    B = AD / np.linalg.norm(AD)
    Psi = 0.1 * np.abs(rng.standard_t(5, size=cfg.p))
    scales = np.abs(rng.standard_t(5, size=k))
    theta = rng.normal(0.0, scales)

    order_d = np.argsort(-Dvals)
    by_size = theta[np.argsort(-np.abs(theta))]
    paired = np.empty(k)
    if cfg.scenario == "favorable":
        paired[order_d] = by_size
    else:
        paired[order_d] = by_size[::-1]

    truth = PartialFactorModel.pure_factor(FactorModel(B=B, Psi=Psi),
                                           theta=paired, sigma2=1.0)
    data = sample_joint(truth, cfg.n, seed=rng)
    labeled = np.zeros(cfg.n, dtype=bool)
    labeled[: cfg.n_labeled] = True
    return DataMatrix(X=data.X, y=data.y, labeled=labeled), truth


@dataclass
class StudyOptions:
    """Fitting budget shared by the study harnesses."""

    sweeps: int = 800
    burn: int = 400
    thin: int = 2
    folds: int = 10
    variance_fraction: float = 0.90
    k: int | None = None
    priors: FactorPriors | None = None
    grid_f: tuple = DEFAULT_GRID
    grid_r: tuple = DEFAULT_GRID
    ridge_grid: tuple = DEFAULT_GRID
    max_components: int = 20
    max_steps: int = 30


def _center_labeled(train: DataMatrix):
    X_lab, y_lab = train.labeled_arrays()
    x_means = X_lab.mean(axis=0)
    y_mean = float(y_lab.mean())
    return X_lab - x_means, y_lab - y_mean, x_means, y_mean


def cv_ridge(X, y, grid, folds: int, seed: int) -> float:
    """Pick a ridge penalty by K-fold CV; exact ties go to the larger tau."""
    grid = np.unique(np.asarray(grid, dtype=float))
    parts = fold_indices(X.shape[0], min(folds, X.shape[0]), seed)
    best_tau, best_err = None, np.inf
    for tau in grid:
        errs = []
        for held in parts:
            mask = np.ones(X.shape[0], dtype=bool)
            mask[held] = False
            beta = ridge_estimator(X[mask], y[mask], tau)
            errs.append(float(np.mean((y[held] - X[held] @ beta) ** 2)))
        err = float(np.mean(errs))
        if err <= best_err:
            best_err, best_tau = err, float(tau)
    return best_tau


def _cv_count(fit_fn, X, y, counts, folds: int, seed: int) -> int:
    """Pick an integer tuning value (components, steps) by K-fold CV."""
    parts = fold_indices(X.shape[0], min(folds, X.shape[0]), seed)
    best_c, best_err = None, np.inf
    for c in counts:
        errs = []
        ok = True
        for held in parts:
            mask = np.ones(X.shape[0], dtype=bool)
            mask[held] = False
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    fit = fit_fn(X[mask], y[mask], c)
            except ValueError:
                ok = False
                break
            errs.append(float(np.mean((y[held] - fit.predict(X[held])) ** 2)))
        if not ok:
            continue
        err = float(np.mean(errs))
        if err < best_err:
            best_err, best_c = err, int(c)
    if best_c is None:
        raise ValueError("no tuning value was feasible on every fold")
    return best_c


def _predict_pfr(train: DataMatrix, X_new, seed, opts: StudyOptions,
                 factor_only: bool, posterior=None):
    pipe = fit_pfr(train, k=opts.k, variance_fraction=opts.variance_fraction,
                   priors=opts.priors, sweeps=opts.sweeps, burn=opts.burn,
                   thin=opts.thin, folds=opts.folds, grid_f=opts.grid_f,
                   grid_r=opts.grid_r, seed=seed, factor_only=factor_only,
                   posterior=posterior)
    return pipe.predict(X_new), pipe.posterior


def _predict_nig(train, X_new, seed, opts):
    Xc, yc, x_means, y_mean = _center_labeled(train)
    fit = nig_regression(Xc, yc)
    return (X_new - x_means) @ fit.beta + y_mean


def _predict_ridge(train, X_new, seed, opts):
    Xc, yc, x_means, y_mean = _center_labeled(train)
    tau = cv_ridge(Xc, yc, opts.ridge_grid, opts.folds, seed)
    beta = ridge_estimator(Xc, yc, tau)
    return (X_new - x_means) @ beta + y_mean


def _count_grid(X, opts):
    return range(1, min(X.shape[0] - 1, X.shape[1], opts.max_components) + 1)


def _predict_pcr(train, X_new, seed, opts):
    Xc, yc, x_means, y_mean = _center_labeled(train)
    c = _cv_count(pcr, Xc, yc, _count_grid(Xc, opts), opts.folds, seed)
    return (X_new - x_means) @ pcr(Xc, yc, c).beta + y_mean


def _predict_pls(train, X_new, seed, opts):
    Xc, yc, x_means, y_mean = _center_labeled(train)
    c = _cv_count(pls, Xc, yc, _count_grid(Xc, opts), opts.folds, seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fit = pls(Xc, yc, c)
    return (X_new - x_means) @ fit.beta + y_mean


def _predict_lars(train, X_new, seed, opts):
    Xc, yc, x_means, y_mean = _center_labeled(train)
    grid = range(1, min(Xc.shape[0] - 1, Xc.shape[1], opts.max_steps) + 1)
    c = _cv_count(lars, Xc, yc, grid, opts.folds, seed)
    return (X_new - x_means) @ lars(Xc, yc, c).beta + y_mean


@dataclass
class MetricsTable:
    """Per-method scores across a batch of datasets."""

    methods: list
    percent_best: dict
    mean_relative_error: dict
    excess_relative_error: dict
    scaled_mse: dict
    datasets_used: int
    datasets_skipped: int
    skipped_log: list = field(default_factory=list)

    def to_delimited(self) -> str:
        lines = ["method,percent_best,mean_relative_error,"
                 "excess_relative_error,scaled_mse"]
        for m in self.methods:
            lines.append(f"{m},{self.percent_best[m]:.10g},"
                         f"{self.mean_relative_error[m]:.10g},"
                         f"{self.excess_relative_error[m]:.10g},"
                         f"{self.scaled_mse[m]:.10g}")
        return "\n".join(lines) + "\n"


def _resolve_methods(methods):
    resolved = []
    builtin = {
        "PFR": None, "BFR": None, "NIG": _predict_nig, "RR": _predict_ridge,
        "PCR": _predict_pcr, "PLS": _predict_pls, "LARS": _predict_lars,
    }
    for m in methods:
        if isinstance(m, str):
            name = m.upper()
            if name not in builtin:
                raise ValueError(f"unknown method {m!r}")
            resolved.append((name, builtin[name]))
        else:
            name, fn = m
            resolved.append((str(name), fn))
    if not resolved:
        raise ValueError("at least one method is required")
    return resolved


def simulation_study(datasets: int, cfg: ScenarioConfig, methods=("PFR", "NIG", "BFR"),
                     seed: int = 0, opts: StudyOptions | None = None) -> MetricsTable:
    """Score methods across freshly drawn datasets from one scenario.

    Each dataset gets an independent derived seed.  Every method sees the
    labeled rows' responses and all rows' predictors, and must predict
    the unlabeled responses.  A method entry is either a known name or a
    ``(name, callable)`` pair with signature ``fn(train, X_new, seed,
    opts) -> predictions``.  If any method fails on a dataset, that
    dataset is dropped from the scoring and the failure is logged.
    """
    if datasets < 1:
        raise ValueError("datasets must be positive")
    opts = opts or StudyOptions()
    resolved = _resolve_methods(methods)
    names = [name for name, _ in resolved]
    if len(set(names)) != len(names):
        raise ValueError("method names must be unique")

    sse = {name: [] for name in names}
    skipped = []
    for i in range(datasets):
        data, _truth = generate_simulation_dataset(replace(cfg, seed=(seed, i)))
        hidden = data.y.copy()
        shown = hidden.copy()
        shown[~data.labeled] = np.nan
        visible = DataMatrix(X=data.X, y=shown, labeled=data.labeled)
        X_new = data.X[~data.labeled]
        y_true = hidden[~data.labeled]
        run_seed = (seed, i, 0)

        results = {}
        posterior = None
        try:
            for name, fn in resolved:
                if name in ("PFR", "BFR") and fn is None:
                    preds, posterior = _predict_pfr(
                        visible, X_new, run_seed, opts,
                        factor_only=(name == "BFR"), posterior=posterior)
                else:
                    preds = fn(visible, X_new, run_seed, opts)
                results[name] = float(np.sum((y_true - preds) ** 2))
        except Exception as exc:  # noqa: BLE001 - any failure skips the dataset
            msg = f"dataset {i}: {type(exc).__name__}: {exc}"
            logger.warning("skipping %s", msg)
            skipped.append(msg)
            continue
        for name, value in results.items():
            sse[name].append(value)

    used = len(next(iter(sse.values())))
    if used == 0:
        raise ValueError("every dataset failed; nothing to aggregate")
    errs = np.array([sse[name] for name in names])  # methods x datasets
    mins = errs.min(axis=0)
    winners = errs <= mins * (1 + 1e-12)
    percent_best = {name: float(100.0 * np.sum(winners[r] / winners.sum(axis=0))
                                / used)
                    for r, name in enumerate(names)}
    ratios = errs / mins
    mean_rel = {name: float(ratios[r].mean()) for r, name in enumerate(names)}
    excess = {name: mean_rel[name] - 1.0 for name in names}
    totals = errs.sum(axis=1)
    scaled = {name: float(totals[r] / totals.min()) for r, name in enumerate(names)}
    return MetricsTable(methods=names, percent_best=percent_best,
                        mean_relative_error=mean_rel, excess_relative_error=excess,
                        scaled_mse=scaled, datasets_used=used,
                        datasets_skipped=len(skipped), skipped_log=skipped)


@dataclass
class BenchmarkReport:
    """Holdout squared error per method on one train/test split."""

    methods: list
    sse: dict
    percent_worse: dict
    best: str
    n_train: int
    n_test: int
    seed: int
    split_fraction: float

    def to_delimited(self) -> str:
        lines = ["method,sse,percent_worse"]
        for m in self.methods:
            lines.append(f"{m},{self.sse[m]:.10g},{self.percent_worse[m]:.10g}")
        return "\n".join(lines) + "\n"


def benchmark_real(data: DataMatrix, methods=("PFR", "RR", "PLS", "LARS", "PCR"),
                   split_fraction: float = 0.75, folds: int = 10, seed: int = 0,
                   opts: StudyOptions | None = None) -> BenchmarkReport:
    """Single-split benchmark: tune by CV on training rows, score the rest.

    Only labeled rows participate.  The split is a seeded permutation;
    every tuning decision (penalties, component counts, step counts, and
    the factor sampling) sees training rows only, so the holdout stays
    untouched until scoring.
    """
    if not 0 < split_fraction < 1:
        raise ValueError("split_fraction must lie strictly between 0 and 1")
    opts = opts or StudyOptions(folds=folds)
    opts = replace(opts, folds=folds)
    X_lab, y_lab = data.labeled_arrays()
    n_lab = X_lab.shape[0]
    if n_lab < folds:
        raise ValueError("fewer labeled rows than folds")
    n_train = int(round(split_fraction * n_lab))
    n_train = min(max(n_train, folds), n_lab - 1)
    perm = np.random.default_rng(seed).permutation(n_lab)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    train = DataMatrix(X=X_lab[train_idx], y=y_lab[train_idx])
    X_new = X_lab[test_idx]
    y_true = y_lab[test_idx]

    resolved = _resolve_methods(methods)
    sse = {}
    posterior = None
    for name, fn in resolved:
        if name in ("PFR", "BFR") and fn is None:
            preds, posterior = _predict_pfr(train, X_new, (seed, 1), opts,
                                            factor_only=(name == "BFR"),
                                            posterior=posterior)
        else:
            preds = fn(train, X_new, (seed, 1), opts)
        sse[name] = float(np.sum((y_true - preds) ** 2))
    best_sse = min(sse.values())
    # Errors at rounding-noise scale (a constant response, say) make the
    # worse-than-best ratio meaningless, so snap them to zero first.
    floor = 1e-12 * float(y_true @ y_true)
    if best_sse > floor:
        percent_worse = {m: 100.0 * (v / best_sse - 1.0) for m, v in sse.items()}
    else:
        percent_worse = {m: 0.0 if v <= floor else float("inf")
                         for m, v in sse.items()}
    best = min(sse, key=lambda m: (sse[m], m))
    return BenchmarkReport(methods=[name for name, _ in resolved], sse=sse,
                           percent_worse=percent_worse, best=best,
                           n_train=n_train, n_test=len(test_idx), seed=seed,
                           split_fraction=split_fraction)


def write_scatter(scatter: np.ndarray, path) -> None:
    """Two-column delimited dump of (delta loglik, delta MSE) pairs."""
    np.savetxt(path, np.asarray(scatter, dtype=float), delimiter=",",
               header="delta_loglik,delta_mse", comments="")
