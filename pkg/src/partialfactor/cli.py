"""Command-line front end.

Subcommands: ``fit`` (train the factor-augmented ridge on a CSV and save a
reusable model file), ``predict`` (apply a saved model to new rows),
``simulate`` (multi-dataset synthetic comparison), ``example2`` (the
likelihood-ratio versus prediction Monte Carlo), ``benchmark`` (train/
holdout comparison on a user CSV), and ``select`` (spike-and-slab
inclusion report).  Every run writes ``report.json`` (deterministic given
the seed), a ``timing.json`` sidecar with the wall clock, delimited
tables, and, unless ``--no-figures`` is passed, rendered figures.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .experiments import (MetricsTable, ScenarioConfig, StudyOptions,
                          benchmark_real, example2_study, simulation_study,
                          write_scatter)
from .gibbs import FactorPosterior, choose_k
from .regression import DEFAULT_GRID, PfrFit, PfrPipeline, fit_pfr
from .report import (ParseError, atomic_write_text, ingest_csv, read_json,
                     versions, write_json)
from .selection import spike_slab_sampler, three_question_report, dump_selection

SIM_METHODS = ("PFR", "BFR", "NIG", "RR", "PCR", "PLS", "LARS")
BENCH_METHODS = SIM_METHODS


class UsageError(ValueError):
    """Configuration problem the user must fix; maps to exit status 2."""


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _grid(text: str) -> tuple:
    values = tuple(float(t) for t in text.split(",") if t.strip())
    if not values:
        raise ValueError("empty grid")
    return values


def _methods(text: str) -> tuple:
    names = tuple(t.strip().upper() for t in text.split(",") if t.strip())
    if not names:
        raise ValueError("empty method list")
    return names


def _check_methods(names, allowed) -> None:
    unknown = [m for m in names if m not in allowed]
    if unknown:
        raise UsageError(f"unknown method name(s): {', '.join(unknown)}; "
                         f"choose from {', '.join(allowed)}")


def _config_echo(args: argparse.Namespace) -> dict:
    skip = {"func"}
    out = {}
    for key, value in vars(args).items():
        if key in skip:
            continue
        if isinstance(value, Path):
            value = str(value)
        if isinstance(value, tuple):
            value = list(value)
        out[key] = value
    return out


def _write_report(outdir: Path, args, results: dict, outputs: dict,
                  t0: float) -> None:
    write_json(outdir / "report.json", {
        "command": args.command,
        "config": _config_echo(args),
        "seed": getattr(args, "seed", None),
        "versions": versions(),
        "results": results,
        "outputs": outputs,
    })
    write_json(outdir / "timing.json",
               {"wall_clock_seconds": time.monotonic() - t0})


def _study_options(args) -> StudyOptions:
    return StudyOptions(
        sweeps=args.sweeps, burn=args.burn, thin=args.thin, folds=args.folds,
        variance_fraction=args.variance_fraction, k=args.k,
        grid_f=args.grid_f, grid_r=args.grid_r,
    )


def _cmd_fit(args) -> int:
    t0 = time.monotonic()
    outdir = _outdir(args)
    # raw coordinates: the pipeline centers once and stores the shift, so
    # a later predict run can recognize training rows bitwise
    data = ingest_csv(args.input, args.response_col, do_center=False)
    if data.n_labeled == 0:
        raise UsageError("no labeled rows; check --response-col")
    pipe = fit_pfr(data, k=args.k, variance_fraction=args.variance_fraction,
                   sweeps=args.sweeps, burn=args.burn, thin=args.thin,
                   folds=args.folds, grid_f=args.grid_f, grid_r=args.grid_r,
                   seed=args.seed)
    post, fit = pipe.posterior, pipe.fit
    write_json(outdir / "fit.json", {
        "column_means": pipe.column_means,
        "y_mean": pipe.y_mean,
        "gamma": fit.gamma,
        "k": fit.k,
        "tau_f": fit.tau_f,
        "tau_r": fit.tau_r,
        "sigma2_hat": fit.sigma2_hat,
        "mean_B": post.mean_B,
        "mean_Psi": post.mean_Psi,
        "mean_F": post.mean_F,
        "train_X": post.train_X,
        "constraint": post.constraint,
    })
    outputs = {"model": "fit.json"}
    if not args.no_figures:
        from . import plots

        plots.save_loadings(post.mean_B, outdir / "loadings.png")
        plots.save_cv_surface(fit.cv_table, outdir / "cv_surface.png")
        outputs["figures"] = ["loadings.png", "cv_surface.png"]
    results = {
        "n": data.n, "p": data.p, "n_labeled": data.n_labeled, "k": fit.k,
        "tau_f": fit.tau_f, "tau_r": fit.tau_r, "sigma2_hat": fit.sigma2_hat,
        "cv_error": fit.cv_table[(fit.tau_f, fit.tau_r)],
    }
    _write_report(outdir, args, results, outputs, t0)
    return 0


def _cmd_predict(args) -> int:
    t0 = time.monotonic()
    outdir = _outdir(args)
    payload = read_json(args.model)
    mean_B = np.asarray(payload["mean_B"], dtype=float)
    p, k = mean_B.shape
    post = FactorPosterior(
        mean_B=mean_B,
        mean_Psi=np.asarray(payload["mean_Psi"], dtype=float),
        mean_F=np.asarray(payload["mean_F"], dtype=float),
        draws_B=np.empty((0, p, k)), draws_Psi=np.empty((0, p)),
        draws_F=np.empty((0, 0, k)), n_burn=0, n_keep=0, thin=1,
        train_X=np.asarray(payload["train_X"], dtype=float),
        constraint=payload.get("constraint", "triangular"),
    )
    fit = PfrFit(gamma=np.asarray(payload["gamma"], dtype=float), k=k,
                 tau_f=payload["tau_f"], tau_r=payload["tau_r"],
                 sigma2_hat=payload["sigma2_hat"])
    pipe = PfrPipeline(posterior=post, fit=fit,
                       column_means=np.asarray(payload["column_means"], dtype=float),
                       y_mean=payload["y_mean"])
    data = ingest_csv(args.input, args.response_col, do_center=False)
    preds = pipe.predict(data.X)
    lines = ["y_hat"] + [repr(float(v)) for v in preds]
    atomic_write_text(outdir / "predictions.csv", "\n".join(lines) + "\n")
    results = {"rows": data.n, "mean_prediction": float(preds.mean())}
    _write_report(outdir, args, results, {"predictions": "predictions.csv"}, t0)
    return 0


def _metrics_results(table: MetricsTable) -> dict:
    return {
        "methods": table.methods,
        "percent_best": table.percent_best,
        "mean_relative_error": table.mean_relative_error,
        "excess_relative_error": table.excess_relative_error,
        "scaled_mse": table.scaled_mse,
        "datasets_used": table.datasets_used,
        "datasets_skipped": table.datasets_skipped,
        "skipped_log": table.skipped_log,
    }


def _cmd_simulate(args) -> int:
    t0 = time.monotonic()
    outdir = _outdir(args)
    _check_methods(args.methods, SIM_METHODS)
    datasets = args.datasets
    if datasets is None:
        datasets = 150 if args.full_scale else 50
    cfg = ScenarioConfig(p=args.p, n=args.n, n_labeled=args.n_labeled,
                         scenario=args.scenario)
    table = simulation_study(datasets, cfg, methods=args.methods,
                             seed=args.seed, opts=_study_options(args))
    atomic_write_text(outdir / "metrics.csv", table.to_delimited())
    outputs = {"metrics": "metrics.csv"}
    if not args.no_figures:
        from . import plots

        plots.save_metrics(table, outdir / "metrics.png")
        outputs["figures"] = ["metrics.png"]
    results = _metrics_results(table)
    results["datasets"] = datasets
    results["scenario"] = args.scenario
    _write_report(outdir, args, results, outputs, t0)
    return 0


def _cmd_example2(args) -> int:
    t0 = time.monotonic()
    outdir = _outdir(args)
    lr_frac, pred_frac, scatter = example2_study(args.n, args.replicates,
                                                 seed=args.seed)
    write_scatter(scatter, outdir / "scatter.csv")
    outputs = {"scatter": "scatter.csv"}
    if not args.no_figures:
        from . import plots

        plots.save_scatter(scatter, outdir / "scatter.png")
        outputs["figures"] = ["scatter.png"]
    results = {
        "n_per_replicate": args.n,
        "replicates": args.replicates,
        "lr_favor_fraction": lr_frac,
        "pred_worse_fraction": pred_frac,
        "mean_delta_loglik": float(scatter[:, 0].mean()),
        "mean_delta_mse": float(scatter[:, 1].mean()),
    }
    _write_report(outdir, args, results, outputs, t0)
    return 0


def _cmd_benchmark(args) -> int:
    t0 = time.monotonic()
    outdir = _outdir(args)
    _check_methods(args.methods, BENCH_METHODS)
    data = ingest_csv(args.input, args.response_col, do_center=False)
    if data.y is None:
        raise UsageError("benchmark needs a response column")
    report = benchmark_real(data, methods=args.methods,
                            split_fraction=args.split, folds=args.folds,
                            seed=args.seed, opts=_study_options(args))
    atomic_write_text(outdir / "benchmark.csv", report.to_delimited())
    outputs = {"benchmark": "benchmark.csv"}
    if not args.no_figures:
        from . import plots

        plots.save_benchmark(report, outdir / "benchmark.png")
        outputs["figures"] = ["benchmark.png"]
    results = {
        "methods": report.methods, "sse": report.sse,
        "percent_worse": report.percent_worse, "best": report.best,
        "n_train": report.n_train, "n_test": report.n_test,
    }
    _write_report(outdir, args, results, outputs, t0)
    return 0


def _cmd_select(args) -> int:
    t0 = time.monotonic()
    outdir = _outdir(args)
    data = ingest_csv(args.input, args.response_col, do_center=False)
    if data.n_labeled < 2:
        raise UsageError("select needs labeled rows")
    X, y = data.labeled_arrays()
    k = args.k if args.k is not None else choose_k(X - X.mean(axis=0),
                                                   args.variance_fraction)
    chain, subspace = spike_slab_sampler(
        X, y, k, sweeps=args.sweeps, burn=args.burn, thin=args.thin,
        seed=args.seed, b_sparsity=args.b_sparsity)
    rep = three_question_report(chain)
    lines = ["parameter,inclusion_probability"]
    lines += [f"theta_{g + 1},{rep.prob_theta[g]:.10g}" for g in range(k)]
    lines += [f"lambda_{j + 1},{rep.prob_lambda[j]:.10g}" for j in range(data.p)]
    atomic_write_text(outdir / "inclusion.csv", "\n".join(lines) + "\n")
    outputs = {"inclusion": "inclusion.csv"}
    if args.dump_chain:
        dump_selection(chain, outdir / "chain.csv")
        outputs["chain"] = "chain.csv"
    if not args.no_figures:
        from . import plots

        plots.save_inclusion(rep.prob_theta, rep.prob_lambda,
                             outdir / "inclusion.png")
        outputs["figures"] = ["inclusion.png"]
    results = {
        "k": k,
        "prob_lambda_zero": subspace.prob_lambda_zero,
        "rank_distribution": {str(key): val for key, val
                              in subspace.rank_distribution.items()},
        "prob_theta": rep.prob_theta,
        "prob_lambda": rep.prob_lambda,
    }
    _write_report(outdir, args, results, outputs, t0)
    return 0


def _add_chain_args(sp, sweeps=2000, burn=1000, thin=1):
    sp.add_argument("--sweeps", type=int, default=sweeps)
    sp.add_argument("--burn", type=int, default=burn)
    sp.add_argument("--thin", type=int, default=thin)


def _add_common(sp, seed_required=True):
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--no-figures", action="store_true",
                    help="skip figure rendering")
    if seed_required:
        sp.add_argument("--seed", type=int, required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="partialfactor",
        description="Factor-augmented regression for wide data: fitting, "
                    "prediction, synthetic studies, and benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("fit", help="fit the factor-augmented ridge to a CSV")
    sp.add_argument("--input", required=True)
    sp.add_argument("--response-col", default="y")
    sp.add_argument("--k", type=int, default=None)
    sp.add_argument("--variance-fraction", type=float, default=0.90)
    sp.add_argument("--grid-f", type=_grid, default=DEFAULT_GRID)
    sp.add_argument("--grid-r", type=_grid, default=DEFAULT_GRID)
    sp.add_argument("--folds", type=int, default=10)
    _add_chain_args(sp)
    _add_common(sp)
    sp.set_defaults(func=_cmd_fit)

    sp = sub.add_parser("predict", help="apply a saved fit to new rows")
    sp.add_argument("--input", required=True)
    sp.add_argument("--model", required=True, help="fit.json from a fit run")
    sp.add_argument("--response-col", default="y")
    _add_common(sp, seed_required=False)
    sp.set_defaults(func=_cmd_predict)

    sp = sub.add_parser("simulate", help="synthetic multi-dataset comparison")
    sp.add_argument("--datasets", type=int, default=None)
    sp.add_argument("--full-scale", action="store_true",
                    help="use 150 datasets when --datasets is not given")
    sp.add_argument("--scenario", required=True,
                    choices=("favorable", "unfavorable"))
    sp.add_argument("--methods", type=_methods, default=("PFR", "NIG", "BFR"))
    sp.add_argument("--p", type=int, default=80)
    sp.add_argument("--n", type=int, default=50)
    sp.add_argument("--n-labeled", type=int, default=35)
    sp.add_argument("--k", type=int, default=None)
    sp.add_argument("--variance-fraction", type=float, default=0.90)
    sp.add_argument("--grid-f", type=_grid, default=DEFAULT_GRID)
    sp.add_argument("--grid-r", type=_grid, default=DEFAULT_GRID)
    sp.add_argument("--folds", type=int, default=10)
    _add_chain_args(sp, sweeps=800, burn=400, thin=2)
    _add_common(sp)
    sp.set_defaults(func=_cmd_simulate)

    sp = sub.add_parser("example2", help="likelihood ratio vs prediction study")
    sp.add_argument("--n", type=int, default=10,
                    help="observations per replicate")
    sp.add_argument("--replicates", type=int, default=5000)
    _add_common(sp)
    sp.set_defaults(func=_cmd_example2)

    sp = sub.add_parser("benchmark", help="train/holdout comparison on a CSV")
    sp.add_argument("--input", required=True)
    sp.add_argument("--response-col", default="y")
    sp.add_argument("--methods", type=_methods,
                    default=("PFR", "RR", "PLS", "LARS", "PCR"))
    sp.add_argument("--split", type=float, default=0.75)
    sp.add_argument("--folds", type=int, default=10)
    sp.add_argument("--k", type=int, default=None)
    sp.add_argument("--variance-fraction", type=float, default=0.90)
    sp.add_argument("--grid-f", type=_grid, default=DEFAULT_GRID)
    sp.add_argument("--grid-r", type=_grid, default=DEFAULT_GRID)
    _add_chain_args(sp, sweeps=800, burn=400, thin=2)
    _add_common(sp)
    sp.set_defaults(func=_cmd_benchmark)

    sp = sub.add_parser("select", help="spike-and-slab inclusion report")
    sp.add_argument("--input", required=True)
    sp.add_argument("--response-col", default="y")
    sp.add_argument("--k", type=int, default=None)
    sp.add_argument("--variance-fraction", type=float, default=0.90)
    sp.add_argument("--b-sparsity", action="store_true",
                    help="also place point masses on loadings entries")
    sp.add_argument("--dump-chain", action="store_true",
                    help="write retained draws to chain.csv")
    _add_chain_args(sp)
    _add_common(sp)
    sp.set_defaults(func=_cmd_select)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ParseError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
