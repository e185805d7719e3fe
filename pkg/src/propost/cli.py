"""Command-line surface: run experiments, self-checks, and posterior evaluation."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .checks import (GRAD_TOL, QUAD_TOL, gradient_suite, kernel_oracle_suite,
                     tandem_identity_suite)
from .datasets import GOLF_HEADER, PENGUINS_HEADER, TabularDataset, load_csv_dataset
from .errors import ConfigurationError
from .evaluation import elpd
from .experiments import (EXPERIMENTS, LOSS_CHOICES, classification_grid,
                          default_config, parse_config, read_posterior_csv,
                          run_experiment, write_csv)
from .models import (BinomialLogit, GaussianLocation, IsoGaussian2D,
                     LinearRegressionGauss, LogisticRegression)

MODEL_NAMES = ("gaussian_location", "iso_gaussian_2d", "linear_regression",
               "logistic", "binomial_logit")


@click.group()
def main():
    """Predictively oriented posteriors: experiments, checks, evaluation."""


@main.command()
@click.argument("name", type=click.Choice(EXPERIMENTS))
@click.option("--dgp", default=None, help="normal_location data process")
@click.option("--n", type=int, default=None, help="training sample size")
@click.option("--n-test", type=int, default=None, help="held-out sample size")
@click.option("--seed", type=int, default=7)
@click.option("--loss", type=click.Choice(LOSS_CHOICES + ("default",)), default=None)
@click.option("--out", default=None, help="artifact directory")
@click.option("--config", "config_path", default=None,
              help="JSON config file (overrides all other flags)")
@click.option("--workers", type=int, default=1, help="drift worker threads")
def experiment(name, dgp, n, n_test, seed, loss, out, config_path, workers):
    """Run one experiment and write its artifact directory."""
    try:
        if config_path:
            config = parse_config(json.loads(Path(config_path).read_text()))
        else:
            config = default_config(name, dgp=dgp, n=n, n_test=n_test,
                                    seed=seed, loss=loss, output_dir=out)
        art = run_experiment(config, workers=workers)
    except (ConfigurationError, ArithmeticError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"artifacts written to {art}")


@main.command()
def gradcheck():
    """Finite-difference check of every loss and log-target gradient."""
    results = gradient_suite()
    failed = False
    for name, err in results.items():
        ok = err < GRAD_TOL
        failed |= not ok
        click.echo(f"{'PASS' if ok else 'FAIL'}  {name:32s} rel err {err:.3e}")
    sys.exit(1 if failed else 0)


@main.command(name="oracle-check")
def oracle_check():
    """Kernel embeddings vs quadrature/Monte Carlo, and the tandem identity."""
    failed = False
    res = kernel_oracle_suite()
    bounds = {
        "kernel_mean_vs_quadrature_abs": QUAD_TOL,
        "kernel_cross_vs_quadrature_abs": QUAD_TOL,
        "kernel_mean_vs_mc_in_se": 4.0,
        "kernel_cross_vs_mc_in_se": 4.0,
    }
    for name, err in res.items():
        ok = err < bounds[name]
        failed |= not ok
        click.echo(f"{'PASS' if ok else 'FAIL'}  {name:32s} {err:.3e} (< {bounds[name]:g})")
    ident = tandem_identity_suite()
    ok = ident < 1e-10
    failed |= not ok
    click.echo(f"{'PASS' if ok else 'FAIL'}  tandem_identity_abs             {ident:.3e} (< 1e-10)")
    sys.exit(1 if failed else 0)


def _build_model(model_name, dim, sigma):
    if model_name == "gaussian_location":
        return GaussianLocation(sigma=sigma if sigma else 1.0)
    if model_name == "iso_gaussian_2d":
        return IsoGaussian2D(sigma=sigma if sigma else 1.0)
    if model_name == "linear_regression":
        return LinearRegressionGauss(dim=dim, sigma=sigma if sigma else 1.0)
    if model_name == "logistic":
        return LogisticRegression(dim=dim)
    return BinomialLogit()


def _load_test_dataset(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if header == GOLF_HEADER:
        return load_csv_dataset(path, "golf")
    if header == PENGUINS_HEADER:
        return load_csv_dataset(path, "penguins")
    if header == ["y"]:
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=1)
        return TabularDataset(responses=np.atleast_1d(rows), covariates=None,
                              columns=["y"])
    if len(header) == 2 and header != ["x0", "y"] and header[-1] != "y":
        # two response columns, e.g. bivariate location data
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return TabularDataset(responses=rows, covariates=None, columns=header)
    return load_csv_dataset(path, "generic")


@main.command(name="eval")
@click.option("--posterior", "posterior_path", required=True, type=click.Path(exists=True))
@click.option("--test", "test_path", default=None, type=click.Path(exists=True))
@click.option("--model", "model_name", type=click.Choice(MODEL_NAMES), required=True)
@click.option("--sigma", type=float, default=None, help="fixed noise scale where applicable")
@click.option("--out", default=None, help="write metrics JSON here instead of stdout")
@click.option("--grid", "grid_path", default=None,
              help="write a predictive-probability grid CSV (logistic model)")
@click.option("--grid-bounds", nargs=2, type=float, default=(-2.0, 2.0))
@click.option("--grid-size", type=int, default=50)
def eval_cmd(posterior_path, test_path, model_name, sigma, out, grid_path,
             grid_bounds, grid_size):
    """Evaluate a posterior CSV: held-out elpd and/or predictive grids."""
    try:
        posterior = read_posterior_csv(posterior_path)
        model = _build_model(model_name, posterior.atoms.shape[1], sigma)
        metrics = {"atoms": int(posterior.atoms.shape[0])}
        if test_path:
            test = _load_test_dataset(test_path)
            report = elpd(posterior, model, test)
            metrics["elpd"] = report.elpd
            metrics["lppd_mean"] = report.elpd / report.n_test
            metrics["n_test"] = report.n_test
        if grid_path:
            if model_name != "logistic":
                raise ConfigurationError("--grid is defined for the logistic model")
            rows = classification_grid(posterior, bounds=tuple(grid_bounds),
                                       size=grid_size)
            write_csv(Path(grid_path), ["x0", "x1", "p1"],
                      (tuple(map(float, r)) for r in rows))
            metrics["grid"] = str(grid_path)
    except (ConfigurationError, ArithmeticError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    text = json.dumps(metrics, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    else:
        click.echo(text)


if __name__ == "__main__":
    main()
