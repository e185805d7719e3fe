"""Seeded data generators and CSV ingestion for the bundled experiments."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .models import Observation
from .rng import substream

NORMAL_LOCATION_DGPS = ("well_specified", "mixture", "claw", "heavy_tails")


@dataclass
class TabularDataset:
    """Homogeneous rows of observations held as arrays.

    ``responses`` is (n,) for scalar outcomes, (n, 2) floats for bivariate
    outcomes, and (n, 2) integer (tries, successes) pairs when
    ``count_response`` is set.  ``covariates`` is (n, d) or None.  Optional
    ``weights`` mark replicated observations (e.g. grouped Bernoulli trials);
    all in-sample averages become weighted means.
    """

    responses: np.ndarray
    covariates: np.ndarray | None
    columns: list[str]
    count_response: bool = False
    transform: dict | None = field(default=None)
    weights: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.responses.shape[0]

    def norm_weights(self) -> np.ndarray | None:
        if self.weights is None:
            return None
        return self.weights / self.weights.sum()

    def rows(self):
        for i in range(self.n):
            resp = self.responses[i]
            if self.count_response:
                resp = (int(resp[0]), int(resp[1]))
            elif np.ndim(resp) == 0:
                resp = float(resp)
            cov = None if self.covariates is None else self.covariates[i]
            yield Observation(response=resp, covariate=cov)


def gen_normal_location(dgp: str, n: int, seed: int) -> TabularDataset:
    """Scalar draws from the four location-model data-generating processes."""
    if dgp not in NORMAL_LOCATION_DGPS:
        raise ConfigurationError(
            f"unknown dgp {dgp!r}; expected one of {NORMAL_LOCATION_DGPS}")
    if n < 1:
        raise ConfigurationError(f"need n >= 1, got {n}")
    rng = substream(seed, "normal_location", dgp)
    if dgp == "well_specified":
        y = rng.standard_normal(n)
    elif dgp == "mixture":
        centers = np.where(rng.random(n) < 0.2, -2.0, 2.0)
        y = centers + rng.standard_normal(n)
    elif dgp == "claw":
        centers = np.array([-2.0, 0.0, 2.0])[rng.integers(0, 3, size=n)]
        y = centers + rng.standard_normal(n)
    else:
        y = rng.standard_t(1.5, size=n)
    return TabularDataset(responses=y, covariates=None, columns=["y"])


def gen_quadrant_classification(n: int, seed: int) -> TabularDataset:
    """Uniform covariates on [-2, 2]^2 with quadrant-determined labels.

    Labels are 0 on the x0<0, x1>0 quadrant, 1 on the x0>0, x1<0 quadrant,
    and fair coin flips elsewhere.
    """
    if n < 1:
        raise ConfigurationError(f"need n >= 1, got {n}")
    rng = substream(seed, "quadrant_classification")
    x = rng.uniform(-2.0, 2.0, size=(n, 2))
    y = np.where(rng.random(n) < 0.5, 1.0, 0.0)
    y[(x[:, 0] < 0) & (x[:, 1] > 0)] = 0.0
    y[(x[:, 0] > 0) & (x[:, 1] < 0)] = 1.0
    return TabularDataset(responses=y, covariates=x, columns=["x0", "x1", "y"])


def gen_mixture_regression(n: int, seed: int) -> TabularDataset:
    """Mixture of linear regressions: slope (0, 2) or (0, -2) per observation."""
    if n < 1:
        raise ConfigurationError(f"need n >= 1, got {n}")
    rng = substream(seed, "mixture_regression")
    x = rng.standard_normal((n, 2))
    slope = np.where(rng.random(n) < 0.5, 2.0, -2.0)
    y = slope * x[:, 1] + rng.standard_normal(n)
    return TabularDataset(responses=y, covariates=x, columns=["x0", "x1", "y"])


GOLF_HEADER = ["distance_ft", "tries", "successes"]
PENGUINS_HEADER = ["bill_length_mm", "bill_depth_mm"]


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row]
    if not rows:
        raise ConfigurationError(f"empty CSV file: {path}")
    return rows[0], rows[1:]


def _parse_floats(rows, path, ncols):
    bad = []
    out = []
    for lineno, row in enumerate(rows, start=2):
        try:
            vals = [float(v) for v in row[:ncols]]
            if len(row) < ncols or any(not np.isfinite(v) for v in vals):
                raise ValueError
        except ValueError:
            bad.append(lineno)
            continue
        out.append(vals)
    if bad:
        raise ConfigurationError(f"{path}: unparseable or non-finite cells on lines {bad}")
    return np.array(out, dtype=float)


def load_csv_dataset(path, schema: str) -> TabularDataset:
    """Load a bundled or user dataset; schema is 'golf', 'penguins', or 'generic'.

    The penguins schema centres each column to zero mean and scales it to unit
    variance, recording the transform on the returned dataset.  The generic
    schema expects covariate columns followed by a final response column y.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"dataset file not found: {path}")
    header, rows = _read_rows(path)
    if schema == "golf":
        if header != GOLF_HEADER:
            raise ConfigurationError(
                f"{path}: expected header {GOLF_HEADER}, got {header}")
        vals = _parse_floats(rows, path, 3)
        tries, succ = vals[:, 1], vals[:, 2]
        if np.any(succ < 0) or np.any(succ > tries):
            raise ConfigurationError(f"{path}: needs 0 <= successes <= tries")
        responses = np.column_stack([tries, succ])
        return TabularDataset(responses=responses, covariates=vals[:, :1],
                              columns=GOLF_HEADER, count_response=True)
    if schema == "penguins":
        if header != PENGUINS_HEADER:
            raise ConfigurationError(
                f"{path}: expected header {PENGUINS_HEADER}, got {header}")
        vals = _parse_floats(rows, path, 2)
        center = vals.mean(axis=0)
        scale = vals.std(axis=0)
        if np.any(scale == 0):
            raise ConfigurationError(f"{path}: constant column cannot be standardised")
        standardised = (vals - center) / scale
        return TabularDataset(
            responses=standardised, covariates=None, columns=PENGUINS_HEADER,
            transform={"center": center.tolist(), "scale": scale.tolist()})
    if schema == "generic":
        if len(header) < 2 or header[-1] != "y":
            raise ConfigurationError(
                f"{path}: generic schema needs covariate columns then a final 'y'")
        vals = _parse_floats(rows, path, len(header))
        return TabularDataset(responses=vals[:, -1], covariates=vals[:, :-1],
                              columns=list(header))
    raise ConfigurationError(f"unknown schema {schema!r}")


def expand_binomial_trials(dataset: TabularDataset) -> TabularDataset:
    """Represent grouped (tries, successes) rows as weighted Bernoulli trials.

    Each group contributes a success cell and a failure cell with the trial
    counts as weights and the covariate (1, distance), so a plain logistic
    regression with an intercept fits the individual putts without expanding
    them row by row.
    """
    if not dataset.count_response:
        raise ConfigurationError("expand_binomial_trials needs grouped count data")
    xs, ys, ws = [], [], []
    for i in range(dataset.n):
        tries, succ = int(dataset.responses[i][0]), int(dataset.responses[i][1])
        d = float(dataset.covariates[i][0])
        for y, w in ((1.0, succ), (0.0, tries - succ)):
            if w > 0:
                xs.append([1.0, d])
                ys.append(y)
                ws.append(float(w))
    return TabularDataset(responses=np.array(ys), covariates=np.array(xs),
                          columns=["intercept", "distance_ft", "y"],
                          weights=np.array(ws))


def estimate_regression_sigma(dataset: TabularDataset) -> float:
    """Fixed noise scale from OLS residuals: sqrt(RSS / (n - d - 1))."""
    X = dataset.covariates
    y = dataset.responses
    n, d = X.shape
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    rss = float(np.sum((y - X @ beta) ** 2))
    return float(np.sqrt(rss / (n - d - 1)))
