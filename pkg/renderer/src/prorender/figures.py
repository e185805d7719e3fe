"""Figure builders over propost artifact directories.

Every number plotted here is read from the documented CSV/JSON artifacts; the
renderer performs no inference of its own and must not import the inference
package.  Each builder validates the files it needs and returns a matplotlib
Figure.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

PRO_COLOR = "#1f77b4"
GIBBS_COLOR = "#d62728"
DATA_COLOR = "0.55"

FIGURE_KINDS = ("overlay_1d", "trajectories", "decision_map",
                "regression_triptych", "golf_bands")


class SchemaError(ValueError):
    """An artifact file is missing or lacks a required column."""


def _require(directory: Path, name: str) -> Path:
    path = directory / name
    if not path.exists():
        raise SchemaError(f"{directory} is missing required artifact {name}")
    return path


def _read_csv(path: Path, required: tuple[str, ...]) -> np.ndarray:
    data = np.genfromtxt(path, delimiter=",", names=True)
    names = data.dtype.names or ()
    missing = [c for c in required if c not in names]
    if missing:
        raise SchemaError(f"{path} lacks columns {missing}; found {list(names)}")
    return np.atleast_1d(data)


def _read_config(directory: Path) -> dict:
    return json.loads(_require(directory, "config.json").read_text())


def _posterior_dims(path: Path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    dims = [c for c in header if c.startswith("dim_")]
    data = _read_csv(path, tuple(dims))
    return np.column_stack([data[d] for d in dims])


def overlay_1d(directory: Path) -> plt.Figure:
    """Data histogram overlaid with the predictive densities."""
    data = _read_csv(_require(directory, "data.csv"), ("y",))
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.hist(data["y"], bins=40, density=True, color=DATA_COLOR, alpha=0.6,
            label="data")
    for label, color, fname in (("PrO", PRO_COLOR, "predictive_density_pro.csv"),
                                ("Gibbs", GIBBS_COLOR, "predictive_density_gibbs.csv")):
        path = directory / fname
        if path.exists():
            dens = _read_csv(path, ("y", "density"))
            ax.plot(dens["y"], dens["density"], color=color, lw=2,
                    label=f"{label} predictive")
    ax.set_xlabel("y")
    ax.set_ylabel("density")
    ax.legend(frameon=False)
    fig.tight_layout()
    return fig


def trajectories(directory: Path) -> plt.Figure:
    """One polyline per particle per dimension, with the burn-in marked."""
    config = _read_config(directory)
    traj = _read_csv(_require(directory, "trajectory_pro.csv"),
                     ("iter", "particle", "dim_0"))
    dims = [c for c in traj.dtype.names if c.startswith("dim_")]
    particles = np.unique(traj["particle"]).astype(int)
    fig, axes = plt.subplots(len(dims), 1, figsize=(8, 2.8 * len(dims)),
                             sharex=True, squeeze=False)
    for d, dim in enumerate(dims):
        ax = axes[d][0]
        for j in particles:
            mask = traj["particle"] == j
            ax.plot(traj["iter"][mask], traj[dim][mask], color=PRO_COLOR,
                    alpha=0.5, lw=0.8)
        ax.axvline(config["sampler"]["burn_in"], color="k", ls="--", lw=1)
        ax.set_ylabel(dim)
    axes[-1][0].set_xlabel("iteration")
    fig.tight_layout()
    return fig


def decision_map(directory: Path) -> plt.Figure:
    """Predictive-probability heatmaps from the emitted grids."""
    panels = [(label, directory / f"predictive_grid_{stub}.csv")
              for label, stub in (("PrO (DI)", "pro"), ("PrO (MS)", "pro_ms"),
                                  ("Gibbs", "gibbs"))
              if (directory / f"predictive_grid_{stub}.csv").exists()]
    if not panels:
        raise SchemaError(f"{directory} has no predictive_grid_*.csv artifacts")
    data = _read_csv(_require(directory, "data.csv"), ("x0", "x1", "y"))
    fig, axes = plt.subplots(1, len(panels), figsize=(4.2 * len(panels), 4),
                             squeeze=False)
    for ax, (label, path) in zip(axes[0], panels):
        grid = _read_csv(path, ("x0", "x1", "p1"))
        xs = np.unique(grid["x0"])
        ys = np.unique(grid["x1"])
        p = grid["p1"].reshape(xs.size, ys.size)
        mesh = ax.pcolormesh(xs, ys, p.T, cmap="RdBu_r", vmin=0, vmax=1,
                             shading="nearest")
        pos = data["y"] == 1
        ax.scatter(data["x0"][pos], data["x1"][pos], s=4, c="k", marker="+")
        ax.scatter(data["x0"][~pos], data["x1"][~pos], s=4, c="w", marker=".",
                   edgecolors="none")
        ax.set_title(label)
        ax.set_xlabel("x0")
    axes[0][0].set_ylabel("x1")
    fig.colorbar(mesh, ax=axes[0], label="P(y=1)", shrink=0.85)
    return fig


def regression_triptych(directory: Path) -> plt.Figure:
    """Posterior scatter, predictive clouds, and per-point lppd differences."""
    pro = _posterior_dims(_require(directory, "posterior_pro.csv"))
    gibbs = _posterior_dims(_require(directory, "posterior_gibbs.csv"))
    test = _read_csv(_require(directory, "data_test.csv"), ("x1", "y"))
    fig, axes = plt.subplots(1, 3, figsize=(13, 4))

    axes[0].scatter(gibbs[:, 0], gibbs[:, 1], s=5, alpha=0.3, c=GIBBS_COLOR,
                    label="Gibbs")
    axes[0].scatter(pro[:, 0], pro[:, 1], s=5, alpha=0.3, c=PRO_COLOR, label="PrO")
    axes[0].set_xlabel("coefficient 0")
    axes[0].set_ylabel("coefficient 1")
    axes[0].legend(frameon=False)

    axes[1].scatter(test["x1"], test["y"], s=6, c=DATA_COLOR, label="test data")
    for label, color, fname in (("PrO", PRO_COLOR, "predictive_draws_pro.csv"),
                                ("Gibbs", GIBBS_COLOR, "predictive_draws_gibbs.csv")):
        path = directory / fname
        if path.exists():
            draws = _read_csv(path, ("x1", "y_draw"))
            axes[1].scatter(draws["x1"], draws["y_draw"], s=3, alpha=0.25,
                            c=color, label=f"{label} draws")
    axes[1].set_xlabel("x1")
    axes[1].set_ylabel("y")
    axes[1].legend(frameon=False, markerscale=2)

    diff = _read_csv(_require(directory, "lppd_diff.csv"), ("test_index", "diff"))
    axes[2].axhline(0.0, color="k", lw=0.8)
    axes[2].scatter(diff["test_index"], diff["diff"], s=5, c=PRO_COLOR)
    axes[2].set_xlabel("test point")
    axes[2].set_ylabel("lppd(PrO) - lppd(Gibbs)")
    fig.tight_layout()
    return fig


def golf_bands(directory: Path) -> plt.Figure:
    """Putting curves with credible bands plus posterior marginals."""
    data = _read_csv(_require(directory, "data.csv"),
                     ("distance_ft", "tries", "successes"))
    fig, axes = plt.subplots(1, 3, figsize=(13, 4))
    axes[0].scatter(data["distance_ft"], data["successes"] / data["tries"],
                    c="k", s=18, zorder=5, label="observed proportion")
    for label, color, fname in (("PrO", PRO_COLOR, "putting_curve_pro.csv"),
                                ("Gibbs", GIBBS_COLOR, "putting_curve_gibbs.csv")):
        path = directory / fname
        if path.exists():
            curve = _read_csv(path, ("distance_ft", "mean_prob", "lo80", "hi80"))
            axes[0].plot(curve["distance_ft"], curve["mean_prob"], color=color,
                         lw=2, label=f"{label} mean")
            axes[0].fill_between(curve["distance_ft"], curve["lo80"],
                                 curve["hi80"], color=color, alpha=0.25)
    axes[0].set_xlabel("distance (ft)")
    axes[0].set_ylabel("P(success)")
    axes[0].set_ylim(0, 1)
    axes[0].legend(frameon=False)

    pro = _posterior_dims(_require(directory, "posterior_pro.csv"))
    gibbs_path = directory / "posterior_gibbs.csv"
    gibbs = _posterior_dims(gibbs_path) if gibbs_path.exists() else None
    for ax, dim, name in ((axes[1], 0, "intercept"), (axes[2], 1, "slope")):
        ax.hist(pro[:, dim], bins=30, density=True, color=PRO_COLOR, alpha=0.6,
                label="PrO")
        if gibbs is not None:
            ax.hist(gibbs[:, dim], bins=30, density=True, color=GIBBS_COLOR,
                    alpha=0.6, label="Gibbs")
        ax.set_xlabel(name)
        ax.legend(frameon=False)
    fig.tight_layout()
    return fig


BUILDERS = {
    "overlay_1d": overlay_1d,
    "trajectories": trajectories,
    "decision_map": decision_map,
    "regression_triptych": regression_triptych,
    "golf_bands": golf_bands,
}


def render(kind: str, directory, out_path) -> Path:
    """Render one figure kind from an artifact directory to an image file."""
    if kind not in BUILDERS:
        raise ValueError(f"unknown figure kind {kind!r}; choose from {FIGURE_KINDS}")
    directory = Path(directory)
    if not directory.is_dir():
        raise SchemaError(f"not an artifact directory: {directory}")
    fig = BUILDERS[kind](directory)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
    return out_path
