import dataclasses
import json

import numpy as np
import pytest
from click.testing import CliRunner

from propost import ConfigurationError
from propost.cli import main
from propost.experiments import (EXPERIMENTS, default_config, fitting_dataset,
                                 build_dataset, parse_config, read_posterior_csv,
                                 render_config, resolve_losses, run_experiment,
                                 build_model)
from propost.scoring import ExactKernelTandem, LogDI, LogMS


def tiny_config(name, out, **extra):
    cfg = default_config(name, output_dir=str(out), **extra)
    sampler = dataclasses.replace(cfg.sampler, iters=200, burn_in=100)
    mala = None if cfg.mala is None else dataclasses.replace(
        cfg.mala, iters=300, warmup=150)
    return dataclasses.replace(cfg, sampler=sampler, mala=mala)


@pytest.mark.parametrize("name", EXPERIMENTS)
def test_config_round_trip(name):
    cfg = default_config(name)
    assert parse_config(render_config(cfg)) == cfg
    blob = json.loads(json.dumps(render_config(cfg)))
    assert parse_config(blob) == cfg


def test_unknown_config_keys_rejected():
    blob = render_config(default_config("golf"))
    blob["typo_key"] = 1
    with pytest.raises(ConfigurationError, match="typo_key"):
        parse_config(blob)
    blob = render_config(default_config("golf"))
    blob["sampler"]["particules"] = 3
    with pytest.raises(ConfigurationError, match="particules"):
        parse_config(blob)


def test_default_losses_mirror_experiments():
    for name, expected in [("normal_location", ExactKernelTandem),
                           ("mixture_regression", ExactKernelTandem),
                           ("penguins", ExactKernelTandem),
                           ("golf", LogMS)]:
        cfg = default_config(name)
        train = build_dataset(cfg)
        fit = fitting_dataset(cfg, train)
        model = build_model(cfg, train)
        losses = resolve_losses(cfg, model, fit)
        assert isinstance(losses["pro"], expected), name
    cfg = default_config("quadrant_classification")
    losses = resolve_losses(cfg, build_model(cfg, build_dataset(cfg)),
                            build_dataset(cfg))
    assert isinstance(losses["pro"], LogDI)
    assert isinstance(losses["pro_ms"], LogMS) and losses["pro_ms"].k == 2


def test_golf_fitting_cells():
    cfg = default_config("golf")
    train = build_dataset(cfg)
    fit = fitting_dataset(cfg, train)
    assert fit.n == 38                       # success + failure cell per distance
    assert fit.weights.sum() == 5988.0       # total putts in the bundled data
    assert set(np.unique(fit.responses)) == {0.0, 1.0}


def test_run_experiment_artifacts_and_determinism(tmp_path):
    cfg = tiny_config("normal_location", tmp_path / "a", dgp="mixture")
    art = run_experiment(cfg)
    expected = {"config.json", "data.csv", "metrics.json", "posterior_pro.csv",
                "posterior_gibbs.csv", "trajectory_pro.csv",
                "predictive_density_pro.csv", "predictive_density_gibbs.csv"}
    assert expected <= {p.name for p in art.iterdir()}

    post = read_posterior_csv(art / "posterior_pro.csv")
    # p particles x post-burn-in snapshots
    snapshots = sum(1 for s in range(0, 201, 10) if s > 100)
    assert post.atoms.shape == (cfg.sampler.particles * snapshots, 1)

    metrics = json.loads((art / "metrics.json").read_text())
    assert metrics["seed"] == cfg.seed
    assert "posterior_mean" in metrics and "mode_masses" in metrics
    assert "acceptance_rate" in metrics

    echo = parse_config(json.loads((art / "config.json").read_text()))
    assert echo == cfg

    cfg_b = dataclasses.replace(cfg, output_dir=str(tmp_path / "b"))
    art_b = run_experiment(cfg_b, workers=3)
    for name in sorted(p.name for p in art.iterdir()):
        if name.endswith(".csv"):
            assert (art / name).read_bytes() == (art_b / name).read_bytes(), name


def test_trajectory_csv_particle_count(tmp_path):
    cfg = tiny_config("golf", tmp_path / "g")
    art = run_experiment(cfg)
    rows = (art / "trajectory_pro.csv").read_text().strip().splitlines()
    header = rows[0].split(",")
    assert header[:2] == ["iter", "particle"]
    particles = {int(r.split(",")[1]) for r in rows[1:]}
    assert particles == set(range(cfg.sampler.particles))


def test_regression_metrics_record_reference_values(tmp_path):
    cfg = tiny_config("mixture_regression", tmp_path / "r", n=80, n_test=40)
    art = run_experiment(cfg)
    metrics = json.loads((art / "metrics.json").read_text())
    assert metrics["reference_elpd_pro"] == -1834.68
    assert metrics["reference_elpd_gibbs"] == -3593.67
    assert "elpd_pro" in metrics and "elpd_gibbs" in metrics
    diffs = (art / "lppd_diff.csv").read_text().strip().splitlines()
    assert len(diffs) == 41


def test_cli_experiment_and_eval(tmp_path):
    runner = CliRunner()
    cfg = tiny_config("quadrant_classification", tmp_path / "cls", n=150, n_test=60)
    cfg_file = tmp_path / "config.json"
    cfg_file.write_text(json.dumps(render_config(cfg)))
    res = runner.invoke(main, ["experiment", "quadrant_classification",
                               "--config", str(cfg_file)])
    assert res.exit_code == 0, res.output
    art = tmp_path / "cls"

    res = runner.invoke(main, [
        "eval", "--posterior", str(art / "posterior_pro.csv"),
        "--test", str(art / "data_test.csv"), "--model", "logistic"])
    assert res.exit_code == 0, res.output
    metrics = json.loads(res.output)
    assert "elpd" in metrics and metrics["n_test"] == 60

    grid_file = tmp_path / "grid.csv"
    res = runner.invoke(main, [
        "eval", "--posterior", str(art / "posterior_pro.csv"),
        "--model", "logistic", "--grid", str(grid_file), "--grid-size", "10"])
    assert res.exit_code == 0, res.output
    assert len(grid_file.read_text().strip().splitlines()) == 101


def test_cli_rejects_bad_config(tmp_path):
    runner = CliRunner()
    res = runner.invoke(main, ["experiment", "normal_location",
                               "--dgp", "cauchy", "--out", str(tmp_path / "x")])
    assert res.exit_code == 1
    assert "error" in res.output


def test_cli_check_suites():
    runner = CliRunner()
    res = runner.invoke(main, ["gradcheck"])
    assert res.exit_code == 0, res.output
    assert "FAIL" not in res.output
    res = runner.invoke(main, ["oracle-check"])
    assert res.exit_code == 0, res.output
    assert "FAIL" not in res.output
