import math

import numpy as np
import pytest

from propost import (ClosedForm, ConfigurationError, ExactKernelTandem,
                     GaussianLocation, GaussianPrior, KernelSpec,
                     LinearRegressionGauss, LogDI, LogisticRegression, LogMS,
                     NumericError, k_schedule, lambda_schedule,
                     sym_interaction_grad)
from propost.datasets import TabularDataset, gen_normal_location
from propost.evaluation import finite_diff_check
from propost.models import Observation, density_sup
from propost.rng import substream
from propost.sampler import (ParticleCloud, SamplerConfig, _draw_subsets,
                             _step, initial_cloud, interaction_grads, run_wgf,
                             wgf_step)

KERNEL = KernelSpec(lengthscale=1.1)
TANDEM = ExactKernelTandem(kernel=KERNEL, estimator=ClosedForm())


def small_dataset(seed=0, n=8):
    rng = substream(seed, "data")
    return TabularDataset(responses=rng.standard_normal(n) + 0.5,
                          covariates=None, columns=["y"])


def regression_dataset(seed=1, n=7):
    rng = substream(seed, "regdata")
    x = rng.standard_normal((n, 2))
    y = x @ np.array([0.0, 1.5]) + 0.3 * rng.standard_normal(n)
    return TabularDataset(responses=y, covariates=x, columns=["x0", "x1", "y"])


def logistic_dataset(seed=2, n=9):
    rng = substream(seed, "classdata")
    x = rng.uniform(-2, 2, size=(n, 2))
    y = (rng.random(n) < 0.5).astype(float)
    return TabularDataset(responses=y, covariates=x, columns=["x0", "x1", "y"])


def base_config(**kw):
    defaults = dict(lambda_n=5.0, k=2, particles=6, dt=1e-3, iters=10,
                    burn_in=0, seed=3, prior=GaussianPrior.standard(1))
    defaults.update(kw)
    return SamplerConfig(**defaults)


# -- schedules -----------------------------------------------------------------


def test_lambda_schedule_examples():
    assert lambda_schedule(1000, "exact_or_di") == pytest.approx(
        math.sqrt(1000) / math.log(1000), rel=1e-12)
    n = math.e**2
    assert lambda_schedule(n, "exact_or_di") == pytest.approx(math.sqrt(n) / 2, rel=1e-9)
    assert lambda_schedule(1000, "ms_log", k=5) == pytest.approx(
        math.sqrt(1000 / (5 * math.log(5))), rel=1e-12)
    with pytest.raises(ConfigurationError):
        lambda_schedule(1, "exact_or_di")


def test_k_schedule():
    assert k_schedule(1000) == 5
    assert k_schedule(2) == 2
    ks = [k_schedule(n) for n in (10**2, 10**3, 10**4, 10**5)]
    assert ks == sorted(ks)


# -- reference symmetrised gradient ----------------------------------------------


def test_sym_grad_zero_at_symmetric_point():
    data = TabularDataset(responses=np.array([0.8]), covariates=None, columns=["y"])
    model = GaussianLocation(sigma=1.0)
    g = sym_interaction_grad(TANDEM, model, data, np.array([0.8]), [np.array([0.8])])
    assert abs(g[0]) < 1e-14


@pytest.mark.parametrize("loss,model,dataset", [
    (TANDEM, GaussianLocation(sigma=1.0), small_dataset()),
    (TANDEM, LinearRegressionGauss(dim=2, sigma=0.9), regression_dataset()),
    (LogDI(u=density_sup(GaussianLocation(1.0))), GaussianLocation(1.0), small_dataset()),
    (LogDI(u=1.0), LogisticRegression(2), logistic_dataset()),
    (LogMS(k=2), GaussianLocation(1.0), small_dataset()),
    (LogMS(k=3), LogisticRegression(2), logistic_dataset()),
])
def test_sym_grad_matches_finite_differences(loss, model, dataset):
    rng = substream(13, "symfd", type(loss).__name__, type(model).__name__)
    for trial in range(20):
        others = [rng.standard_normal(model.dim) for _ in range(loss.k - 1)]

        def scalar(th):
            # symmetrised in-sample loss averaged over slot placements
            total = 0.0
            tuples = []
            full = [th] + others
            for j in range(loss.k):
                perm = [x for i, x in enumerate(full) if i != 0]
                perm.insert(j, th)
                tuples.append(perm)
            for obs in dataset.rows():
                for tup in tuples:
                    if isinstance(loss, ExactKernelTandem):
                        from propost import tandem_loss_mmd
                        total += tandem_loss_mmd(model, tup[0], tup[1], obs, loss).value
                    elif isinstance(loss, LogDI):
                        from propost import loss_di_log
                        total += loss_di_log(model, tup[0], tup[1], obs, loss.u).value
                    else:
                        from propost import loss_ms_log
                        total += loss_ms_log(model, tup, obs).value
            return total / (dataset.n * loss.k)

        point = rng.standard_normal(model.dim)
        err = finite_diff_check(
            scalar,
            lambda th: sym_interaction_grad(loss, model, dataset, th, others),
            [point])
        assert err < 1e-4


def test_sym_grad_ms_equal_atoms_k3():
    model = GaussianLocation(sigma=1.0)
    data = small_dataset()
    th = np.array([0.6])
    g = sym_interaction_grad(LogMS(k=3), model, data, th, [th.copy(), th.copy()])
    direct = -np.mean([model.grad_log_density(th, obs)[0] for obs in data.rows()]) / 3
    assert g[0] == pytest.approx(direct, rel=1e-10)


def test_sym_grad_partner_count_validation():
    with pytest.raises(ConfigurationError):
        sym_interaction_grad(LogMS(k=3), GaussianLocation(1.0), small_dataset(),
                             np.array([0.0]), [np.array([1.0])])


# -- vectorised drift agrees with the looped reference ----------------------------


@pytest.mark.parametrize("loss,model,dataset", [
    (TANDEM, GaussianLocation(sigma=1.0), small_dataset()),
    (TANDEM, LinearRegressionGauss(dim=2, sigma=0.9), regression_dataset()),
    (LogDI(u=density_sup(GaussianLocation(1.0))), GaussianLocation(1.0), small_dataset()),
    (LogMS(k=2), LogisticRegression(2), logistic_dataset()),
])
def test_vectorised_drift_matches_reference_exhaustive(loss, model, dataset):
    rng = substream(14, "drift", type(loss).__name__, type(model).__name__)
    positions = rng.standard_normal((5, model.dim))
    fast = interaction_grads(loss, model, dataset, positions)
    for j in range(5):
        ref = np.mean([
            sym_interaction_grad(loss, model, dataset, positions[j], [positions[i]])
            for i in range(5) if i != j], axis=0)
        np.testing.assert_allclose(fast[j], ref, rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("loss,model,dataset", [
    (TANDEM, GaussianLocation(sigma=1.0), small_dataset()),
    (TANDEM, LinearRegressionGauss(dim=2, sigma=0.9), regression_dataset()),
    (LogDI(u=density_sup(GaussianLocation(1.0))), GaussianLocation(1.0), small_dataset()),
    (LogMS(k=2), LogisticRegression(2), logistic_dataset()),
    (LogMS(k=3), LogisticRegression(2), logistic_dataset()),
])
def test_vectorised_drift_matches_reference_subsets(loss, model, dataset):
    rng = substream(15, "driftsub", type(loss).__name__, type(model).__name__)
    p = 6
    positions = rng.standard_normal((p, model.dim))
    config = SamplerConfig(lambda_n=1.0, k=loss.k, particles=p, dt=1e-3, iters=2,
                           burn_in=0, seed=4,
                           prior=GaussianPrior.standard(model.dim),
                           subset_batch=3)
    subsets = _draw_subsets(config, substream(4, "sub"), p)
    fast = interaction_grads(loss, model, dataset, positions, subsets)
    for j in range(p):
        ref = np.mean([
            sym_interaction_grad(loss, model, dataset, positions[j],
                                 [positions[i] for i in idx])
            for idx in subsets[j]], axis=0)
        np.testing.assert_allclose(fast[j], ref, rtol=1e-9, atol=1e-12)


def test_subset_indices_exclude_self_and_are_distinct():
    config = SamplerConfig(lambda_n=1.0, k=4, particles=9, dt=1e-3, iters=2,
                           burn_in=0, seed=5, prior=GaussianPrior.standard(1),
                           subset_batch=7)
    subsets = _draw_subsets(config, substream(6, "sub"), 9)
    assert subsets.shape == (9, 7, 3)
    for j in range(9):
        assert not (subsets[j] == j).any()
        for row in subsets[j]:
            assert len(set(row.tolist())) == 3


# -- stepping ---------------------------------------------------------------------


def test_wgf_step_dt_zero_keeps_positions():
    model = GaussianLocation(sigma=1.0)
    data = small_dataset()
    config = base_config(dt=0.0)
    cloud = initial_cloud(config, 1)
    before = cloud.positions.copy()
    after = wgf_step(cloud, config, TANDEM, model, data, substream(8, "step"))
    np.testing.assert_array_equal(after.positions, before)
    assert after.step_index == 1


def test_wgf_lambda_zero_recovers_prior_moments():
    # small version of the prior-recovery gate; the acceptance suite runs the
    # full p=512 configuration
    model = GaussianLocation(sigma=1.0)
    data = small_dataset()
    config = base_config(lambda_n=0.0, particles=128, iters=1500, dt=1e-2,
                         burn_in=750, seed=10)
    posterior, _ = run_wgf(config, TANDEM, model, data)
    assert abs(posterior.atoms.mean()) < 0.1
    assert abs(posterior.atoms.var() - 1.0) < 0.15


def test_exchangeability_under_paired_noise_permutation():
    model = GaussianLocation(sigma=1.0)
    data = small_dataset()
    config = base_config(particles=5, seed=11)
    rng = substream(11, "exch")
    pos = rng.standard_normal((5, 1))
    noise = rng.standard_normal((5, 1))
    perm = np.array([3, 0, 4, 1, 2])
    new_a, _ = _step(pos, config, TANDEM, model, data, noise, None)
    new_b, _ = _step(pos[perm], config, TANDEM, model, data, noise[perm], None)
    np.testing.assert_allclose(new_b, new_a[perm], rtol=0, atol=1e-12)


def test_run_wgf_deterministic_and_thread_invariant():
    model = GaussianLocation(sigma=1.0)
    data = small_dataset()
    config = base_config(particles=7, iters=40, burn_in=10, seed=12)
    post1, log1 = run_wgf(config, TANDEM, model, data, workers=1)
    post2, _ = run_wgf(config, TANDEM, model, data, workers=1)
    post3, _ = run_wgf(config, TANDEM, model, data, workers=3)
    np.testing.assert_array_equal(post1.atoms, post2.atoms)
    np.testing.assert_array_equal(post1.atoms, post3.atoms)
    assert len(log1.snapshots) == 40 // config.stride + 1


def test_run_wgf_atom_bookkeeping():
    model = GaussianLocation(sigma=1.0)
    data = small_dataset()
    config = base_config(particles=4, iters=100, burn_in=50, seed=13)
    posterior, log = run_wgf(config, TANDEM, model, data)
    post_snapshots = sum(1 for s in log.steps if s > 50)
    assert posterior.atoms.shape == (4 * post_snapshots, 1)
    assert posterior.weights.sum() == pytest.approx(1.0)
    assert posterior.provenance == "wgf_average"


def test_stability_guard_raises_on_blowup():
    model = GaussianLocation(sigma=1.0)
    data = small_dataset()
    config = base_config(lambda_n=1e9, dt=1e6, iters=30, seed=14)
    with pytest.raises(NumericError):
        run_wgf(config, TANDEM, model, data)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        base_config(burn_in=10, iters=10)
    with pytest.raises(ConfigurationError):
        base_config(particles=1)
    with pytest.raises(ConfigurationError):
        SamplerConfig(lambda_n=1.0, k=3, particles=4, dt=1e-3, iters=5,
                      burn_in=0, seed=0, prior=GaussianPrior.standard(1),
                      subset_batch=10)  # C(3, 2) = 3 < 10
    with pytest.raises(ConfigurationError):
        base_config(dt=(1e-3, 1e-3)).dt_vector(1)


def test_wgf_on_bimodal_data_spreads_particles():
    # quick qualitative check that repulsion plus bimodal data yields spread;
    # the calibrated Figure-1 gates live in the acceptance suite
    model = GaussianLocation(sigma=1.0)
    data = gen_normal_location("mixture", 300, seed=21)
    kernel = KernelSpec(lengthscale=1.0)
    loss = ExactKernelTandem(kernel=kernel, estimator=ClosedForm())
    config = SamplerConfig(lambda_n=300.0, k=2, particles=16, dt=5e-4,
                           iters=800, burn_in=400, seed=22,
                           prior=GaussianPrior.standard(1))
    posterior, _ = run_wgf(config, loss, model, data)
    spread = posterior.atoms.max() - posterior.atoms.min()
    assert spread > 2.0
