"""Self-check suites shared by the CLI (gradcheck, oracle-check) and the tests.

Each suite returns {check name: worst error} so callers can print one line per
check and compare against the tolerances they care about.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import quad

from .evaluation import finite_diff_check
from .mala import GibbsTarget
from .models import (GaussianLocation, LinearRegressionGauss,
                     LogisticRegression, Observation, density_sup)
from .priors import GaussianPrior
from .rng import substream
from .scoring import (ClosedForm, ExactKernelGibbs, ExactKernelTandem,
                      KernelSpec, LogDI, LogMS, MonteCarlo,
                      exact_predictive_score_discrete, gibbs_loss_mmd,
                      loss_di_log, loss_ms_log, tandem_loss_mmd)
from .datasets import TabularDataset

GRAD_TOL = 1e-4
QUAD_TOL = 1e-7


def _rand_points(rng, count, dim, scale=1.5):
    return [scale * rng.standard_normal(dim) for _ in range(count)]


def gradient_suite(seed: int = 1234, points: int = 20) -> dict[str, float]:
    """Worst finite-difference relative error for every loss-gradient variant."""
    rng = substream(seed, "gradcheck")
    gl = GaussianLocation(sigma=1.0)
    lr = LinearRegressionGauss(dim=2, sigma=0.8)
    logi = LogisticRegression(dim=2)
    kernel = KernelSpec(lengthscale=1.3)
    obs_gl = Observation(response=0.7)
    obs_lr = Observation(response=0.4, covariate=np.array([0.9, -1.1]))
    obs_logi = Observation(response=1, covariate=np.array([0.5, -0.8]))
    results = {}

    def check(name, fn, grad_fn, dim):
        pts = _rand_points(substream(seed, name), points, dim)
        results[name] = finite_diff_check(fn, grad_fn, pts)

    t_cf = ExactKernelTandem(kernel=kernel, estimator=ClosedForm())
    other = np.array([0.4])
    check("tandem_mmd_closed_gaussian",
          lambda th: tandem_loss_mmd(gl, th, other, obs_gl, t_cf).value,
          lambda th: tandem_loss_mmd(gl, th, other, obs_gl, t_cf).grad_first, 1)
    other2 = np.array([0.4, -0.2])
    check("tandem_mmd_closed_regression",
          lambda th: tandem_loss_mmd(lr, th, other2, obs_lr, t_cf).value,
          lambda th: tandem_loss_mmd(lr, th, other2, obs_lr, t_cf).grad_first, 2)

    t_mc = ExactKernelTandem(kernel=kernel, estimator=MonteCarlo(m=64))
    # frozen noise: rebuild the identical stream for every evaluation
    check("tandem_mmd_mc_gaussian",
          lambda th: tandem_loss_mmd(gl, th, other, obs_gl, t_mc,
                                     substream(seed, "mcnoise")).value,
          lambda th: tandem_loss_mmd(gl, th, other, obs_gl, t_mc,
                                     substream(seed, "mcnoise")).grad_first, 1)

    g_cf = ExactKernelGibbs(kernel=kernel, estimator=ClosedForm())
    check("gibbs_mmd_closed_gaussian",
          lambda th: gibbs_loss_mmd(gl, th, obs_gl, g_cf).value,
          lambda th: gibbs_loss_mmd(gl, th, obs_gl, g_cf).grad_first, 1)
    g_mc = ExactKernelGibbs(kernel=kernel, estimator=MonteCarlo(m=64))
    check("gibbs_mmd_mc_regression",
          lambda th: gibbs_loss_mmd(lr, th, obs_lr, g_mc,
                                    substream(seed, "mcnoise2")).value,
          lambda th: gibbs_loss_mmd(lr, th, obs_lr, g_mc,
                                    substream(seed, "mcnoise2")).grad_first, 2)

    u_gl = density_sup(gl)
    check("di_log_gaussian",
          lambda th: loss_di_log(gl, th, other, obs_gl, u_gl).value,
          lambda th: loss_di_log(gl, th, other, obs_gl, u_gl).grad_first, 1)
    check("di_log_logistic",
          lambda th: loss_di_log(logi, th, other2, obs_logi, 1.0).value,
          lambda th: loss_di_log(logi, th, other2, obs_logi, 1.0).grad_first, 2)

    for k in (1, 2, 3):
        partners = [np.array([0.3]), np.array([-0.9])][: k - 1]
        check(f"ms_log_k{k}_gaussian",
              lambda th, p=partners: loss_ms_log(gl, [th] + p, obs_gl).value,
              lambda th, p=partners: loss_ms_log(gl, [th] + p, obs_gl).grad_first, 1)
    check("ms_log_k2_logistic",
          lambda th: loss_ms_log(logi, [th, other2], obs_logi).value,
          lambda th: loss_ms_log(logi, [th, other2], obs_logi).grad_first, 2)

    data = TabularDataset(responses=rng.standard_normal(25), covariates=None,
                          columns=["y"])
    prior = GaussianPrior.standard(1)
    t_log = GibbsTarget(gl, data, "log", lambda_n=9.0, prior=prior)
    check("gibbs_target_log",
          lambda th: t_log(th)[0], lambda th: t_log(th)[1], 1)
    t_mmd = GibbsTarget(gl, data, g_cf, lambda_n=9.0, prior=prior)
    check("gibbs_target_mmd",
          lambda th: t_mmd(th)[0], lambda th: t_mmd(th)[1], 1)
    return results


def _quad_kernel_mean(m, sigma, gamma, point):
    f = lambda x: np.exp(-0.5 * ((x - m) / sigma) ** 2) / (sigma * np.sqrt(2 * np.pi)) \
        * np.exp(-((x - point) ** 2) / (2 * gamma**2))
    val, _ = quad(f, m - 12 * sigma, m + 12 * sigma, limit=200)
    return val


def _quad_kernel_cross(m1, m2, sigma, gamma):
    # X - X' ~ N(m1 - m2, 2 sigma^2), so the double integral collapses to one
    mu, s = m1 - m2, np.sqrt(2.0) * sigma
    f = lambda u: np.exp(-0.5 * ((u - mu) / s) ** 2) / (s * np.sqrt(2 * np.pi)) \
        * np.exp(-(u**2) / (2 * gamma**2))
    val, _ = quad(f, mu - 12 * s, mu + 12 * s, limit=200)
    return val


def kernel_oracle_suite(seed: int = 99, configs: int = 10,
                        mc_draws: int = 10**6) -> dict[str, float]:
    """Closed-form embeddings versus quadrature (abs error) and Monte Carlo (in SEs)."""
    rng = substream(seed, "oracle")
    worst_quad_mean = worst_quad_cross = 0.0
    worst_mc_mean = worst_mc_cross = 0.0
    for _ in range(configs):
        sigma = float(rng.uniform(0.5, 2.0))
        gamma = float(rng.uniform(0.5, 2.5))
        th1 = rng.standard_normal(1) * 2
        th2 = rng.standard_normal(1) * 2
        point = float(rng.standard_normal() * 2)
        model = GaussianLocation(sigma=sigma)

        km = model.kernel_mean(th1, gamma, point)
        worst_quad_mean = max(worst_quad_mean,
                              abs(km - _quad_kernel_mean(th1[0], sigma, gamma, point)))
        kc = model.kernel_cross(th1, th2, gamma)
        worst_quad_cross = max(worst_quad_cross,
                               abs(kc - _quad_kernel_cross(th1[0], th2[0], sigma, gamma)))

        draws1 = th1[0] + sigma * rng.standard_normal(mc_draws)
        vals = np.exp(-((draws1 - point) ** 2) / (2 * gamma**2))
        se = vals.std() / np.sqrt(mc_draws)
        worst_mc_mean = max(worst_mc_mean, abs(vals.mean() - km) / max(se, 1e-15))

        draws2 = th2[0] + sigma * rng.standard_normal(mc_draws)
        vals = np.exp(-((draws1 - draws2) ** 2) / (2 * gamma**2))
        se = vals.std() / np.sqrt(mc_draws)
        worst_mc_cross = max(worst_mc_cross, abs(vals.mean() - kc) / max(se, 1e-15))
    return {
        "kernel_mean_vs_quadrature_abs": worst_quad_mean,
        "kernel_cross_vs_quadrature_abs": worst_quad_cross,
        "kernel_mean_vs_mc_in_se": worst_mc_mean,
        "kernel_cross_vs_mc_in_se": worst_mc_cross,
    }


def tandem_identity_suite(seed: int = 7, trials: int = 20) -> float:
    """Worst |Q^2-average of the tandem loss - exact discrete predictive score|."""
    rng = substream(seed, "tandem-identity")
    model = GaussianLocation(sigma=1.0)
    worst = 0.0
    for _ in range(trials):
        count = int(rng.integers(1, 6))
        atoms = [rng.standard_normal(1) * 2 for _ in range(count)]
        w = rng.random(count)
        w = w / w.sum()
        obs = Observation(response=float(rng.standard_normal() * 2))
        kernel = KernelSpec(lengthscale=float(rng.uniform(0.6, 2.0)))
        loss = ExactKernelTandem(kernel=kernel, estimator=ClosedForm())
        double_sum = sum(
            w[i] * w[j] * tandem_loss_mmd(model, atoms[i], atoms[j], obs, loss).value
            for i in range(count) for j in range(count))
        exact = exact_predictive_score_discrete(model, atoms, w, obs, "mmd", kernel)
        worst = max(worst, abs(double_sum - exact))
    return worst
