"""Metropolis-adjusted Langevin sampling of Gibbs (and tempered Bayes) posteriors.

The log target is -lambda_n * S_n(P_theta) + log prior, where S_n averages a
per-parameter score over the sample: either the negative log likelihood (the
tempered Bayes case) or the one-slot kernel-score loss.  Kernel losses use
closed-form embeddings where the model admits them; otherwise a frozen-noise
Monte Carlo estimate is refreshed once per accept/reject pair, which keeps the
proposal comparison internally consistent at the cost of a small
pseudo-marginal bias.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import TabularDataset
from .errors import ConfigurationError
from .models import Model
from .priors import GaussianPrior
from .rng import substream
from .sampler import PosteriorApprox
from .scoring import ClosedForm, ExactKernelGibbs, _gauss_kernel

@dataclass(frozen=True)
class MalaConfig:
    dt: float
    iters: int
    warmup: int
    seed: int
    lambda_n: float
    prior: GaussianPrior
    init: tuple

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if self.iters < 1:
            raise ConfigurationError(f"iters must be >= 1, got {self.iters}")
        if not 0 <= self.warmup < self.iters:
            raise ConfigurationError(
                f"warmup must lie in [0, iters), got {self.warmup} vs {self.iters}")
        if self.lambda_n < 0:
            raise ConfigurationError(f"lambda_n must be >= 0, got {self.lambda_n}")


@dataclass
class MalaDiagnostics:
    acceptance_rate: float
    kept_samples: int


class GibbsTarget:
    """Callable log target (value, gradient) for a Gibbs posterior.

    ``loss`` is either the string "log" for the negative log likelihood or an
    ExactKernelGibbs spec for the kernel-score Gibbs posterior.
    """

    def __init__(self, model: Model, dataset: TabularDataset, loss,
                 lambda_n: float, prior: GaussianPrior):
        if dataset.n == 0:
            raise ConfigurationError("dataset must be nonempty")
        self.model = model
        self.dataset = dataset
        self.loss = loss
        self.lambda_n = float(lambda_n)
        self.prior = prior
        self._noise = None
        if isinstance(loss, ExactKernelGibbs):
            self.stochastic = not (isinstance(loss.estimator, ClosedForm)
                                   and model.gaussian_response)
            if isinstance(loss.estimator, ClosedForm) and not model.gaussian_response:
                raise ConfigurationError(
                    "closed-form kernel target needs a Gaussian response model")
        elif loss == "log":
            self.stochastic = False
        else:
            raise ConfigurationError(f"unsupported Gibbs loss {loss!r}")

    def refresh_noise(self, rng: np.random.Generator) -> None:
        """Redraw the frozen Monte Carlo noise (once per accept/reject pair)."""
        if self.stochastic:
            m = self.loss.estimator.m
            self._noise = rng.standard_normal((m, self.model.resp_dim))

    def __call__(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        th = np.asarray(theta, dtype=float)
        base_val = self.prior.log_density(th)
        base_grad = self.prior.grad_log_density(th)
        if self.lambda_n == 0.0:
            return base_val, base_grad
        if self.loss == "log":
            lp = self.model.log_density_matrix(
                th[None, :], self.dataset.responses, self.dataset.covariates)
            gl = self.model.grad_log_density_tensor(
                th[None, :], self.dataset.responses, self.dataset.covariates)
            w = self.dataset.norm_weights()
            if w is None:
                val = base_val + self.lambda_n * float(lp.mean())
                grad = base_grad + self.lambda_n * gl[0].mean(axis=0)
            else:
                val = base_val + self.lambda_n * float(lp[0] @ w)
                grad = base_grad + self.lambda_n * (gl[0] * w[:, None]).sum(axis=0)
            return val, grad
        sn, gn = self._kernel_score(th)
        return base_val - self.lambda_n * sn, base_grad - self.lambda_n * gn

    def _kernel_score(self, th):
        """Mean one-slot kernel loss over the data and its gradient."""
        model, ds = self.model, self.dataset
        gamma = self.loss.kernel.lengthscale
        y = np.asarray(ds.responses, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        means = model.response_mean_matrix(th[None, :], ds.covariates)  # (1, n|1, r)
        if not self.stochastic:
            sigma = model.sigma
            v1, v2 = gamma**2 + sigma**2, gamma**2 + 2 * sigma**2
            r = model.resp_dim
            c1 = (gamma**2 / v1) ** (r / 2)
            c2 = (gamma**2 / v2) ** (r / 2)
            diff = means - y[None, :, :]
            k1 = c1 * np.exp(-np.sum(diff**2, axis=-1) / (2 * v1))  # (1, n)
            w = ds.norm_weights()
            gm = 2.0 * (k1[..., None] * diff) / v1
            jac = model.apply_mean_jacobian(gm, ds.covariates)[0]
            if w is None:
                val = c2 - 2.0 * float(k1.mean())
                grad = jac.mean(axis=0)
            else:
                val = c2 - 2.0 * float(k1[0] @ w)
                grad = (jac * w[:, None]).sum(axis=0)
            return val, grad
        if self._noise is None:
            raise ConfigurationError("Monte Carlo target used before refresh_noise()")
        z = self._noise
        m = z.shape[0]
        draws = means[:, :, None, :] + model.sigma * z[None, None, :, :]  # (1, n|1, m, r)
        pair = draws[:, :, :, None, :] - draws[:, :, None, :, :]
        k_pair = _gauss_kernel(pair, gamma)
        k_pair = k_pair - np.eye(m)[None, None, :, :] * k_pair
        pair_term = k_pair.sum(axis=(-1, -2)) / (m * (m - 1))          # (1, n|1)
        dy = draws - y[None, :, None, :]
        k_y = _gauss_kernel(dy, gamma)                                  # (1, n, m)
        val = float(pair_term.mean()) - 2.0 * float(k_y.mean())
        gm = 2.0 * (k_y[..., None] * dy).mean(axis=2) / gamma**2        # (1, n, r)
        grad = model.apply_mean_jacobian(gm, ds.covariates)[0].mean(axis=0)
        return val, grad


def gibbs_log_target(model, dataset, theta, loss, lambda_n, prior,
                     rng=None) -> tuple[float, np.ndarray]:
    """Log Gibbs target and gradient at theta (convenience wrapper)."""
    target = GibbsTarget(model, dataset, loss, lambda_n, prior)
    if target.stochastic:
        if rng is None:
            raise ConfigurationError("Monte Carlo Gibbs target needs an rng")
        target.refresh_noise(rng)
    return target(np.asarray(theta, dtype=float))


def mala_step(theta, dt: float, target, rng: np.random.Generator,
              current: tuple[float, np.ndarray] | None = None):
    """One MH-corrected Langevin step; returns (theta', accepted, (val', grad'))."""
    th = np.asarray(theta, dtype=float)
    val, grad = target(th) if current is None else current
    xi = rng.standard_normal(th.shape[0])
    prop = th + dt * grad + np.sqrt(2.0 * dt) * xi
    try:
        pval, pgrad = target(prop)
    except ArithmeticError:
        pval, pgrad = -np.inf, np.zeros_like(th)
    if np.isfinite(pval):
        fwd = -np.sum((prop - th - dt * grad) ** 2) / (4.0 * dt)
        rev = -np.sum((th - prop - dt * pgrad) ** 2) / (4.0 * dt)
        log_alpha = pval - val + rev - fwd
    else:
        log_alpha = -np.inf
    if np.log(rng.random()) < log_alpha:
        return prop, True, (pval, pgrad)
    return th, False, (val, grad)


def run_mala(config: MalaConfig, target) -> tuple[PosteriorApprox, MalaDiagnostics]:
    """Run the chain; atoms are the states kept after warmup."""
    rng = substream(config.seed, "mala")
    th = np.asarray(config.init, dtype=float)
    current = None
    accepted = 0
    kept = []
    for step in range(1, config.iters + 1):
        if target.stochastic:
            target.refresh_noise(rng)
            current = None          # frozen noise changed; revalue the current state
        th, ok, current = mala_step(th, config.dt, target, rng, current)
        accepted += int(ok)
        if step > config.warmup:
            kept.append(th.copy())
    atoms = np.array(kept)
    weights = np.full(atoms.shape[0], 1.0 / atoms.shape[0])
    post = PosteriorApprox(atoms=atoms, weights=weights, provenance="mala_chain")
    diag = MalaDiagnostics(acceptance_rate=accepted / config.iters,
                           kept_samples=len(kept))
    return post, diag
