"""Scoring-rule losses over parameter tuples.

The losses here are the tractable surrogates whose product-measure averages
reproduce (or bound) the score of a predictive mixture:

* kernel-score tandem loss, exact for Gaussian response models and otherwise
  estimated by Monte Carlo with pathwise (reparameterised) gradients;
* the one-parameter kernel-score loss used by Gibbs posteriors;
* the diversity-inducing (DI) log-score surrogate with a density ceiling u;
* the multi-sample (MS) log-score surrogate of order k.

Every loss returns its value together with the gradient in the first
parameter slot, which is all the particle sampler needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigurationError, NumericError
from .models import Model, Observation, as_theta


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian kernel with lengthscale gamma, in data units."""

    lengthscale: float

    def __post_init__(self):
        if not self.lengthscale > 0:
            raise ConfigurationError(
                f"kernel lengthscale must be positive, got {self.lengthscale}")


@dataclass(frozen=True)
class ClosedForm:
    """Use exact kernel embeddings (Gaussian response models only)."""


@dataclass(frozen=True)
class MonteCarlo:
    """Estimate kernel expectations from m predictive draws per slot."""

    m: int

    def __post_init__(self):
        if self.m < 2:
            raise ConfigurationError(f"Monte Carlo estimator needs m >= 2, got {self.m}")


@dataclass(frozen=True)
class ExactKernelTandem:
    """Two-slot kernel-score loss; its Q x Q average is the predictive kernel score."""

    kernel: KernelSpec
    estimator: object = field(default_factory=ClosedForm)
    k: int = 2


@dataclass(frozen=True)
class ExactKernelGibbs:
    """One-slot kernel-score loss for Gibbs posteriors."""

    kernel: KernelSpec
    estimator: object = field(default_factory=ClosedForm)
    k: int = 1


@dataclass(frozen=True)
class LogDI:
    """DI log-score surrogate with density ceiling u >= sup p_theta(x)."""

    u: float
    k: int = 2

    def __post_init__(self):
        if not self.u > 0:
            raise ConfigurationError(f"density ceiling u must be positive, got {self.u}")


@dataclass(frozen=True)
class LogMS:
    """MS log-score surrogate: score of the uniform k-component mixture."""

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ConfigurationError(f"interaction order k must be >= 1, got {self.k}")


@dataclass(frozen=True)
class LossEval:
    value: float
    grad_first: np.ndarray


GAMMA_FLOOR = 1e-6


def median_heuristic(points) -> KernelSpec:
    """Kernel lengthscale from the median squared pairwise distance.

    gamma = sqrt(median(||x_i - x_j||^2) / 2); for an even number of pairs the
    lower-middle order statistic is taken, and degenerate all-equal data fall
    back to a 1e-6 floor.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = pts.shape[0]
    if n < 2:
        raise ConfigurationError("median heuristic needs at least 2 points")
    iu, ju = np.triu_indices(n, k=1)
    sq = np.sum((pts[iu] - pts[ju]) ** 2, axis=1)
    med = float(np.sort(sq)[(sq.size - 1) // 2])
    gamma = np.sqrt(med / 2.0)
    return KernelSpec(lengthscale=max(gamma, GAMMA_FLOOR))


# -- kernel-score losses ----------------------------------------------------


def _response_point(obs: Observation) -> np.ndarray:
    return np.atleast_1d(np.asarray(obs.response, dtype=float))


def _closed_k1_with_grad(model, theta, gamma, obs):
    """kernel_mean(theta, obs) and d/dtheta of it."""
    m = model.response_mean(theta, obs.covariate)
    y = _response_point(obs)
    v = gamma**2 + model.sigma**2
    c = (gamma**2 / v) ** (model.resp_dim / 2)
    k1 = c * np.exp(-np.sum((m - y) ** 2) / (2.0 * v))
    grad_m = -(m - y) / v * k1
    return float(k1), _apply_jacobian(model, theta, obs.covariate, grad_m)


def _closed_k2_with_grad(model, theta1, theta2, gamma, covariate):
    """kernel_cross(theta1, theta2) and its gradient in theta1."""
    m1 = model.response_mean(theta1, covariate)
    m2 = model.response_mean(theta2, covariate)
    v = gamma**2 + 2.0 * model.sigma**2
    c = (gamma**2 / v) ** (model.resp_dim / 2)
    k2 = c * np.exp(-np.sum((m1 - m2) ** 2) / (2.0 * v))
    grad_m = -(m1 - m2) / v * k2
    return float(k2), _apply_jacobian(model, theta1, covariate, grad_m)


def _apply_jacobian(model, theta, covariate, grad_m):
    """Pull a gradient in response-mean space back to parameter space."""
    vec = grad_m[None, None, :]
    cov = None if covariate is None else np.atleast_1d(covariate)[None, :]
    return model.apply_mean_jacobian(vec, cov)[0, 0]


def _gauss_kernel(diff: np.ndarray, gamma: float) -> np.ndarray:
    return np.exp(-np.sum(diff**2, axis=-1) / (2.0 * gamma**2))


def _mc_draws(model, theta, obs, m, rng):
    """Pathwise predictive draws Y = mean + sigma * Z with Z frozen for the call."""
    mean = model.response_mean(theta, obs.covariate)
    z = rng.standard_normal((m, model.resp_dim))
    return mean[None, :] + model.sigma * z, mean


def tandem_loss_mmd(model: Model, theta1, theta2, obs: Observation,
                    loss: ExactKernelTandem, rng=None) -> LossEval:
    """Two-slot kernel loss E[k(Y,Y')] - E[k(Y,y)] - E[k(Y',y)] and its theta1 gradient."""
    gamma = loss.kernel.lengthscale
    if isinstance(loss.estimator, ClosedForm):
        k2, g2 = _closed_k2_with_grad(model, theta1, theta2, gamma, obs.covariate)
        k1a, g1a = _closed_k1_with_grad(model, theta1, gamma, obs)
        k1b, _ = _closed_k1_with_grad(model, theta2, gamma, obs)
        return LossEval(value=k2 - k1a - k1b, grad_first=g2 - g1a)
    m = loss.estimator.m
    y = _response_point(obs)
    ya, _ = _mc_draws(model, theta1, obs, m, rng)
    yb, _ = _mc_draws(model, theta2, obs, m, rng)
    cross = ya[:, None, :] - yb[None, :, :]
    k_cross = _gauss_kernel(cross, gamma)
    k_a = _gauss_kernel(ya - y[None, :], gamma)
    k_b = _gauss_kernel(yb - y[None, :], gamma)
    value = k_cross.mean() - k_a.mean() - k_b.mean()
    # pathwise: dY_a/dmean1 = I, Y_b does not depend on theta1
    grad_m = -(k_cross[:, :, None] * cross).mean(axis=(0, 1)) / gamma**2 \
        + (k_a[:, None] * (ya - y[None, :])).mean(axis=0) / gamma**2
    grad = _apply_jacobian(model, theta1, obs.covariate, grad_m)
    return LossEval(value=float(value), grad_first=grad)


def gibbs_loss_mmd(model: Model, theta, obs: Observation,
                   loss: ExactKernelGibbs, rng=None) -> LossEval:
    """One-slot kernel loss E[k(Y,Y')] - 2 E[k(Y,y)] with Y, Y' ~ P_theta."""
    gamma = loss.kernel.lengthscale
    if isinstance(loss.estimator, ClosedForm):
        k2, _ = _closed_k2_with_grad(model, theta, theta, gamma, obs.covariate)
        k1, g1 = _closed_k1_with_grad(model, theta, gamma, obs)
        return LossEval(value=k2 - 2.0 * k1, grad_first=-2.0 * g1)
    m = loss.estimator.m
    y = _response_point(obs)
    ys, _ = _mc_draws(model, theta, obs, m, rng)
    diff = ys[:, None, :] - ys[None, :, :]
    k_pair = _gauss_kernel(diff, gamma)
    np.fill_diagonal(k_pair, 0.0)
    k_y = _gauss_kernel(ys - y[None, :], gamma)
    value = k_pair.sum() / (m * (m - 1)) - 2.0 * k_y.mean()
    # the pair term is theta-free along the path: Y_i - Y_j = sigma (Z_i - Z_j)
    grad_m = 2.0 * (k_y[:, None] * (ys - y[None, :])).mean(axis=0) / gamma**2
    grad = _apply_jacobian(model, theta, obs.covariate, grad_m)
    return LossEval(value=float(value), grad_first=grad)


# -- log-score surrogates -----------------------------------------------------


def loss_di_log(model: Model, theta1, theta2, obs: Observation, u: float) -> LossEval:
    """DI surrogate -log p1 - (p1 - p2)^2 / (2u) with first-slot gradient."""
    if not u > 0:
        raise ConfigurationError(f"density ceiling u must be positive, got {u}")
    lp1 = model.log_density(theta1, obs)
    lp2 = model.log_density(theta2, obs)
    p1, p2 = np.exp(lp1), np.exp(lp2)
    g1 = model.grad_log_density(theta1, obs)
    value = -lp1 - (p1 - p2) ** 2 / (2.0 * u)
    grad = -g1 - (p1 - p2) * p1 * g1 / u
    return LossEval(value=float(value), grad_first=grad)


def loss_ms_log(model: Model, thetas, obs: Observation) -> LossEval:
    """MS surrogate -log((1/k) sum_j p_j(x)) with gradient in the first theta."""
    if len(thetas) < 1:
        raise ConfigurationError("MS loss needs at least one theta")
    logps = np.array([model.log_density(th, obs) for th in thetas])
    k = len(thetas)
    # canonical summation order makes the value exactly permutation invariant
    total = logsumexp(np.sort(logps))
    if not np.isfinite(total):
        raise NumericError(f"all mixture components have zero density at obs={obs}")
    value = np.log(k) - total
    w1 = np.exp(logps[0] - total)
    grad = -w1 * model.grad_log_density(thetas[0], obs)
    return LossEval(value=float(value), grad_first=grad)


# -- exact predictive score of a discrete mixture -----------------------------


def exact_predictive_score_discrete(model: Model, atoms, weights, obs: Observation,
                                    score: str, kernel: KernelSpec | None = None) -> float:
    """Score of the finitely supported predictive sum_j w_j P_{theta_j} at obs.

    ``score='log'`` gives -log sum_j w_j p_j(obs); ``score='mmd'`` gives the
    squared-MMD score against the Dirac at obs with the constant k(x, x)
    self-term dropped.
    """
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ConfigurationError(
            f"weights must be nonnegative and sum to 1 (got sum {w.sum()!r})")
    atoms = [as_theta(a, model.dim) for a in atoms]
    if len(atoms) != w.size:
        raise ConfigurationError("weights and atoms must have equal length")
    if score == "log":
        logps = np.array([model.log_density(a, obs) for a in atoms])
        return float(-logsumexp(logps, b=w))
    if score == "mmd":
        if kernel is None:
            raise ConfigurationError("mmd score requires a kernel")
        gamma = kernel.lengthscale
        y = _response_point(obs)
        cross = 0.0
        for i, ai in enumerate(atoms):
            for j, aj in enumerate(atoms):
                cross += w[i] * w[j] * model.kernel_cross(ai, aj, gamma, obs.covariate)
        means = sum(
            wj * model.kernel_mean(aj, gamma, y, obs.covariate)
            for wj, aj in zip(w, atoms))
        return float(cross - 2.0 * means)
    raise ConfigurationError(f"unknown score {score!r}; use 'log' or 'mmd'")
