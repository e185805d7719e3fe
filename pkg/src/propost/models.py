"""Parametric model families: densities, gradients, sampling, kernel embeddings.

Five families cover every experiment: scalar and bivariate Gaussian location,
Gaussian linear regression, logistic classification, and a grouped binomial
logit for proportion data.  Gaussian-response families additionally expose
closed-form Gaussian-kernel mean embeddings, which make the kernel-score
losses exact and cheap.

Kernel convention used throughout: k_gamma(x, y) = exp(-||x - y||^2 / (2 gamma^2)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln, log_expit

from .errors import ConfigurationError, NoClosedFormError, NumericError


@dataclass(frozen=True)
class Observation:
    """One data point: a response plus an optional covariate vector.

    ``response`` is a float for scalar models, a length-2 array for bivariate
    models, and a ``(tries, successes)`` pair for grouped count models.
    """

    response: object
    covariate: np.ndarray | None = None


def as_theta(values, dim: int | None = None) -> np.ndarray:
    """Validate and return a parameter vector (finite entries, right length)."""
    th = np.atleast_1d(np.asarray(values, dtype=float))
    if th.ndim != 1:
        raise ConfigurationError(f"theta must be a vector, got shape {th.shape}")
    if not np.all(np.isfinite(th)):
        raise ConfigurationError(f"theta has non-finite entries: {th}")
    if dim is not None and th.shape[0] != dim:
        raise ConfigurationError(f"theta has length {th.shape[0]}, expected {dim}")
    return th


def _as_cov(covariate, dim: int) -> np.ndarray:
    x = np.atleast_1d(np.asarray(covariate, dtype=float))
    if x.shape[0] != dim:
        raise ConfigurationError(f"covariate has length {x.shape[0]}, expected {dim}")
    return x


class Model:
    """Common interface for all model families.

    Scalar operations take a single theta and Observation; the ``*_matrix``
    variants are vectorised over a stack of parameter vectors and a whole
    dataset, and are what the samplers use in their hot loops.  Both paths
    must agree to floating-point roundoff.
    """

    dim: int
    conditional: bool = False
    gaussian_response: bool = False

    # -- scalar contract ---------------------------------------------------

    def log_density(self, theta, obs: Observation) -> float:
        th = as_theta(theta, self.dim)
        val = float(self._log_density(th, obs))
        if not np.isfinite(val):
            raise NumericError(f"non-finite log density at theta={th}, obs={obs}")
        return val

    def grad_log_density(self, theta, obs: Observation) -> np.ndarray:
        th = as_theta(theta, self.dim)
        return self._grad_log_density(th, obs)

    def sample_predictive(self, theta, covariate, rng: np.random.Generator) -> Observation:
        th = as_theta(theta, self.dim)
        if self.conditional and covariate is None:
            raise ConfigurationError("conditional model requires a covariate")
        if not self.conditional and covariate is not None:
            raise ConfigurationError("unconditional model takes no covariate")
        return self._sample(th, covariate, rng)

    # -- vectorised contract ----------------------------------------------

    def log_density_matrix(self, thetas: np.ndarray, responses, covariates) -> np.ndarray:
        """Log densities for every (theta, observation) pair, shape (S, n)."""
        raise NotImplementedError

    def grad_log_density_tensor(self, thetas, responses, covariates) -> np.ndarray:
        """d/dtheta log densities, shape (S, n, dim)."""
        raise NotImplementedError

    # -- Gaussian-kernel embeddings (Gaussian response models only) --------

    @property
    def resp_dim(self) -> int:
        raise NoClosedFormError(
            f"{type(self).__name__} has no closed-form kernel embedding; "
            "use the Monte Carlo estimator")

    def response_mean(self, theta, covariate=None) -> np.ndarray:
        raise NoClosedFormError(
            f"{type(self).__name__} has no closed-form kernel embedding; "
            "use the Monte Carlo estimator")

    def kernel_mean(self, theta, gamma: float, point, covariate=None) -> float:
        """E_{X ~ P_theta}[k_gamma(X, point)], exact."""
        self._check_gamma(gamma)
        m = self.response_mean(theta, covariate)
        pt = np.atleast_1d(np.asarray(point, dtype=float))
        v = gamma**2 + self.sigma**2
        c = (gamma**2 / v) ** (self.resp_dim / 2)
        return float(c * np.exp(-np.sum((m - pt) ** 2) / (2.0 * v)))

    def kernel_cross(self, theta1, theta2, gamma: float, covariate=None) -> float:
        """E_{X ~ P_theta1, X' ~ P_theta2}[k_gamma(X, X')], exact."""
        self._check_gamma(gamma)
        m1 = self.response_mean(theta1, covariate)
        m2 = self.response_mean(theta2, covariate)
        v = gamma**2 + 2.0 * self.sigma**2
        c = (gamma**2 / v) ** (self.resp_dim / 2)
        return float(c * np.exp(-np.sum((m1 - m2) ** 2) / (2.0 * v)))

    @staticmethod
    def _check_gamma(gamma: float) -> None:
        if not gamma > 0:
            raise ConfigurationError(f"kernel lengthscale must be positive, got {gamma}")


class _GaussianResponse(Model):
    """Shared machinery for models whose response is Gaussian given theta."""

    gaussian_response = True
    sigma: float

    def response_mean_matrix(self, thetas: np.ndarray, covariates) -> np.ndarray:
        """Response means, shape (S, n, resp_dim); n axis is 1 if unconditional."""
        raise NotImplementedError

    def apply_mean_jacobian(self, vec: np.ndarray, covariates) -> np.ndarray:
        """Contract (S, n, resp_dim) against d(mean)/d(theta), giving (S, n, dim)."""
        raise NotImplementedError

    def log_density_matrix(self, thetas, responses, covariates):
        m = self.response_mean_matrix(np.asarray(thetas, dtype=float), covariates)
        y = np.asarray(responses, dtype=float)
        if self.resp_dim == 1:
            sq = (y[None, :] - m[:, :, 0]) ** 2
        else:
            sq = np.sum((y[None, :, :] - m) ** 2, axis=-1)
        return -0.5 * self.resp_dim * np.log(2.0 * np.pi * self.sigma**2) \
            - sq / (2.0 * self.sigma**2)


class GaussianLocation(_GaussianResponse):
    """Scalar Gaussian location family N(theta, sigma^2) with fixed sigma."""

    dim = 1

    def __init__(self, sigma: float = 1.0):
        if not sigma > 0:
            raise ConfigurationError(f"sigma must be positive, got {sigma}")
        self.sigma = float(sigma)

    resp_dim = 1

    def _log_density(self, th, obs):
        y = float(obs.response)
        return -0.5 * np.log(2 * np.pi * self.sigma**2) - (y - th[0]) ** 2 / (2 * self.sigma**2)

    def _grad_log_density(self, th, obs):
        y = float(obs.response)
        return np.array([(y - th[0]) / self.sigma**2])

    def _sample(self, th, covariate, rng):
        return Observation(response=float(th[0] + self.sigma * rng.standard_normal()))

    def response_mean(self, theta, covariate=None):
        return as_theta(theta, 1)

    def response_mean_matrix(self, thetas, covariates):
        return thetas[:, None, :]

    def apply_mean_jacobian(self, vec, covariates):
        return vec

    def grad_log_density_tensor(self, thetas, responses, covariates):
        y = np.asarray(responses, dtype=float)
        return ((y[None, :] - thetas[:, [0]]) / self.sigma**2)[:, :, None]


class IsoGaussian2D(_GaussianResponse):
    """Bivariate isotropic Gaussian location family N(theta, sigma^2 I)."""

    dim = 2

    def __init__(self, sigma: float):
        if not sigma > 0:
            raise ConfigurationError(f"sigma must be positive, got {sigma}")
        self.sigma = float(sigma)

    resp_dim = 2

    def _log_density(self, th, obs):
        y = np.asarray(obs.response, dtype=float)
        return -np.log(2 * np.pi * self.sigma**2) - np.sum((y - th) ** 2) / (2 * self.sigma**2)

    def _grad_log_density(self, th, obs):
        y = np.asarray(obs.response, dtype=float)
        return (y - th) / self.sigma**2

    def _sample(self, th, covariate, rng):
        return Observation(response=th + self.sigma * rng.standard_normal(2))

    def response_mean(self, theta, covariate=None):
        return as_theta(theta, 2)

    def response_mean_matrix(self, thetas, covariates):
        return thetas[:, None, :]

    def apply_mean_jacobian(self, vec, covariates):
        return vec

    def grad_log_density_tensor(self, thetas, responses, covariates):
        y = np.asarray(responses, dtype=float)
        return (y[None, :, :] - thetas[:, None, :]) / self.sigma**2


class LinearRegressionGauss(_GaussianResponse):
    """Gaussian linear regression y | x ~ N(x . theta, sigma^2), sigma fixed."""

    conditional = True
    resp_dim = 1

    def __init__(self, dim: int, sigma: float = 1.0):
        if dim < 1:
            raise ConfigurationError(f"dim must be >= 1, got {dim}")
        if not sigma > 0:
            raise ConfigurationError(f"sigma must be positive, got {sigma}")
        self.dim = int(dim)
        self.sigma = float(sigma)

    def _log_density(self, th, obs):
        x = _as_cov(obs.covariate, self.dim)
        r = float(obs.response) - float(x @ th)
        return -0.5 * np.log(2 * np.pi * self.sigma**2) - r**2 / (2 * self.sigma**2)

    def _grad_log_density(self, th, obs):
        x = _as_cov(obs.covariate, self.dim)
        r = float(obs.response) - float(x @ th)
        return r / self.sigma**2 * x

    def _sample(self, th, covariate, rng):
        x = _as_cov(covariate, self.dim)
        y = float(x @ th + self.sigma * rng.standard_normal())
        return Observation(response=y, covariate=x)

    def response_mean(self, theta, covariate=None):
        th = as_theta(theta, self.dim)
        x = _as_cov(covariate, self.dim)
        return np.array([float(x @ th)])

    def response_mean_matrix(self, thetas, covariates):
        return (thetas @ np.asarray(covariates, dtype=float).T)[:, :, None]

    def apply_mean_jacobian(self, vec, covariates):
        return vec[:, :, 0:1] * np.asarray(covariates, dtype=float)[None, :, :]

    def grad_log_density_tensor(self, thetas, responses, covariates):
        X = np.asarray(covariates, dtype=float)
        y = np.asarray(responses, dtype=float)
        r = (y[None, :] - thetas @ X.T) / self.sigma**2
        return r[:, :, None] * X[None, :, :]


class LogisticRegression(Model):
    """Binary logistic classifier P(y=1 | x) = sigmoid(x . theta)."""

    conditional = True

    def __init__(self, dim: int = 2):
        if dim < 1:
            raise ConfigurationError(f"dim must be >= 1, got {dim}")
        self.dim = int(dim)

    def _log_density(self, th, obs):
        x = _as_cov(obs.covariate, self.dim)
        y = int(obs.response)
        if y not in (0, 1):
            raise ConfigurationError(f"binary label must be 0 or 1, got {obs.response}")
        s = 1.0 if y == 1 else -1.0
        return log_expit(s * float(x @ th))

    def _grad_log_density(self, th, obs):
        x = _as_cov(obs.covariate, self.dim)
        y = int(obs.response)
        return (y - expit(float(x @ th))) * x

    def _sample(self, th, covariate, rng):
        x = _as_cov(covariate, self.dim)
        y = int(rng.random() < expit(float(x @ th)))
        return Observation(response=y, covariate=x)

    def log_density_matrix(self, thetas, responses, covariates):
        X = np.asarray(covariates, dtype=float)
        s = 2.0 * np.asarray(responses, dtype=float) - 1.0
        return log_expit(s[None, :] * (thetas @ X.T))

    def grad_log_density_tensor(self, thetas, responses, covariates):
        X = np.asarray(covariates, dtype=float)
        y = np.asarray(responses, dtype=float)
        resid = y[None, :] - expit(thetas @ X.T)
        return resid[:, :, None] * X[None, :, :]


class BinomialLogit(Model):
    """Grouped counts: successes ~ Binomial(tries, sigmoid(a + b * x)).

    theta = (a, b) with a the intercept and b the slope on the scalar covariate.
    """

    conditional = True
    dim = 2

    @staticmethod
    def _counts(obs: Observation) -> tuple[int, int]:
        tries, successes = obs.response
        tries, successes = int(tries), int(successes)
        if not 0 <= successes <= tries:
            raise ConfigurationError(
                f"need 0 <= successes <= tries, got ({tries}, {successes})")
        return tries, successes

    def _logit(self, th, obs):
        x = _as_cov(obs.covariate, 1)
        return th[0] + th[1] * x[0]

    def _log_density(self, th, obs):
        tries, succ = self._counts(obs)
        eta = self._logit(th, obs)
        binom = gammaln(tries + 1) - gammaln(succ + 1) - gammaln(tries - succ + 1)
        return binom + succ * log_expit(eta) + (tries - succ) * log_expit(-eta)

    def _grad_log_density(self, th, obs):
        tries, succ = self._counts(obs)
        x = _as_cov(obs.covariate, 1)
        resid = succ - tries * expit(self._logit(th, obs))
        return resid * np.array([1.0, x[0]])

    def _sample(self, th, covariate, rng):
        x = _as_cov(covariate, 1)
        tries = 1
        succ = int(rng.binomial(tries, expit(th[0] + th[1] * x[0])))
        return Observation(response=(tries, succ), covariate=x)

    def log_density_matrix(self, thetas, responses, covariates):
        d = np.asarray(covariates, dtype=float)[:, 0]
        counts = np.asarray(responses, dtype=float)
        tries, succ = counts[:, 0], counts[:, 1]
        eta = thetas[:, [0]] + thetas[:, [1]] * d[None, :]
        binom = gammaln(tries + 1) - gammaln(succ + 1) - gammaln(tries - succ + 1)
        return binom[None, :] + succ[None, :] * log_expit(eta) \
            + (tries - succ)[None, :] * log_expit(-eta)

    def grad_log_density_tensor(self, thetas, responses, covariates):
        d = np.asarray(covariates, dtype=float)[:, 0]
        counts = np.asarray(responses, dtype=float)
        tries, succ = counts[:, 0], counts[:, 1]
        eta = thetas[:, [0]] + thetas[:, [1]] * d[None, :]
        resid = succ[None, :] - tries[None, :] * expit(eta)
        out = np.empty(eta.shape + (2,))
        out[:, :, 0] = resid
        out[:, :, 1] = resid * d[None, :]
        return out


def density_sup(model: Model) -> float:
    """Upper bound u on sup_{theta, x} p_theta(x), used by the DI log loss.

    Gaussian responses peak at (2 pi sigma^2)^(-d/2); probability mass
    functions are bounded by 1.
    """
    if model.gaussian_response:
        return float((2 * np.pi * model.sigma**2) ** (-model.resp_dim / 2))
    return 1.0
