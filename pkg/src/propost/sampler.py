"""Interacting-particle Langevin sampler for predictively oriented posteriors.

A cloud of p particles follows the Euler-Maruyama discretisation of the
mean-field SDE whose stationary law minimises

    lambda_n * (in-sample tuple loss under Q^k) + KL(Q || prior).

Each particle's drift couples it to the others through the symmetrised
first-slot gradient of the tuple loss, averaged over (k-1)-subsets of the
remaining particles; the posterior approximation is the union of particle
positions over thinned post-burn-in snapshots.

Reproducibility contract: all noise and subset draws for step s come from the
substream (seed, "wgf", s) in a fixed order, so results are bit-identical
across runs and worker counts.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

from .datasets import TabularDataset
from .errors import ConfigurationError, NumericError
from .models import Model
from .priors import GaussianPrior
from .rng import substream
from .scoring import (ClosedForm, ExactKernelGibbs, ExactKernelTandem, LogDI,
                      LogMS, gibbs_loss_mmd, loss_di_log, loss_ms_log,
                      tandem_loss_mmd)

COORD_LIMIT = 1e6


def _wmean(arr: np.ndarray, w: np.ndarray | None, axis: int) -> np.ndarray:
    """Mean over the data axis, weighted when the dataset carries weights."""
    if w is None:
        return arr.mean(axis=axis)
    shape = [1] * arr.ndim
    shape[axis] = w.size
    return (arr * w.reshape(shape)).sum(axis=axis)


@dataclass(frozen=True)
class SamplerConfig:
    lambda_n: float
    k: int
    particles: int
    dt: object
    iters: int
    burn_in: int
    seed: int
    prior: GaussianPrior
    subset_batch: int | None = None
    stride: int = 10
    init: object = "prior"          # "prior" or a point vector
    init_jitter: float = 0.05

    def __post_init__(self):
        if self.lambda_n < 0:
            raise ConfigurationError(f"lambda_n must be >= 0, got {self.lambda_n}")
        if self.k < 1:
            raise ConfigurationError(f"k must be >= 1, got {self.k}")
        if self.particles < 2:
            raise ConfigurationError(f"need at least 2 particles, got {self.particles}")
        if self.iters < 1:
            raise ConfigurationError(f"iters must be >= 1, got {self.iters}")
        if not 0 <= self.burn_in < self.iters:
            raise ConfigurationError(
                f"burn_in must lie in [0, iters), got {self.burn_in} vs {self.iters}")
        if self.stride < 1:
            raise ConfigurationError(f"stride must be >= 1, got {self.stride}")
        m = self.resolved_subset_batch()
        if self.k > 1:
            limit = math.comb(self.particles - 1, self.k - 1)
            if m > limit:
                raise ConfigurationError(
                    f"subset_batch {m} exceeds C({self.particles - 1}, {self.k - 1}) = {limit}")

    def resolved_subset_batch(self) -> int:
        """Subsets per particle per step; k=2 defaults to exhaustive pairing."""
        if self.subset_batch is not None:
            return self.subset_batch
        if self.k <= 2:
            return self.particles - 1
        return min(self.particles - 1, 16)

    def dt_vector(self, dim: int) -> np.ndarray:
        dt = np.atleast_1d(np.asarray(self.dt, dtype=float))
        if dt.shape[0] == 1:
            dt = np.full(dim, dt[0])
        if dt.shape[0] != dim:
            raise ConfigurationError(
                f"dt must be a scalar or length-{dim} vector, got length {dt.shape[0]}")
        if np.any(dt < 0):
            raise ConfigurationError(f"dt entries must be >= 0, got {dt}")
        return dt


@dataclass
class ParticleCloud:
    positions: np.ndarray
    step_index: int


@dataclass
class PosteriorApprox:
    atoms: np.ndarray            # (count, dim)
    weights: np.ndarray          # uniform, sums to 1
    provenance: str

    def __post_init__(self):
        if self.atoms.shape[0] == 0:
            raise ConfigurationError("posterior approximation needs at least one atom")


@dataclass
class TrajectoryLog:
    steps: list = field(default_factory=list)           # snapshot step indices
    snapshots: list = field(default_factory=list)       # (p, dim) arrays
    diag_steps: list = field(default_factory=list)
    interaction_grad_norm: list = field(default_factory=list)
    prior_grad_norm: list = field(default_factory=list)


# -- schedules ----------------------------------------------------------------


def k_schedule(n: int, mode: str = "ms_log") -> int:
    """Interaction order for MS log losses: max(2, round((n / ln n)^(1/3)))."""
    if n < 2:
        raise ConfigurationError(f"need n >= 2, got {n}")
    if mode != "ms_log":
        raise ConfigurationError(f"unknown k-schedule mode {mode!r}")
    return max(2, round((n / math.log(n)) ** (1.0 / 3.0)))


def lambda_schedule(n: int, mode: str, k: int | None = None) -> float:
    """Learning-rate schedules: sqrt(n)/ln n (exact/DI) or sqrt(n/(k ln k)) (MS log)."""
    if n < 2:
        raise ConfigurationError(f"need n >= 2, got {n}")
    if mode == "exact_or_di":
        return math.sqrt(n) / math.log(n)
    if mode == "ms_log":
        kk = k if k is not None else k_schedule(n)
        return math.sqrt(n / (kk * max(math.log(kk), 1.0)))
    raise ConfigurationError(f"unknown schedule mode {mode!r}")


# -- reference (scalar) interaction gradient ----------------------------------


def sym_interaction_grad(loss, model: Model, dataset: TabularDataset,
                         particle, others, rng=None) -> np.ndarray:
    """Gradient of the in-sample symmetrised loss in the particle's slot.

    Loop-based reference used by the tests and the generic fallback path; the
    vectorised drifts below must agree with it to roundoff.
    """
    others = [np.asarray(o, dtype=float) for o in others]
    if len(others) != loss.k - 1:
        raise ConfigurationError(
            f"loss of order k={loss.k} needs {loss.k - 1} partner thetas, got {len(others)}")
    grad = np.zeros(model.dim)
    w = dataset.norm_weights()
    total = 0.0
    for i, obs in enumerate(dataset.rows()):
        wi = 1.0 if w is None else w[i]
        total += wi
        if isinstance(loss, ExactKernelTandem):
            g = tandem_loss_mmd(model, particle, others[0], obs, loss, rng).grad_first
        elif isinstance(loss, ExactKernelGibbs):
            g = gibbs_loss_mmd(model, particle, obs, loss, rng).grad_first
        elif isinstance(loss, LogDI):
            first = loss_di_log(model, particle, others[0], obs, loss.u).grad_first
            lp1 = model.log_density(others[0], obs)
            lp2 = model.log_density(particle, obs)
            p1, p2 = np.exp(lp1), np.exp(lp2)
            second = (p1 - p2) * p2 * model.grad_log_density(particle, obs) / loss.u
            g = 0.5 * first + 0.5 * second
        elif isinstance(loss, LogMS):
            g = loss_ms_log(model, [particle] + others, obs).grad_first
        else:
            raise ConfigurationError(f"unsupported loss {type(loss).__name__}")
        grad += wi * g
    return grad / total


# -- vectorised drifts ---------------------------------------------------------


def _subset_average(values: np.ndarray, subsets: np.ndarray | None,
                    rows: slice) -> np.ndarray:
    """Average values (p, ...) over each row particle's partner set."""
    if subsets is None:
        p = values.shape[0]
        total = values.sum(axis=0, keepdims=True)
        return (total - values[rows]) / (p - 1)
    sel = subsets[rows]                       # (pr, M, k-1)
    return values[sel].mean(axis=(1, 2))


def _grads_kernel_tandem(loss, model, dataset, positions, subsets, rows):
    gamma = loss.kernel.lengthscale
    sigma = model.sigma
    v1, v2 = gamma**2 + sigma**2, gamma**2 + 2 * sigma**2
    r = model.resp_dim
    c1, c2 = (gamma**2 / v1) ** (r / 2), (gamma**2 / v2) ** (r / 2)
    X = dataset.covariates
    means = model.response_mean_matrix(positions, X)        # (p, n|1, r)
    y = np.asarray(dataset.responses, dtype=float)
    if y.ndim == 1:
        y = y[:, None]

    w = dataset.norm_weights()
    diff1 = means[rows] - y[None, :, :]                     # (pr, n, r)
    k1 = c1 * np.exp(-np.sum(diff1**2, axis=-1) / (2 * v1))
    gm1 = -(k1[..., None] * diff1) / v1                     # (pr, n, r)
    g_attract = _wmean(model.apply_mean_jacobian(gm1, X), w, axis=1)

    if X is None:
        flat = means[:, 0, :]                               # (p, r)
        if subsets is None:
            dp = flat[rows][:, None, :] - flat[None, :, :]  # (pr, p, r)
        else:
            dp = flat[rows][:, None, :] - flat[subsets[rows][:, :, 0]]
        k2 = c2 * np.exp(-np.sum(dp**2, axis=-1) / (2 * v2))
        gm2 = -(k2[..., None] * dp) / v2
        denom = positions.shape[0] - 1 if subsets is None else subsets.shape[1]
        pair = gm2.sum(axis=1) / denom                      # (pr, r); self-term is zero
        g_repulse = model.apply_mean_jacobian(pair[:, None, :], None)[:, 0, :]
    else:
        flat = means[:, :, 0]                               # (p, n)
        if subsets is None:
            dp = flat[rows][:, None, :] - flat[None, :, :]  # (pr, p, n)
            k2 = c2 * np.exp(-dp**2 / (2 * v2))
            gm2 = (-(k2 * dp) / v2).sum(axis=1) / (positions.shape[0] - 1)
        else:
            sel = flat[subsets[rows][:, :, 0]]              # (pr, M, n)
            dp = flat[rows][:, None, :] - sel
            k2 = c2 * np.exp(-dp**2 / (2 * v2))
            gm2 = (-(k2 * dp) / v2).mean(axis=1)
        g_repulse = _wmean(model.apply_mean_jacobian(gm2[:, :, None], X), w, axis=1)
    return g_repulse - g_attract


def _grads_kernel_gibbs(loss, model, dataset, positions, rows):
    gamma = loss.kernel.lengthscale
    sigma = model.sigma
    v1 = gamma**2 + sigma**2
    r = model.resp_dim
    c1 = (gamma**2 / v1) ** (r / 2)
    X = dataset.covariates
    means = model.response_mean_matrix(positions, X)
    y = np.asarray(dataset.responses, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    diff1 = means[rows] - y[None, :, :]
    k1 = c1 * np.exp(-np.sum(diff1**2, axis=-1) / (2 * v1))
    gm1 = -(k1[..., None] * diff1) / v1
    g = _wmean(model.apply_mean_jacobian(gm1, X), dataset.norm_weights(), axis=1)
    return -2.0 * g


def _grads_log_di(loss, model, dataset, positions, logd, glog, subsets, rows):
    d = np.exp(logd)
    partner_mean = _subset_average(d, subsets, rows)        # (pr, n)
    coef = -0.5 - (d[rows] - partner_mean) * d[rows] / loss.u
    return _wmean(coef[:, :, None] * glog[rows], dataset.norm_weights(), axis=1)


def _grads_log_ms(loss, model, dataset, positions, logd, glog, subsets, rows):
    if loss.k == 1:
        return -_wmean(glog[rows], dataset.norm_weights(), axis=1)
    safe = bool(logd.min() > -700.0)     # no exp underflow: work on densities
    if loss.k == 2 and subsets is None:
        p = positions.shape[0]
        if safe:
            d = np.exp(logd)
            # weight of the particle in each two-component mixture; partner
            # axis last so the reduction runs over contiguous memory
            w = d[rows][:, :, None] / (d[rows][:, :, None] + d.T[None, :, :])
            wbar = (w.sum(axis=2) - 0.5) / (p - 1)               # drop self-pair
        else:
            w = expit(logd[rows][:, :, None] - logd.T[None, :, :])
            wbar = (w.sum(axis=2) - 0.5) / (p - 1)
    elif loss.k == 2:
        sel = subsets[rows][:, :, 0]                             # (pr, M)
        if safe:
            d = np.exp(logd)
            w = d[rows][:, None, :] / (d[rows][:, None, :] + d[sel])
        else:
            w = expit(logd[rows][:, None, :] - logd[sel])
        wbar = w.mean(axis=1)
    else:
        sel = logd[subsets[rows]]                                # (pr, M, k-1, n)
        partner_logsum = logsumexp(sel, axis=2)
        wbar = expit(logd[rows][:, None, :] - partner_logsum).mean(axis=1)
    return -_wmean(wbar[:, :, None] * glog[rows], dataset.norm_weights(), axis=1)


def _grads_generic(loss, model, dataset, positions, subsets, rows, mc_stream):
    p = positions.shape[0]
    out = []
    for j in range(*rows.indices(p)):
        rng = None
        if mc_stream is not None:
            seed, step = mc_stream
            rng = substream(seed, "mcloss", step, j)
        if loss.k == 1:
            out.append(sym_interaction_grad(loss, model, dataset, positions[j],
                                            [], rng))
            continue
        if subsets is None:
            partners = [[ell] for ell in range(p) if ell != j]
        else:
            partners = subsets[j].tolist()
        gs = [sym_interaction_grad(loss, model, dataset, positions[j],
                                   [positions[i] for i in idx], rng)
              for idx in partners]
        out.append(np.mean(gs, axis=0))
    return np.array(out)


def interaction_grads(loss, model, dataset, positions, subsets=None,
                      rows: slice | None = None, mc_stream=None) -> np.ndarray:
    """Subset-averaged symmetrised interaction gradients for each row particle.

    ``mc_stream`` is a (seed, step) pair used to derive per-particle noise
    substreams when the loss needs Monte Carlo estimation.
    """
    rows = rows if rows is not None else slice(None)
    closed = isinstance(getattr(loss, "estimator", None), ClosedForm)
    if isinstance(loss, ExactKernelTandem) and closed and model.gaussian_response:
        return _grads_kernel_tandem(loss, model, dataset, positions, subsets, rows)
    if isinstance(loss, ExactKernelGibbs) and closed and model.gaussian_response:
        return _grads_kernel_gibbs(loss, model, dataset, positions, rows)
    if isinstance(loss, (LogDI, LogMS)):
        logd = model.log_density_matrix(positions, dataset.responses, dataset.covariates)
        glog = model.grad_log_density_tensor(positions, dataset.responses,
                                             dataset.covariates)
        if isinstance(loss, LogDI):
            return _grads_log_di(loss, model, dataset, positions, logd, glog, subsets, rows)
        return _grads_log_ms(loss, model, dataset, positions, logd, glog, subsets, rows)
    return _grads_generic(loss, model, dataset, positions, subsets, rows, mc_stream)


# -- stepping ------------------------------------------------------------------


def _draw_subsets(config: SamplerConfig, rng: np.random.Generator,
                  dim_p: int) -> np.ndarray | None:
    m = config.resolved_subset_batch()
    if config.k == 1 or (config.k == 2 and m >= dim_p - 1):
        return None
    keys = rng.random((dim_p, m, dim_p - 1))
    order = np.argsort(keys, axis=-1)[:, :, : config.k - 1]
    others = np.array([[i for i in range(dim_p) if i != j] for j in range(dim_p)])
    return others[np.arange(dim_p)[:, None, None], order]


def _step(positions: np.ndarray, config: SamplerConfig, loss, model,
          dataset, noise: np.ndarray, subsets, workers: int = 1,
          mc_stream=None):
    p, dim = positions.shape
    dt = config.dt_vector(dim)
    if config.lambda_n == 0.0:
        inter = np.zeros_like(positions)
    elif workers > 1:
        bounds = np.linspace(0, p, workers + 1).astype(int)
        blocks = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        inter = np.empty_like(positions)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = {pool.submit(interaction_grads, loss, model, dataset,
                                positions, subsets, blk, mc_stream): blk
                    for blk in blocks}
            for fut, blk in futs.items():
                inter[blk] = fut.result()
    else:
        inter = interaction_grads(loss, model, dataset, positions, subsets,
                                  mc_stream=mc_stream)
    prior_grad = config.prior.grad_log_density_rows(positions)
    drift = config.lambda_n * config.k * inter - prior_grad
    new = positions - dt[None, :] * drift + np.sqrt(2.0 * dt)[None, :] * noise
    diag = (float(np.mean(np.linalg.norm(config.lambda_n * config.k * inter, axis=1))),
            float(np.mean(np.linalg.norm(prior_grad, axis=1))))
    return new, diag


def _check_positions(positions: np.ndarray, step: int) -> None:
    bad = ~np.isfinite(positions)
    if bad.any():
        j = int(np.argwhere(bad.any(axis=1))[0][0])
        raise NumericError(
            f"non-finite particle {j} at step {step}; try a smaller dt")
    over = np.abs(positions) > COORD_LIMIT
    if over.any():
        j = int(np.argwhere(over.any(axis=1))[0][0])
        raise NumericError(
            f"particle {j} exceeded |coordinate| = {COORD_LIMIT:g} at step {step}; "
            "try a smaller dt or lambda_n")


def wgf_step(cloud: ParticleCloud, config: SamplerConfig, loss, model,
             dataset, rng: np.random.Generator, workers: int = 1) -> ParticleCloud:
    """One Euler-Maruyama step of the interacting particle system."""
    p, dim = cloud.positions.shape
    noise = rng.standard_normal((p, dim))
    subsets = _draw_subsets(config, rng, p)
    step = cloud.step_index + 1
    new, _ = _step(cloud.positions, config, loss, model, dataset, noise,
                   subsets, workers, mc_stream=(config.seed, step))
    _check_positions(new, step)
    return ParticleCloud(positions=new, step_index=step)


def initial_cloud(config: SamplerConfig, dim: int) -> ParticleCloud:
    rng = substream(config.seed, "init")
    if isinstance(config.init, str) and config.init == "prior":
        if config.prior.dim != dim:
            raise ConfigurationError(
                f"prior dimension {config.prior.dim} != model dimension {dim}")
        pos = config.prior.sample(config.particles, rng)
    else:
        point = np.asarray(config.init, dtype=float)
        if point.shape[0] != dim:
            raise ConfigurationError(
                f"init point has length {point.shape[0]}, expected {dim}")
        pos = point[None, :] + config.init_jitter * rng.standard_normal(
            (config.particles, dim))
    return ParticleCloud(positions=pos, step_index=0)


def run_wgf(config: SamplerConfig, loss, model: Model, dataset: TabularDataset,
            workers: int = 1) -> tuple[PosteriorApprox, TrajectoryLog]:
    """Evolve the particle system and average post-burn-in snapshots."""
    if dataset.n == 0:
        raise ConfigurationError("dataset must be nonempty")
    dim = model.dim
    cloud = initial_cloud(config, dim)
    log = TrajectoryLog()
    log.steps.append(0)
    log.snapshots.append(cloud.positions.copy())
    kept = []
    for step in range(1, config.iters + 1):
        rng = substream(config.seed, "wgf", step)
        noise = rng.standard_normal((config.particles, dim))
        subsets = _draw_subsets(config, rng, config.particles)
        new, diag = _step(cloud.positions, config, loss, model, dataset, noise,
                          subsets, workers, mc_stream=(config.seed, step))
        _check_positions(new, step)
        cloud = ParticleCloud(positions=new, step_index=step)
        log.diag_steps.append(step)
        log.interaction_grad_norm.append(diag[0])
        log.prior_grad_norm.append(diag[1])
        if step % config.stride == 0:
            log.steps.append(step)
            log.snapshots.append(cloud.positions.copy())
            if step > config.burn_in:
                kept.append(cloud.positions.copy())
    if not kept:
        raise ConfigurationError(
            "no post-burn-in snapshots; lower burn_in or increase iters")
    atoms = np.concatenate(kept, axis=0)
    weights = np.full(atoms.shape[0], 1.0 / atoms.shape[0])
    return PosteriorApprox(atoms=atoms, weights=weights,
                           provenance="wgf_average"), log
