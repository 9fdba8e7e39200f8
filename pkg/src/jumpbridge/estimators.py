"""Nadaraya-Watson estimators of the bridge drift, total jump rate and
jump-size law, conditioned on the simulated values at past grid dates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _engine
from .core import Dataset, KernelConfig, ReferenceParams
from .errors import DomainError, EstimationError, UnsupportedOperationError
from .reference import log_increment_density


@dataclass(frozen=True)
class PathHistory:
    """Simulated values ``x_0 .. x_i`` at the grid dates reached so far plus
    the current state ``(t, x)`` with ``t`` in ``[t_i, t_{i+1})``.

    ``x_0`` is the common start and never enters the kernel window.
    """

    grid_values: np.ndarray
    t: float
    x: np.ndarray

    def __post_init__(self):
        gv = np.atleast_2d(np.asarray(self.grid_values, dtype=float))
        object.__setattr__(self, "grid_values", gv)
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))
        object.__setattr__(self, "t", float(self.t))

    @classmethod
    def at_grid(cls, grid_values, t: float) -> "PathHistory":
        gv = np.atleast_2d(np.asarray(grid_values, dtype=float))
        return cls(gv, t, gv[-1])

    @property
    def interval(self) -> int:
        return self.grid_values.shape[0] - 1

    def window_dates(self, markov_order: int) -> range:
        i = self.interval
        return range(max(1, i - markov_order + 1), i + 1)

    def check_time(self, ds: Dataset):
        i = self.interval
        if i >= ds.n_intervals:
            raise DomainError(f"history reaches date {i}, past the last interval")
        t0, t1 = ds.grid.dates[i], ds.grid.dates[i + 1]
        if not t0 <= self.t < t1:
            raise DomainError(f"t={self.t} is outside interval [{t0}, {t1})")


@dataclass(frozen=True)
class KernelWeights:
    weights: np.ndarray
    all_zero: bool

    def effective(self) -> np.ndarray:
        """Weights actually used: uniform when every kernel weight vanished."""
        return np.ones_like(self.weights) if self.all_zero else self.weights


def quartic_kernel(u: np.ndarray) -> np.ndarray:
    """``(1 - |u|^2)^2`` on the unit ball (norm over the last axis)."""
    r2 = np.sum(np.square(u), axis=-1)
    return np.where(r2 <= 1.0, np.square(1.0 - r2), 0.0)


def kernel_weights(ds: Dataset, hist: PathHistory, cfg: KernelConfig) -> KernelWeights:
    dates = list(hist.window_dates(cfg.markov_order))
    w = np.ones(ds.n_series)
    if dates:
        diff = (hist.grid_values[dates][None, :, :] - ds.values[:, dates, :]) / cfg.bandwidth
        w = np.prod(quartic_kernel(diff), axis=1)
    return KernelWeights(w, bool(not np.any(w > 0)))


@dataclass(frozen=True)
class IntervalData:
    """Everything the compiled kernels need for one interval: active target
    values ``Y`` at ``t_{i+1}`` and ``loga = log K - log f0_dt(Y - x_i)``."""

    Y: np.ndarray
    loga: np.ndarray
    active: np.ndarray
    weights: KernelWeights


def prepare_interval(ds: Dataset, grid_values: np.ndarray, cfg: KernelConfig, params: ReferenceParams, n: int) -> IntervalData:
    hist = PathHistory.at_grid(grid_values, ds.grid.dates[np.shape(grid_values)[0] - 1])
    i = hist.interval
    kw = kernel_weights(ds, hist, cfg)
    w = kw.effective()
    active = np.flatnonzero(w > 0)
    Y = np.ascontiguousarray(ds.values[active, i + 1, :])
    sigma, c, gamma = params.arrays()
    log_d = _engine.log_density_rows(
        ds.grid.dt(i), np.ascontiguousarray(Y - hist.x), sigma**2, c, gamma**2, params.lambda0, n, params.pure_jump
    )
    with np.errstate(divide="ignore"):
        loga = np.log(w[active]) - log_d
    keep = np.isfinite(loga)
    if not np.all(keep):
        active, Y, loga = active[keep], np.ascontiguousarray(Y[keep]), loga[keep]
    if active.size == 0:
        raise EstimationError(f"interval {i}: every data sample has zero weight or zero reference density")
    return IntervalData(Y, np.ascontiguousarray(loga), active, kw)


def _evaluate(ds: Dataset, hist: PathHistory, cfg: KernelConfig, params: ReferenceParams, want_drift: bool):
    hist.check_time(ds)
    cfg.check_grid(ds.n_intervals)
    n = params.n_jumps_for(ds.grid.max_dt)
    data = prepare_interval(ds, hist.grid_values, cfg, params, n)
    i = hist.interval
    tau = ds.grid.dates[i + 1] - hist.t
    sigma, c, gamma = params.arrays()
    ma, d = data.Y.shape
    lg = np.empty((ma, n + 2))
    lp = np.empty(n + 2)
    drift = np.empty(d)
    rate, log_den = _engine.drift_and_rate(
        tau, hist.x, data.Y, data.loga, sigma**2, c, gamma**2, params.lambda0, n, params.pure_jump, want_drift, lg, lp, drift
    )
    if log_den == -np.inf:
        raise EstimationError(f"estimator denominator is zero at interval {i}, t={hist.t}, x={hist.x.tolist()}")
    return data, n, tau, lg, lp, drift, rate


def drift_hat(ds: Dataset, hist: PathHistory, cfg: KernelConfig, params: ReferenceParams) -> np.ndarray:
    """Kernel estimate of the bridge drift at the current state."""
    if params.pure_jump:
        raise UnsupportedOperationError("the drift is not defined in pure-jump mode")
    return _evaluate(ds, hist, cfg, params, True)[5]


def total_rate(ds: Dataset, hist: PathHistory, cfg: KernelConfig, params: ReferenceParams) -> float:
    return _evaluate(ds, hist, cfg, params, False)[6]


@dataclass(frozen=True)
class JumpMixture:
    """Jump-size law at a state: components ordered j-major then sample.

    ``dirac`` marks point-mass components (pure-jump mode, j = 0), whose
    ``cov_diag`` is 0.
    """

    probs: np.ndarray
    means: np.ndarray
    cov_diag: np.ndarray
    jump_index: np.ndarray
    sample_index: np.ndarray
    dirac: np.ndarray
    total_rate: float

    def __post_init__(self):
        if self.probs.size == 0:
            raise EstimationError("jump mixture has no components")

    @property
    def n_components(self) -> int:
        return self.probs.size

    def cdf(self, z: np.ndarray) -> np.ndarray:
        """Mixture CDF of a 1-d mixture (point masses as steps)."""
        from scipy.stats import norm

        z = np.asarray(z, dtype=float)[..., None]
        mu = self.means[:, 0]
        sd = np.sqrt(self.cov_diag[:, 0])
        with np.errstate(divide="ignore", invalid="ignore"):
            cont = norm.cdf((z - mu) / np.where(sd > 0, sd, 1.0))
        comp = np.where(sd > 0, cont, (z >= mu).astype(float))
        return comp @ self.probs


def build_jump_mixture(ds: Dataset, hist: PathHistory, cfg: KernelConfig, params: ReferenceParams) -> JumpMixture:
    """Mixture for the jump size at the pre-jump state ``hist.x``."""
    data, n, tau, lg, lp, _, rate = _evaluate(ds, hist, cfg, params, False)
    sigma, c, gamma = params.arrays()
    ma, d = data.Y.shape
    probs = np.empty((n + 1, ma))
    _engine.mixture_probs(tau, hist.x, data.Y, data.loga, sigma**2, c, gamma**2, params.lambda0, n, params.pure_jump, lg, lp, probs)
    j_idx, m_idx = np.nonzero(probs)
    means = np.empty((j_idx.size, d))
    covs = np.empty((j_idx.size, d))
    mean = np.empty(d)
    var = np.empty(d)
    for r, (j, m) in enumerate(zip(j_idx, m_idx)):
        _engine.component_moments(tau, hist.x, data.Y[m], sigma**2, c, gamma**2, j, mean, var)
        means[r], covs[r] = mean, var
    dirac = (j_idx == 0) & params.pure_jump
    if np.any(dirac):
        means[dirac] = data.Y[m_idx[dirac]] - hist.x
        covs[dirac] = 0.0
    return JumpMixture(
        probs[j_idx, m_idx], means, covs, j_idx, data.active[m_idx], dirac, float(rate)
    )


def sample_jump(mix: JumpMixture, rng: np.random.Generator) -> np.ndarray:
    """Pick a component by cumulative sum, then draw from it."""
    u = rng.random()
    r = int(np.searchsorted(np.cumsum(mix.probs), u, side="right"))
    r = min(r, mix.n_components - 1)
    if mix.dirac[r]:
        return mix.means[r].copy()
    return mix.means[r] + np.sqrt(mix.cov_diag[r]) * rng.standard_normal(mix.means.shape[1])


def sample_jumps(mix: JumpMixture, rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` i.i.d. draws, vectorized."""
    cum = np.cumsum(mix.probs)
    r = np.minimum(np.searchsorted(cum, rng.random(size), side="right"), mix.n_components - 1)
    eps = rng.standard_normal((size, mix.means.shape[1]))
    return mix.means[r] + np.sqrt(mix.cov_diag[r]) * eps


def intensity_at_grid(ds: Dataset, hist: PathHistory, cfg: KernelConfig, params: ReferenceParams, z) -> float:
    """Jump intensity exactly at the grid date ``t_{i+1}``.

    ``hist`` holds ``x_0 .. x_i`` and the state ``x`` reached at
    ``t_{i+1}``. The next-date density ratio of the data law is a kernel
    estimate weighted by the window kernel at dates up to ``t_i``.
    """
    i = hist.interval
    if i >= ds.n_intervals:
        raise DomainError("no next grid date")
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if params.lambda0 == 0.0:
        return 0.0
    if np.all(z == 0):
        return params.lambda0
    n = params.n_jumps_for(ds.grid.max_dt)
    dt = ds.grid.dt(i)
    x_i = hist.grid_values[-1]
    log_f = log_increment_density(params, dt, hist.x - x_i, n) - log_increment_density(params, dt, hist.x + z - x_i, n)
    w = kernel_weights(ds, PathHistory.at_grid(hist.grid_values, ds.grid.dates[i]), cfg).effective()
    nxt = ds.values[:, i + 1, :]
    num = np.sum(w * quartic_kernel((hist.x + z - nxt) / cfg.bandwidth))
    den = np.sum(w * quartic_kernel((hist.x - nxt) / cfg.bandwidth))
    if den == 0.0:
        raise EstimationError(f"no data near x={hist.x.tolist()} at date {i + 1}")
    return float(params.lambda0 * math.exp(log_f) * num / den)
