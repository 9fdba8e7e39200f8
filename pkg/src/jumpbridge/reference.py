"""Closed-form quantities of the reference jump-diffusion.

The reference increment over a time ``tau`` is ``sigma * W_tau`` plus a
compound Poisson sum with rate ``lambda0`` and diagonal Gaussian jumps
``N(c, diag(gamma^2))``. Conditioning on the jump count ``k`` gives a
Gaussian with mean ``k c`` and variance ``sigma^2 tau + k gamma^2`` per
coordinate, so the density is a Poisson-weighted sum truncated at
``n_J`` terms. Everything is accumulated in log space.

In pure-jump mode (``sigma = 0``) the ``k = 0`` term is a point mass at the
origin with weight ``exp(-lambda0 tau)``; :func:`log_density_terms` then
returns that weight for an exactly-zero displacement and ``-inf`` otherwise.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln, logsumexp

from .core import ReferenceParams, auto_n_jumps
from .errors import DomainError, UnsupportedOperationError

LOG_2PI = math.log(2.0 * math.pi)


def truncation(params: ReferenceParams, tau: float) -> int:
    if params.n_jumps_trunc is not None:
        return params.n_jumps_trunc
    return auto_n_jumps(params.lambda0, tau, pure_jump=params.pure_jump)


def log_poisson_weights(rate: float, n: int) -> np.ndarray:
    """log P(Poisson(rate) = k) for k = 0..n."""
    k = np.arange(n + 1, dtype=float)
    if rate == 0.0:
        out = np.full(n + 1, -np.inf)
        out[0] = 0.0
        return out
    return -rate + k * math.log(rate) - gammaln(k + 1.0)


def log_density_terms(params: ReferenceParams, tau: float, z, n_jumps: int | None = None) -> np.ndarray:
    """Per-jump-count log terms, shape ``z.shape[:-1] + (n_J + 1,)``.

    Their log-sum-exp is the log increment density (atom included in
    pure-jump mode).
    """
    if not tau > 0:
        raise DomainError(f"elapsed time must be positive, got {tau}")
    n = truncation(params, tau) if n_jumps is None else int(n_jumps)
    z = np.asarray(z, dtype=float)
    if z.ndim == 0:
        z = z[None]
    sigma, c, gamma = params.arrays()
    k = np.arange(n + 1, dtype=float)
    var = sigma**2 * tau + k[:, None] * gamma**2  # (n+1, d)
    mean = k[:, None] * c
    zz = z[..., None, :]  # (..., 1, d)
    with np.errstate(divide="ignore", invalid="ignore"):
        gauss = -0.5 * (LOG_2PI + np.log(var) + (zz - mean) ** 2 / var)
    logw = log_poisson_weights(params.lambda0 * tau, n)
    if params.pure_jump:
        gauss[..., 0, :] = np.where(zz[..., 0, :] == 0.0, 0.0, -np.inf)
    return logw + gauss.sum(axis=-1)


def log_increment_density(params: ReferenceParams, tau: float, z, n_jumps: int | None = None) -> np.ndarray | float:
    out = logsumexp(log_density_terms(params, tau, z, n_jumps), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def increment_density(
    params: ReferenceParams, tau: float, z, n_jumps: int | None = None, atom: bool = False
) -> np.ndarray | float:
    """Truncated reference increment density ``f0_tau(z)``.

    In pure-jump mode the continuous part is returned (``z`` must be
    nonzero); ``atom=True`` returns the point mass ``exp(-lambda0 tau)`` at
    the origin instead.
    """
    if atom:
        if not params.pure_jump:
            raise DomainError("the increment law only has an atom in pure-jump mode")
        if not tau > 0:
            raise DomainError(f"elapsed time must be positive, got {tau}")
        return math.exp(-params.lambda0 * tau)
    if params.pure_jump and np.any(np.all(np.asarray(z, dtype=float) == 0.0, axis=-1)):
        raise DomainError("zero displacement in pure-jump mode: query the atom with atom=True")
    out = np.exp(log_density_terms(params, tau, z, n_jumps))
    total = out.sum(axis=-1)
    return float(total) if np.ndim(total) == 0 else total


class LogRatio(NamedTuple):
    value: float
    degenerate_denominator: bool


def log_ratio_F(params: ReferenceParams, tau: float, x_i, x, x_next, dt: float, n_jumps: int | None = None) -> LogRatio:
    """``log f0_tau(x_next - x) - log f0_dt(x_next - x_i)``.

    ``tau = t_{i+1} - t`` is the time left in the interval, ``dt`` the
    interval length. The flag reports a zero denominator, in which case the
    value is ``+inf`` or ``nan`` and callers must cancel it themselves.
    """
    if not 0 < tau <= dt * (1 + 1e-12):
        raise DomainError(f"need 0 < tau <= dt, got tau={tau}, dt={dt}")
    n = truncation(params, dt) if n_jumps is None else n_jumps
    x_next = np.asarray(x_next, dtype=float)
    num = log_increment_density(params, tau, x_next - np.asarray(x, dtype=float), n)
    den = log_increment_density(params, dt, x_next - np.asarray(x_i, dtype=float), n)
    with np.errstate(invalid="ignore"):
        return LogRatio(float(num - den), bool(den == -np.inf))


def ratio_F(params: ReferenceParams, tau: float, x_i, x, x_next, dt: float, n_jumps: int | None = None) -> float:
    return math.exp(log_ratio_F(params, tau, x_i, x, x_next, dt, n_jumps).value)


def grad_log_density(params: ReferenceParams, tau: float, z, n_jumps: int | None = None) -> np.ndarray:
    """Gradient of ``log f0_tau(y - x)`` with respect to ``x`` at ``z = y - x``."""
    if params.pure_jump:
        raise UnsupportedOperationError("state gradient is undefined in pure-jump mode")
    n = truncation(params, tau) if n_jumps is None else int(n_jumps)
    z = np.asarray(z, dtype=float)
    terms = log_density_terms(params, tau, z, n)
    w = np.exp(terms - logsumexp(terms, axis=-1, keepdims=True))
    sigma, c, gamma = params.arrays()
    k = np.arange(n + 1, dtype=float)[:, None]
    score = (z[..., None, :] - k * c) / (sigma**2 * tau + k * gamma**2)
    return (w[..., None] * score).sum(axis=-2)


def grad_ratio_F(params: ReferenceParams, tau: float, x_i, x, x_next, dt: float, n_jumps: int | None = None) -> np.ndarray:
    """Analytic ``grad_x F``: each term of the numerator sum picks up the
    factor ``(x_next - x - k c) / (sigma^2 tau + k gamma^2)``."""
    if params.pure_jump:
        raise UnsupportedOperationError("grad_ratio_F is undefined in pure-jump mode")
    n = truncation(params, dt) if n_jumps is None else n_jumps
    f = ratio_F(params, tau, x_i, x, x_next, dt, n)
    z = np.asarray(x_next, dtype=float) - np.asarray(x, dtype=float)
    return f * grad_log_density(params, tau, z, n)
