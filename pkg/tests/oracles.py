"""Independent re-implementations used as test oracles: direct
Poisson-Gaussian sums with scipy distributions and Gauss-Hermite
quadrature of the jump-rate integral."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

from jumpbridge.core import Dataset, KernelConfig, ReferenceParams, TimeGrid
from jumpbridge.estimators import PathHistory, kernel_weights

GH_NODES, GH_WEIGHTS = np.polynomial.hermite_e.hermegauss(64)


# ---------------------------------------------------------------- dense oracles


def log_gauss(z, mean, var):
    return -0.5 * (math.log(2 * math.pi * var) + (z - mean) ** 2 / var)


def dense_terms(p: ReferenceParams, tau, z, n):
    """[(log Poisson weight + log Gaussian, k)] for k = 0..n, per jump count."""
    sigma, c, gamma = p.arrays()
    out = []
    for k in range(n + 1):
        lg = sum(log_gauss(z[q], k * c[q], sigma[q] ** 2 * tau + k * gamma[q] ** 2) for q in range(z.size))
        out.append(stats.poisson.logpmf(k, p.lambda0 * tau) + lg)
    return np.array(out)


def weights_a(ds, hist, cfg, p, n):
    """K_m / f0_dt(Y_m - x_i) for every sample."""
    i = hist.interval
    dt = ds.grid.dt(i)
    kw = kernel_weights(ds, PathHistory.at_grid(hist.grid_values, ds.grid.dates[i]), cfg).effective()
    Y = ds.values[:, i + 1, :]
    x_i = hist.grid_values[-1]
    logf = np.array([np.logaddexp.reduce(dense_terms(p, dt, Y[m] - x_i, n)) for m in range(ds.n_series)])
    return kw * np.exp(-logf), Y


def dense_drift(ds, hist, cfg, p):
    n = p.n_jumps_for(ds.grid.max_dt)
    a, Y = weights_a(ds, hist, cfg, p, n)
    tau = ds.grid.dates[hist.interval + 1] - hist.t
    sigma, c, gamma = p.arrays()
    num = np.zeros(ds.dim)
    den = 0.0
    for m in range(ds.n_series):
        z = Y[m] - hist.x
        terms = np.exp(dense_terms(p, tau, z, n))
        den += a[m] * terms.sum()
        for k in range(n + 1):
            num += a[m] * terms[k] * (z - k * c) / (sigma**2 * tau + k * gamma**2)
    return sigma**2 * num / den


def gh_product(mean1, var1, mean2, var2):
    """Integral of N(z; mean1, var1) N(z; mean2, var2) dz by 64-node
    Gauss-Hermite with the narrower Gaussian as the weight."""
    if var2 < var1:
        mean1, var1, mean2, var2 = mean2, var2, mean1, var1
    z = mean1 + math.sqrt(var1) * GH_NODES
    vals = np.exp(-0.5 * (z - mean2) ** 2 / var2) / math.sqrt(2 * math.pi * var2)
    return float(GH_WEIGHTS @ vals) / math.sqrt(2 * math.pi)


def gh_total_rate(ds, hist, cfg, p):
    """lambda0 * integral of Lambda-hat(t, x, z) g(z) dz, with the integrand
    expanded by linearity into (sample, jump count, coordinate) factors."""
    n = p.n_jumps_for(ds.grid.max_dt)
    a, Y = weights_a(ds, hist, cfg, p, n)
    tau = ds.grid.dates[hist.interval + 1] - hist.t
    sigma, c, gamma = p.arrays()
    num = den = 0.0
    for m in range(ds.n_series):
        z = Y[m] - hist.x
        den += a[m] * np.exp(dense_terms(p, tau, z, n)).sum()
        for k in range(n + 1):
            prod = stats.poisson.pmf(k, p.lambda0 * tau)
            for q in range(ds.dim):
                # jump size J ~ N(c, gamma^2); increment left: z - J ~ N(k c, sigma^2 tau + k gamma^2)
                prod *= gh_product(z[q] - k * c[q], sigma[q] ** 2 * tau + k * gamma[q] ** 2, c[q], gamma[q] ** 2)
            num += a[m] * prod
    return p.lambda0 * num / den


def random_setup(rng, d, M):
    sigma = rng.uniform(0.5, 3, d)
    gamma = rng.uniform(0.05, 1.5, d)
    lam = rng.uniform(0.1, 100)
    c = rng.uniform(-0.3, 0.3, d)
    dt = 1 / 252
    values = np.cumsum(np.concatenate([np.zeros((M, 1, d)), rng.normal(0, 0.2, (M, 2, d))], axis=1), axis=1)
    ds = Dataset(values, TimeGrid.uniform(2, dt, 10))
    p = ReferenceParams(sigma, lam, c, gamma).resolved(dt)
    i = int(rng.integers(0, 2))
    gv = values[int(rng.integers(0, M)), : i + 1] + rng.normal(0, 0.05, (i + 1, d))
    gv[0] = 0.0
    t = ds.grid.dates[i] + rng.uniform(0, 1) * dt
    x = gv[-1] + rng.normal(0, 0.1, d)
    return ds, PathHistory(gv, t, x), KernelConfig(1.0, 1), p
