from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from jumpbridge.core import ReferenceParams
from jumpbridge.errors import DomainError, UnsupportedOperationError
from jumpbridge.reference import (
    grad_ratio_F,
    increment_density,
    log_increment_density,
    log_ratio_F,
    ratio_F,
)


def dense_density(sigma, lam, c, gamma, tau, z, n):
    """Direct Poisson-Gaussian sum with scipy distributions, no log space."""
    z = np.atleast_1d(z)
    total = 0.0
    for k in range(n + 1):
        dens = 1.0
        for p in range(z.size):
            dens *= stats.norm.pdf(z[p], k * c[p], math.sqrt(sigma[p] ** 2 * tau + k * gamma[p] ** 2))
        total += stats.poisson.pmf(k, lam * tau) * dens
    return total


def test_pure_gaussian_value():
    p = ReferenceParams(1.0, 0.0, 0.0, 1.0)
    assert increment_density(p, 1.0, [0.0]) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)
    assert round(increment_density(p, 1.0, [0.0]), 6) == 0.398942


def test_single_term_truncation():
    p = ReferenceParams(1.5, 2.0, 0.3, 0.7, n_jumps_trunc=0)
    z = 0.4
    expected = math.exp(-1.0) * stats.norm.pdf(z, 0.0, 1.5 * math.sqrt(0.5))
    assert increment_density(p, 0.5, [z]) == pytest.approx(expected, rel=1e-13)


def test_matches_monte_carlo_increments():
    """Gaussian-kernel density estimate from simulated increments. The
    kernel bias is about b^2 f''/(2 f), under 0.4% here."""
    sigma, lam, gamma, tau, z = 2.0, 10.0, 0.8, 1 / 252, 0.5
    p = ReferenceParams(sigma, lam, 0.0, gamma)
    rng = np.random.default_rng(20240601)
    b, total, n = 0.01, 0.0, 0
    for _ in range(4):
        k = rng.poisson(lam * tau, 10_000_000)
        x = sigma * math.sqrt(tau) * rng.standard_normal(k.size) + gamma * np.sqrt(k) * rng.standard_normal(k.size)
        near = x[np.abs(x - z) < 8 * b]
        total += stats.norm.pdf((near - z) / b).sum() / b
        n += k.size
    assert increment_density(p, tau, [z]) == pytest.approx(total / n, rel=0.02)


def test_integrates_to_one_minus_tail():
    p = ReferenceParams(0.8, 30.0, 0.2, 0.5, n_jumps_trunc=3)
    tau = 0.1
    mass, _ = integrate.quad(lambda z: increment_density(p, tau, [z]), -15, 15, limit=200)
    assert mass == pytest.approx(stats.poisson.cdf(3, 3.0), rel=1e-9)


def test_truncation_is_monotone():
    z = np.linspace(-3, 3, 61)[:, None]
    prev = None
    for n in range(0, 8):
        cur = increment_density(ReferenceParams(1.0, 50.0, 0.1, 0.6, n_jumps_trunc=n), 0.05, z)
        if prev is not None:
            assert np.all(cur >= prev)
        prev = cur


def test_tau_must_be_positive():
    p = ReferenceParams(1.0, 1.0, 0.0, 1.0)
    with pytest.raises(DomainError):
        increment_density(p, 0.0, [0.0])


def test_pure_jump_atom():
    p = ReferenceParams(0.0, 1000.0, 0.0, 0.1, n_jumps_trunc=20, pure_jump=True)
    assert increment_density(p, 0.002, [0.0], atom=True) == pytest.approx(math.exp(-2.0), rel=1e-15)
    # the zero displacement carries the atom plus the continuous terms
    continuous_at_zero = sum(stats.poisson.pmf(k, 2.0) * stats.norm.pdf(0.0, 0.0, 0.1 * math.sqrt(k)) for k in range(1, 21))
    expected = math.exp(-2.0) + continuous_at_zero
    assert math.exp(log_increment_density(p, 0.002, [0.0])) == pytest.approx(expected, rel=1e-12)
    with pytest.raises(DomainError):
        increment_density(p, 0.002, [0.0])
    cont = increment_density(p, 0.002, [0.05])
    expected = sum(stats.poisson.pmf(k, 2.0) * stats.norm.pdf(0.05, 0.0, 0.1 * math.sqrt(k)) for k in range(1, 21))
    assert cont == pytest.approx(expected, rel=1e-12)
    with pytest.raises(DomainError):
        increment_density(ReferenceParams(1.0, 1.0, 0.0, 1.0), 1.0, [0.0], atom=True)


def test_ratio_is_one_at_interval_start():
    p = ReferenceParams((1.0, 0.5), 20.0, (0.1, -0.2), (0.7, 0.4))
    x = np.array([0.3, -0.1])
    assert ratio_F(p, 0.1, x, x, [0.5, 0.2], 0.1) == 1.0


def test_ratio_without_jumps_is_heat_kernel_ratio():
    p = ReferenceParams(1.3, 0.0, 0.0, 1.0)
    tau, dt, xi, x, y = 0.3, 1.0, 0.2, -0.4, 0.9
    expected = stats.norm.pdf(y - x, 0, 1.3 * math.sqrt(tau)) / stats.norm.pdf(y - xi, 0, 1.3)
    assert ratio_F(p, tau, [xi], [x], [y], dt) == pytest.approx(expected, rel=1e-13)


def test_ratio_matches_recomputation_2d():
    rng = np.random.default_rng(8)
    for _ in range(20):
        sigma = rng.uniform(0.5, 3, 2)
        gamma = rng.uniform(0.05, 1.5, 2)
        c = rng.uniform(-0.5, 0.5, 2)
        lam = rng.uniform(0.1, 100)
        dt = rng.uniform(1 / 252, 0.1)
        tau = rng.uniform(0.05, 1.0) * dt
        xi, x, y = rng.normal(0, 0.3, (3, 2))
        p = ReferenceParams(sigma, lam, c, gamma).resolved(dt)
        n = p.n_jumps_trunc
        expected = dense_density(sigma, lam, c, gamma, tau, y - x, n) / dense_density(sigma, lam, c, gamma, dt, y - xi, n)
        assert ratio_F(p, tau, xi, x, y, dt) == pytest.approx(expected, rel=1e-12)


def test_ratio_flags_vanishing_denominator():
    p = ReferenceParams(0.0, 5.0, 0.0, 0.1, n_jumps_trunc=1, pure_jump=True)
    r = log_ratio_F(p, 0.5, [0.0], [0.3], [0.3], 1.0)
    assert not r.degenerate_denominator
    with pytest.raises(DomainError):
        log_ratio_F(p, 2.0, [0.0], [0.3], [0.3], 1.0)


def test_gradient_symmetry_zero():
    p = ReferenceParams(1.0, 0.0, 0.0, 1.0)
    np.testing.assert_array_equal(grad_ratio_F(p, 0.5, [0.1], [0.4], [0.4], 1.0), [0.0])


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    step = 1e-6
    for _ in range(100):
        d = int(rng.integers(1, 3))
        sigma = rng.uniform(0.5, 3, d)
        gamma = rng.uniform(0.05, 1.5, d)
        c = rng.uniform(-0.5, 0.5, d)
        lam = rng.uniform(0.1, 100)
        dt = rng.uniform(1 / 252, 0.1)
        tau = rng.uniform(0.1, 1.0) * dt
        xi, x, y = rng.normal(0, 0.2, (3, d))
        p = ReferenceParams(sigma, lam, c, gamma).resolved(dt)
        g = grad_ratio_F(p, tau, xi, x, y, dt)
        for q in range(d):
            e = np.zeros(d)
            e[q] = step
            fd = (ratio_F(p, tau, xi, x + e, y, dt) - ratio_F(p, tau, xi, x - e, y, dt)) / (2 * step)
            assert abs(g[q] - fd) <= 1e-5 * abs(fd)


def test_gradient_undefined_in_pure_jump_mode():
    p = ReferenceParams(0.0, 5.0, 0.0, 0.1, pure_jump=True)
    with pytest.raises(UnsupportedOperationError):
        grad_ratio_F(p, 0.5, [0.0], [0.1], [0.3], 1.0)


@settings(max_examples=60, deadline=None)
@given(
    st.floats(0.2, 3.0), st.floats(0.0, 200.0), st.floats(0.05, 2.0),
    st.floats(1e-3, 1.0), st.floats(-3.0, 3.0),
)
def test_log_density_finite_and_symmetric_without_jump_mean(sigma, lam, gamma, tau, z):
    p = ReferenceParams(sigma, lam, 0.0, gamma)
    a = log_increment_density(p, tau, [z])
    assert np.isfinite(a)
    assert log_increment_density(p, tau, [-z]) == pytest.approx(a, rel=1e-12, abs=1e-12)
    if a > -700:
        assert math.log(increment_density(p, tau, [z])) == pytest.approx(a, rel=1e-12, abs=1e-12)


def test_log_density_survives_far_tails():
    p = ReferenceParams(0.1, 5.0, 0.0, 0.1, n_jumps_trunc=4)
    val = log_increment_density(p, 1e-4, [40.0])
    assert np.isfinite(val) and val < -1e4
