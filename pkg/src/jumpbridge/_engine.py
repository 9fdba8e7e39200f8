"""Compiled inner loops shared by the estimators and the simulators.

Within one interval ``[t_i, t_{i+1})`` the data enter only through the
active targets ``Y`` (values at ``t_{i+1}`` of samples with nonzero kernel
weight, shape (Ma, d)) and ``loga = log K_m - log f0_dt(Y_m - x_i)``. With
those fixed, the drift, the total jump rate and the jump-size mixture at a
state ``(tau, x)`` are functions of the table

    lg[m, k] = sum_p log N(Y_mp - x_p; k c_p, sigma_p^2 tau + k gamma_p^2)

for k = 0..n_J+1, together with ``lp[k] = log Poisson_k(lambda0 tau)``.
In pure-jump mode the k = 0 column is the atom indicator (0 or -inf).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

LOG_2PI = math.log(2.0 * math.pi)
PRUNE = 1e-15
# terms below exp(-CUTOFF) of the largest one cannot move a double sum
CUTOFF = 60.0
# value-safe fast-math: keeps inf/nan semantics, allows fused and approximate ops
FAST = {"afn", "contract", "arcp"}
MAX_EVENTS_PER_STEP = 1_000_000
MAX_RATE = 1e12


@njit(cache=True, nogil=True)
def log_poisson(rate, n, out):
    if rate == 0.0:
        out[0] = 0.0
        for k in range(1, n + 1):
            out[k] = -np.inf
        return
    lr = math.log(rate)
    for k in range(n + 1):
        out[k] = -rate + k * lr - math.lgamma(k + 1.0)


@njit(cache=True, nogil=True, fastmath=FAST)
def log_terms(tau, x, Y, sig2, c, gam2, lam, n_terms, pure, lg, lp):
    """Fill lg[:, :n_terms] and lp[:n_terms] at state (tau, x)."""
    ma, d = Y.shape
    log_poisson(lam * tau, n_terms - 1, lp)
    inv = np.empty((n_terms, d))
    norm = np.empty(n_terms)
    for k in range(n_terms):
        acc = 0.0
        for p in range(d):
            v = sig2[p] * tau + k * gam2[p]
            inv[k, p] = 1.0 / v if v > 0.0 else 0.0
            acc -= 0.5 * (LOG_2PI + math.log(v)) if v > 0.0 else 0.0
        norm[k] = acc
    k0 = 0
    if pure:
        k0 = 1
        for m in range(ma):
            same = True
            for p in range(d):
                if Y[m, p] != x[p]:
                    same = False
                    break
            lg[m, 0] = 0.0 if same else -np.inf
    for m in range(ma):
        for k in range(k0, n_terms):
            acc = norm[k]
            for p in range(d):
                r = Y[m, p] - x[p] - k * c[p]
                acc -= 0.5 * r * r * inv[k, p]
            lg[m, k] = acc


@njit(cache=True, nogil=True)
def log_density_rows(tau, Z, sig2, c, gam2, lam, n, pure):
    """log f0_tau(Z_m) for every row of Z, truncated at n jumps."""
    ma = Z.shape[0]
    zeros = np.zeros(Z.shape[1])
    lg = np.empty((ma, n + 1))
    lp = np.empty(n + 1)
    log_terms(tau, zeros, Z, sig2, c, gam2, lam, n + 1, pure, lg, lp)
    out = np.empty(ma)
    for m in range(ma):
        s = -np.inf
        for k in range(n + 1):
            v = lp[k] + lg[m, k]
            if v > s:
                s = v
        if s == -np.inf:
            out[m] = -np.inf
            continue
        acc = 0.0
        for k in range(n + 1):
            acc += math.exp(lp[k] + lg[m, k] - s)
        out[m] = s + math.log(acc)
    return out


@njit(cache=True, nogil=True, fastmath=FAST)
def drift_and_rate(tau, x, Y, loga, sig2, c, gam2, lam, n, pure, want_drift, lg, lp, drift):
    """Drift (written to ``drift``) and total jump rate at (tau, x).

    Returns (rate, log_den). ``log_den`` is -inf when every weighted term
    vanished, which callers turn into an estimation error.

    The rate numerator term for jump count k equals the denominator term
    for k + 1 times (k + 1) / (lambda0 tau), so both sums share one
    exponential per (m, k).
    """
    ma, d = Y.shape
    log_terms(tau, x, Y, sig2, c, gam2, lam, n + 2, pure, lg, lp)
    s = -np.inf
    s_top = -np.inf
    for m in range(ma):
        la = loga[m]
        for k in range(n + 1):
            v = la + lp[k] + lg[m, k]
            if v > s:
                s = v
        v = la + lp[n + 1] + lg[m, n + 1]
        if v > s_top:
            s_top = v
    for p in range(d):
        drift[p] = 0.0
    if s == -np.inf:
        return 0.0, -np.inf
    if s_top - s > 700.0:
        return np.inf, s
    inv = np.zeros((n + 1, d))
    if want_drift:
        for k in range(n + 1):
            for p in range(d):
                inv[k, p] = 1.0 / (sig2[p] * tau + k * gam2[p])
    lt = lam * tau
    den = 0.0
    num = 0.0
    w = np.empty(n + 2)
    for m in range(ma):
        la = loga[m] - s
        for k in range(n + 2):
            e = la + lp[k] + lg[m, k]
            w[k] = math.exp(e) if e > -CUTOFF else 0.0
        for k in range(n + 1):
            den += w[k]
        for k in range(1, n + 2):
            num += w[k] * k
        if want_drift:
            for p in range(d):
                acc = 0.0
                for k in range(n + 1):
                    acc += w[k] * (Y[m, p] - x[p] - k * c[p]) * inv[k, p]
                drift[p] += acc
    if want_drift:
        for p in range(d):
            drift[p] = sig2[p] * drift[p] / den
    rate = 0.0
    if lt > 0.0:
        rate = lam * (num / lt) / den
    return rate, s + math.log(den)


@njit(cache=True, nogil=True)
def mixture_probs(tau, x, Y, loga, sig2, c, gam2, lam, n, pure, lg, lp, probs):
    """Component probabilities probs[j, m] (pruned and renormalized).

    Expects lg/lp filled for (tau, x) with n + 2 terms.
    """
    ma = Y.shape[0]
    s = -np.inf
    for j in range(n + 1):
        for m in range(ma):
            v = loga[m] + lp[j] + lg[m, j + 1]
            probs[j, m] = v
            if v > s:
                s = v
    if s == -np.inf:
        return False
    tot = 0.0
    for j in range(n + 1):
        for m in range(ma):
            e = probs[j, m] - s
            w = math.exp(e) if e > -745.0 else 0.0
            probs[j, m] = w
            tot += w
    kept = 0.0
    for j in range(n + 1):
        for m in range(ma):
            w = probs[j, m] / tot
            if w < PRUNE:
                w = 0.0
            probs[j, m] = w
            kept += w
    for j in range(n + 1):
        for m in range(ma):
            probs[j, m] /= kept
    return True


@njit(cache=True, nogil=True)
def draw_component(probs, u):
    """Categorical draw by cumulative sum, j-major then m."""
    n1, ma = probs.shape
    acc = 0.0
    last_j, last_m = 0, 0
    for j in range(n1):
        for m in range(ma):
            w = probs[j, m]
            if w > 0.0:
                acc += w
                last_j, last_m = j, m
                if u < acc:
                    return j, m
    return last_j, last_m


@njit(cache=True, nogil=True)
def component_moments(tau, x, y, sig2, c, gam2, j, mean, var):
    for p in range(x.shape[0]):
        base = sig2[p] * tau + j * gam2[p]
        tot = base + gam2[p]
        mean[p] = ((y[p] - x[p] - j * c[p]) * gam2[p] + c[p] * base) / tot
        var[p] = gam2[p] * base / tot


@njit(cache=True, nogil=True)
def draw_jump(tau, x, Y, loga, sig2, c, gam2, lam, n, pure, lg, lp, probs, rng, out, mean, var):
    """Draw a jump size into ``out``. Returns the Dirac target index, or -1.

    Expects lg/lp filled for (tau, x).
    """
    ok = mixture_probs(tau, x, Y, loga, sig2, c, gam2, lam, n, pure, lg, lp, probs)
    if not ok:
        return -2
    u = rng.random()
    j, m = draw_component(probs, u)
    d = x.shape[0]
    if pure and j == 0:
        for p in range(d):
            out[p] = Y[m, p] - x[p]
        return m
    component_moments(tau, x, Y[m], sig2, c, gam2, j, mean, var)
    for p in range(d):
        out[p] = mean[p] + math.sqrt(var[p]) * rng.standard_normal()
    return -1


@njit(cache=True, nogil=True)
def _grow(times, sizes, count):
    if count < times.shape[0]:
        return times, sizes
    nt = np.empty(2 * times.shape[0])
    ns = np.empty((2 * times.shape[0], sizes.shape[1]))
    nt[:count] = times[:count]
    ns[:count] = sizes[:count]
    return nt, ns


# status codes returned by the interval kernels
OK = 0
DEGENERATE = 1
RATE_EXPLODED = 2


@njit(cache=True, nogil=True)
def euler_interval(x0, sub, Y, loga, sig, c, gam, lam, n, rate_override, rng):
    """Fixed-step scheme over one interval.

    Returns (status, x_end, jump_times, jump_sizes, n_jumps, drift_int,
    diff_sum, jump_sum). Jump times are logged at substep midpoints since
    the scheme only resolves the step a jump falls in.
    """
    ma, d = Y.shape
    sig2 = sig * sig
    gam2 = gam * gam
    t_next = sub[sub.shape[0] - 1]
    lg = np.empty((ma, n + 2))
    lp = np.empty(n + 2)
    probs = np.empty((n + 1, ma))
    drift = np.empty(d)
    jump = np.empty(d)
    mean = np.empty(d)
    var = np.empty(d)
    eps = np.empty(d)
    single = np.empty(d)
    x = x0.copy()
    times = np.empty(16)
    sizes = np.empty((16, d))
    count = 0
    drift_int = np.zeros(d)
    diff_sum = np.zeros(d)
    jump_sum = np.zeros(d)
    for k in range(sub.shape[0] - 1):
        t = sub[k]
        dt = sub[k + 1] - t
        tau = t_next - t
        rate, log_den = drift_and_rate(tau, x, Y, loga, sig2, c, gam2, lam, n, False, True, lg, lp, drift)
        if log_den == -np.inf:
            return DEGENERATE, x, times, sizes, count, drift_int, diff_sum, jump_sum
        if rate_override >= 0.0:
            rate = rate_override
        for p in range(d):
            eps[p] = rng.standard_normal()
        n_jumps = 0
        if rate > 0.0:
            mu = rate * dt
            if not mu < MAX_EVENTS_PER_STEP:
                return RATE_EXPLODED, x, times, sizes, count, drift_int, diff_sum, jump_sum
            n_jumps = rng.poisson(mu)
        for p in range(d):
            jump[p] = 0.0
        for _ in range(n_jumps):
            status = draw_jump(tau, x, Y, loga, sig2, c, gam2, lam, n, False, lg, lp, probs, rng, single, mean, var)
            if status == -2:
                return DEGENERATE, x, times, sizes, count, drift_int, diff_sum, jump_sum
            times, sizes = _grow(times, sizes, count)
            times[count] = t + 0.5 * dt
            for p in range(d):
                sizes[count, p] = single[p]
                jump[p] += single[p]
            count += 1
        sq = math.sqrt(dt)
        for p in range(d):
            a = drift[p] * dt
            b = sig[p] * sq * eps[p]
            x[p] = x[p] + a + b + jump[p]
            drift_int[p] += a
            diff_sum[p] += b
            jump_sum[p] += jump[p]
    return OK, x, times, sizes, count, drift_int, diff_sum, jump_sum


@njit(cache=True, nogil=True)
def _clock(t, rate, rng):
    if rate > 0.0 and rate < np.inf:
        return t + rng.standard_exponential() / rate
    return np.inf


@njit(cache=True, nogil=True)
def adapted_interval(x0, sub, Y, loga, sig, c, gam, lam, n, pure, refresh, post_jump_clock, rate_override, rng):
    """Jump-adapted scheme over one interval (pure jump when ``pure``).

    The clock is drawn at the interval start from the rate there and, with
    ``refresh``, again at every sub-grid point. At a jump the size and the
    next clock both come from the pre-jump state, then the jump is applied.
    Same return layout as :func:`euler_interval`.
    """
    ma, d = Y.shape
    sig2 = sig * sig
    gam2 = gam * gam
    n_sub = sub.shape[0] - 1
    t_start = sub[0]
    t_next = sub[n_sub]
    lg = np.empty((ma, n + 2))
    lp = np.empty(n + 2)
    probs = np.empty((n + 1, ma))
    drift = np.zeros(d)
    jump = np.empty(d)
    mean = np.empty(d)
    var = np.empty(d)
    x = x0.copy()
    times = np.empty(16)
    sizes = np.empty((16, d))
    count = 0
    drift_int = np.zeros(d)
    diff_sum = np.zeros(d)
    jump_sum = np.zeros(d)
    want_drift = not pure
    t = t_start
    t_jump = np.inf
    for k in range(n_sub):
        t_sub = sub[k + 1]
        have_drift = False
        if k == 0 or refresh:
            rate, log_den = drift_and_rate(t_next - t, x, Y, loga, sig2, c, gam2, lam, n, pure, want_drift, lg, lp, drift)
            if log_den == -np.inf:
                return DEGENERATE, x, times, sizes, count, drift_int, diff_sum, jump_sum
            if rate_override >= 0.0:
                rate = rate_override
            if not rate < MAX_RATE:
                return RATE_EXPLODED, x, times, sizes, count, drift_int, diff_sum, jump_sum
            t_jump = _clock(t, rate, rng)
            have_drift = True
        while (t_jump < t_sub if refresh else t_jump <= t_sub) and t_start < t_jump and t_jump < t_next:
            if want_drift:
                if not have_drift:
                    drift_and_rate(t_next - t, x, Y, loga, sig2, c, gam2, lam, n, pure, True, lg, lp, drift)
                step = t_jump - t
                if step > 0.0:
                    sq = math.sqrt(step)
                    for p in range(d):
                        a = drift[p] * step
                        b = sig[p] * sq * rng.standard_normal()
                        x[p] = x[p] + a + b
                        drift_int[p] += a
                        diff_sum[p] += b
            t = t_jump
            tau = t_next - t
            rate, log_den = drift_and_rate(tau, x, Y, loga, sig2, c, gam2, lam, n, pure, False, lg, lp, drift)
            if log_den == -np.inf:
                return DEGENERATE, x, times, sizes, count, drift_int, diff_sum, jump_sum
            target = draw_jump(tau, x, Y, loga, sig2, c, gam2, lam, n, pure, lg, lp, probs, rng, jump, mean, var)
            if target == -2:
                return DEGENERATE, x, times, sizes, count, drift_int, diff_sum, jump_sum
            if not post_jump_clock:
                if rate_override >= 0.0:
                    rate = rate_override
                if not rate < MAX_RATE:
                    return RATE_EXPLODED, x, times, sizes, count, drift_int, diff_sum, jump_sum
                t_jump = _clock(t, rate, rng)
            times, sizes = _grow(times, sizes, count)
            times[count] = t
            for p in range(d):
                sizes[count, p] = jump[p]
                jump_sum[p] += jump[p]
                # land exactly on the target so the atom test sees equality
                x[p] = Y[target, p] if target >= 0 else x[p] + jump[p]
            count += 1
            have_drift = False
            if post_jump_clock:
                rate, log_den = drift_and_rate(tau, x, Y, loga, sig2, c, gam2, lam, n, pure, want_drift, lg, lp, drift)
                if log_den == -np.inf:
                    return DEGENERATE, x, times, sizes, count, drift_int, diff_sum, jump_sum
                have_drift = want_drift
                if rate_override >= 0.0:
                    rate = rate_override
                if not rate < MAX_RATE:
                    return RATE_EXPLODED, x, times, sizes, count, drift_int, diff_sum, jump_sum
                t_jump = _clock(t, rate, rng)
        step = t_sub - t
        if step > 0.0:
            if want_drift:
                if not have_drift:
                    drift_and_rate(t_next - t, x, Y, loga, sig2, c, gam2, lam, n, pure, True, lg, lp, drift)
                sq = math.sqrt(step)
                for p in range(d):
                    a = drift[p] * step
                    b = sig[p] * sq * rng.standard_normal()
                    x[p] = x[p] + a + b
                    drift_int[p] += a
                    diff_sum[p] += b
            t = t_sub
    return OK, x, times, sizes, count, drift_int, diff_sum, jump_sum
