"""Distribution comparisons between real and synthetic series."""

from __future__ import annotations

import warnings

import numpy as np

from ..core import Dataset


def quadratic_variation(ds: Dataset | np.ndarray) -> np.ndarray:
    """Sum of squared increments per series: shape (M,) for d = 1, else (M, d)."""
    values = ds.values if isinstance(ds, Dataset) else np.asarray(ds, dtype=float)
    if values.ndim == 2:
        values = values[:, :, None]
    qv = np.sum(np.square(np.diff(values, axis=1)), axis=1)
    return qv[:, 0] if qv.shape[1] == 1 else qv


def increments(ds: Dataset | np.ndarray) -> np.ndarray:
    """All increments pooled per dimension, shape (M * N, d)."""
    values = ds.values if isinstance(ds, Dataset) else np.asarray(ds, dtype=float)
    if values.ndim == 2:
        values = values[:, :, None]
    return np.diff(values, axis=1).reshape(-1, values.shape[2])


def _sample(a) -> np.ndarray:
    a = np.sort(np.ravel(np.asarray(a, dtype=float)))
    if a.size == 0:
        raise ValueError("empty sample")
    return a


def wasserstein2_1d(a, b) -> float:
    """Wasserstein-2 distance between two empirical laws on the line.

    Integrates the squared gap of the two quantile functions, which are
    step functions jumping at multiples of 1/len(a) and 1/len(b).
    """
    a, b = _sample(a), _sample(b)
    if a.size == b.size:
        return float(np.sqrt(np.mean(np.square(a - b))))
    u = np.union1d(np.arange(a.size + 1) / a.size, np.arange(b.size + 1) / b.size)
    mid = 0.5 * (u[:-1] + u[1:])
    qa = a[np.minimum((mid * a.size).astype(int), a.size - 1)]
    qb = b[np.minimum((mid * b.size).astype(int), b.size - 1)]
    return float(np.sqrt(np.sum(np.diff(u) * np.square(qa - qb))))


def qq_quantiles(a, b, levels) -> list[tuple[float, float, float]]:
    """Linear-interpolation quantiles of both samples at each level."""
    levels = np.asarray(levels, dtype=float)
    if np.any((levels <= 0) | (levels >= 1)):
        raise ValueError("quantile levels must lie in (0, 1)")
    qa = np.quantile(_sample(a), levels)
    qb = np.quantile(_sample(b), levels)
    return list(zip(levels.tolist(), qa.tolist(), qb.tolist()))


def ecdf(sample, at) -> np.ndarray:
    """Right-continuous empirical CDF."""
    s = _sample(sample)
    return np.searchsorted(s, np.asarray(at, dtype=float), side="right") / s.size


def ecdf_ks(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov distance. The supremum is attained at a
    sample point, where both ECDFs are evaluated right-continuously."""
    a, b = _sample(a), _sample(b)
    pts = np.concatenate([a, b])
    return float(np.max(np.abs(ecdf(a, pts) - ecdf(b, pts))))


def correlation_matrix(ds: Dataset | np.ndarray) -> np.ndarray:
    """Pearson correlations over all series and dates pooled.

    A constant dimension gets zero off-diagonal entries and a warning.
    """
    values = ds.values if isinstance(ds, Dataset) else np.asarray(ds, dtype=float)
    flat = values.reshape(-1, values.shape[-1])
    d = flat.shape[1]
    std = flat.std(axis=0)
    const = std == 0
    if np.any(const):
        warnings.warn(f"zero-variance dimensions {np.flatnonzero(const).tolist()}: correlations set to 0", stacklevel=2)
    out = np.eye(d)
    live = np.flatnonzero(~const)
    if live.size > 1:
        sub = np.corrcoef(flat[:, live], rowvar=False)
        out[np.ix_(live, live)] = sub
        np.fill_diagonal(out, 1.0)
    return out


def quantile_table(ds: Dataset, date_index: int | None = None, levels=(0.05, 0.95)) -> np.ndarray:
    """Per-component quantiles of the marginal at one date, shape (d, len(levels)).

    Defaults to the middle date ``t_{N/2}``.
    """
    i = ds.n_intervals // 2 if date_index is None else date_index
    return np.quantile(ds.values[:, i, :], levels, axis=0).T
