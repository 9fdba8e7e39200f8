"""Trajectory generation: fixed-step Euler, jump-adapted Euler and the
pure-jump sampler.

Each trajectory walks the grid interval by interval. At the start of
interval ``i`` the kernel window over the simulated values ``x_1 .. x_i``
fixes the active data samples; the compiled kernel then runs the sub-grid.
Draws for trajectory ``m`` in interval ``i`` come from the substream
``("path", m, i)``, so results do not depend on scheduling.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _engine
from .core import Dataset, KernelConfig, ReferenceParams, RngSpec
from .errors import DomainError, EstimationError, NumericalError
from .estimators import prepare_interval

SCHEMES = ("euler", "jump_adapted", "pure_jump")


@dataclass(frozen=True)
class SimConfig:
    scheme: str = "euler"
    n_series: int = 1
    rng: RngSpec = field(default_factory=RngSpec)
    record_jumps: bool = False
    # redraw the jump clock at every sub-grid point, not only at jumps
    refresh_at_substeps: bool = True
    # draw the next clock from the post-jump state instead of the pre-jump one
    post_jump_clock: bool = False
    workers: int = 1
    # test hook: replace the estimated total rate by a constant
    rate_override: float | None = None

    def __post_init__(self):
        scheme = self.scheme.replace("-", "_")
        if scheme not in SCHEMES:
            raise DomainError(f"unknown scheme {self.scheme!r}; choose from {', '.join(SCHEMES)}")
        object.__setattr__(self, "scheme", scheme)
        if int(self.n_series) < 1:
            raise DomainError("n_series must be >= 1")
        if int(self.workers) < 1:
            raise DomainError("workers must be >= 1")
        if self.rate_override is not None and self.rate_override < 0:
            raise DomainError("rate_override must be nonnegative")


@dataclass(frozen=True)
class IntervalLog:
    """Per-interval decomposition of the path increment."""

    drift_integral: np.ndarray
    diffusion_sum: np.ndarray
    jump_sum: np.ndarray


@dataclass(frozen=True)
class SyntheticSeries:
    grid_values: np.ndarray
    jump_times: np.ndarray
    jump_sizes: np.ndarray
    interval_logs: tuple[IntervalLog, ...] | None = None

    @property
    def n_jumps(self) -> int:
        return int(self.jump_times.size)

    @property
    def jump_log(self) -> list[tuple[float, np.ndarray]]:
        return list(zip(self.jump_times.tolist(), self.jump_sizes))


def _check(ds: Dataset, cfg: KernelConfig, params: ReferenceParams, sim: SimConfig):
    cfg.check_grid(ds.n_intervals)
    if params.dim != ds.dim:
        raise DomainError(f"parameters have dimension {params.dim}, data has {ds.dim}")
    if sim.scheme == "pure_jump" and not params.pure_jump:
        raise DomainError("the pure_jump scheme needs pure-jump reference parameters")
    if sim.scheme != "pure_jump" and params.pure_jump:
        raise DomainError("pure-jump parameters need the pure_jump scheme")


def run_path(
    ds: Dataset,
    cfg: KernelConfig,
    params: ReferenceParams,
    sim: SimConfig,
    index: int,
    prefix: np.ndarray | None = None,
    n: int | None = None,
) -> SyntheticSeries:
    """Simulate one trajectory.

    ``prefix`` holds given values at dates ``t_0 .. t_j``; simulation then
    covers intervals ``j .. N-1``. Without it the path starts from the
    data's common value at ``t_0``.
    """
    if n is None:
        n = params.n_jumps_for(ds.grid.max_dt)
    if prefix is None:
        prefix = ds.start_value()[None, :]
    values = np.empty((ds.n_intervals + 1, ds.dim))
    j0 = prefix.shape[0] - 1
    values[: j0 + 1] = prefix
    sigma, c, gamma = params.arrays()
    override = -1.0 if sim.rate_override is None else float(sim.rate_override)
    times, sizes, logs = [], [], []
    for i in range(j0, ds.n_intervals):
        data = prepare_interval(ds, values[: i + 1], cfg, params, n)
        sub = ds.grid.subgrid(i)
        rng = sim.rng.generator("path", index, i)
        x0 = values[i].copy()
        if sim.scheme == "euler":
            out = _engine.euler_interval(x0, sub, data.Y, data.loga, sigma, c, gamma, params.lambda0, n, override, rng)
        else:
            out = _engine.adapted_interval(
                x0, sub, data.Y, data.loga, sigma, c, gamma, params.lambda0, n,
                params.pure_jump, sim.refresh_at_substeps, sim.post_jump_clock, override, rng,
            )
        status, x_end, jt, js, count, d_int, diff, jsum = out
        if status == _engine.DEGENERATE:
            raise EstimationError(f"trajectory {index}, interval {i}: estimator denominator vanished")
        if status == _engine.RATE_EXPLODED:
            raise NumericalError(f"trajectory {index}, interval {i}: jump rate exploded")
        if not np.all(np.isfinite(x_end)):
            raise NumericalError(f"trajectory {index}, interval {i}: non-finite state")
        values[i + 1] = x_end
        if sim.record_jumps:
            times.append(jt[:count].copy())
            sizes.append(js[:count].copy())
            logs.append(IntervalLog(d_int, diff, jsum))
    if sim.record_jumps and times:
        jt_all, js_all = np.concatenate(times), np.concatenate(sizes)
    else:
        jt_all, js_all = np.empty(0), np.empty((0, ds.dim))
    return SyntheticSeries(values, jt_all, js_all, tuple(logs) if sim.record_jumps else None)


def _map(fn, items: Sequence, workers: int) -> list:
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def simulate(ds: Dataset, cfg: KernelConfig, params: ReferenceParams, sim: SimConfig) -> list[SyntheticSeries]:
    _check(ds, cfg, params, sim)
    n = params.n_jumps_for(ds.grid.max_dt)
    start = ds.start_value()[None, :]
    return _map(lambda m: run_path(ds, cfg, params, sim, m, start, n), range(sim.n_series), sim.workers)


def simulate_euler(ds, cfg, params, sim: SimConfig) -> list[SyntheticSeries]:
    return simulate(ds, cfg, params, _with_scheme(sim, "euler"))


def simulate_jump_adapted(ds, cfg, params, sim: SimConfig) -> list[SyntheticSeries]:
    return simulate(ds, cfg, params, _with_scheme(sim, "jump_adapted"))


def simulate_pure_jump(ds, cfg, params, sim: SimConfig) -> list[SyntheticSeries]:
    return simulate(ds, cfg, params, _with_scheme(sim, "pure_jump"))


def _with_scheme(sim: SimConfig, scheme: str) -> SimConfig:
    return replace(sim, scheme=scheme)


def simulate_last_values(
    train: Dataset,
    prefixes: np.ndarray,
    cfg: KernelConfig,
    params: ReferenceParams,
    sim: SimConfig,
    n_draws: int,
) -> np.ndarray:
    """Draw ``n_draws`` values at ``t_N`` for each prefix ``x_0 .. x_{N-1}``.

    Returns shape (Q, n_draws, d). Draw ``l`` of prefix ``q`` uses
    trajectory index ``q * n_draws + l``.
    """
    _check(train, cfg, params, sim)
    prefixes = np.asarray(prefixes, dtype=float)
    q, n1, d = prefixes.shape
    if n1 != train.n_intervals:
        raise DomainError(f"prefixes need {train.n_intervals} dates, got {n1}")
    n = params.n_jumps_for(train.grid.max_dt)
    jobs = [(a, b) for a in range(q) for b in range(n_draws)]
    paths = _map(
        lambda ab: run_path(train, cfg, params, sim, ab[0] * n_draws + ab[1], prefixes[ab[0]], n).grid_values[-1],
        jobs,
        sim.workers,
    )
    return np.asarray(paths).reshape(q, n_draws, d)


def to_dataset(series: Sequence[SyntheticSeries], like: Dataset) -> Dataset:
    """Stack trajectories on ``like``'s grid, names and normalization history."""
    return like.with_values(np.stack([s.grid_values for s in series]))


def jump_table(series: Sequence[SyntheticSeries]) -> np.ndarray:
    """Rows ``(series_id, t, size_1 .. size_d)`` of every logged jump."""
    rows = [
        np.column_stack([np.full(s.n_jumps, m, dtype=float), s.jump_times, s.jump_sizes])
        for m, s in enumerate(series)
        if s.n_jumps
    ]
    if not rows:
        d = series[0].grid_values.shape[1] if series else 1
        return np.empty((0, 2 + d))
    return np.concatenate(rows)
