"""Ground-truth generators: a mean-reverting-by-jumps Merton model and an
Ornstein-Uhlenbeck process, both sampled exactly and read off at grid
dates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Dataset, RngSpec, TimeGrid
from .errors import DomainError


@dataclass(frozen=True)
class MertonParams:
    """``Y_t = y0 + a t + b W_t + sum of jumps`` with jump times at rate
    ``lambda_eta`` and sizes ``N(m_J, v_J^2)`` whose sign is forced to push
    the state back toward ``y0``."""

    a: float = 0.0
    b: float = 2.0
    lambda_eta: float = 10.0
    m_J: float = 0.0
    v_J: float = 0.8
    y0: float = 1.0

    def __post_init__(self):
        if self.b < 0:
            raise DomainError("b must be nonnegative")
        if self.lambda_eta < 0:
            raise DomainError("lambda_eta must be nonnegative")
        if self.v_J <= 0:
            raise DomainError("v_J must be positive")


@dataclass(frozen=True)
class OUParams:
    theta: float = 100.0
    a: float = 1.0
    b: float = 10.0
    y0: float = 1.0

    def __post_init__(self):
        if self.theta <= 0:
            raise DomainError("theta must be positive")
        if self.b < 0:
            raise DomainError("b must be nonnegative")


@dataclass(frozen=True)
class MertonJump:
    path: int
    t: float
    pre_state: float
    size: float


def signed_jump(size: float, state: float, y0: float) -> float:
    """Flip the drawn size so that it points toward ``y0``."""
    if state > y0:
        return -abs(size)
    if state < y0:
        return abs(size)
    return size


def _fine_times(grid: TimeGrid, fine_substeps: int) -> np.ndarray:
    if fine_substeps < 1:
        raise DomainError("fine_substeps must be >= 1")
    pts = [grid.dates[0]]
    for i in range(grid.n_intervals):
        t0, t1 = grid.dates[i], grid.dates[i + 1]
        for k in range(1, fine_substeps + 1):
            pts.append(t1 if k == fine_substeps else t0 + (k / fine_substeps) * (t1 - t0))
    return np.asarray(pts)


def gen_merton(
    p: MertonParams,
    grid: TimeGrid,
    n_paths: int,
    fine_substeps: int = 1,
    stream: RngSpec | None = None,
    return_jumps: bool = False,
):
    """Exact event-driven simulation on the fine grid.

    Between events the state moves by ``a dt + b sqrt(dt) N(0,1)`` which is
    the exact Brownian transition; jump times come from exponential clocks
    and the jump is applied to the exact pre-jump state. Grid values are
    reads of the fine path at the grid dates.
    """
    stream = stream or RngSpec()
    fine = _fine_times(grid, fine_substeps)
    values = np.empty((n_paths, grid.n_intervals + 1, 1))
    jumps: list[MertonJump] = []
    for m in range(n_paths):
        rng = stream.generator("merton", m)
        y = p.y0
        t = fine[0]
        t_jump = t + rng.exponential(1.0 / p.lambda_eta) if p.lambda_eta > 0 else math.inf
        values[m, 0, 0] = y
        for idx in range(1, fine.size):
            t_end = fine[idx]
            while t_jump <= t_end:
                dt = t_jump - t
                y += p.a * dt + p.b * math.sqrt(dt) * rng.standard_normal()
                size = signed_jump(rng.normal(p.m_J, p.v_J), y, p.y0)
                if return_jumps:
                    jumps.append(MertonJump(m, t_jump, y, size))
                y += size
                t = t_jump
                t_jump = t + rng.exponential(1.0 / p.lambda_eta)
            dt = t_end - t
            y += p.a * dt + p.b * math.sqrt(dt) * rng.standard_normal()
            t = t_end
            if idx % fine_substeps == 0:
                values[m, idx // fine_substeps, 0] = y
    ds = Dataset(values, grid, (), ("y",))
    return (ds, jumps) if return_jumps else ds


def ou_transition(x: np.ndarray, p: OUParams, dt: float, z: np.ndarray) -> np.ndarray:
    decay = math.exp(-p.theta * dt)
    sd = p.b * math.sqrt((1.0 - decay * decay) / (2.0 * p.theta))
    return p.a + (x - p.a) * decay + sd * z


def gen_ou(
    p: OUParams,
    grid: TimeGrid,
    n_paths: int,
    fine_substeps: int = 1,
    stream: RngSpec | None = None,
    return_fine: bool = False,
):
    """Exact Gaussian-transition sampling, vectorized across paths."""
    stream = stream or RngSpec()
    fine = _fine_times(grid, fine_substeps)
    z = np.stack([stream.generator("ou", m).standard_normal(fine.size - 1) for m in range(n_paths)])
    path = np.empty((n_paths, fine.size))
    path[:, 0] = p.y0
    for idx in range(1, fine.size):
        path[:, idx] = ou_transition(path[:, idx - 1], p, fine[idx] - fine[idx - 1], z[:, idx - 1])
    values = path[:, ::fine_substeps][:, :, None]
    ds = Dataset(values, grid, (), ("y",))
    return (ds, path) if return_fine else ds


def daily_grid(n_intervals: int = 100, substeps: int = 100, periods_per_year: int = 252) -> TimeGrid:
    """Uniform grid with one step per trading day, in years."""
    return TimeGrid.uniform(n_intervals, 1.0 / periods_per_year, substeps)
