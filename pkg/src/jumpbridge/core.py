"""Foundational types: time grid, datasets and their normalizations, model
configuration, and the seeded substream contract used by every simulator."""

from __future__ import annotations

import csv
import json
import math
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import (
    DomainError,
    NormalizationError,
    ParseError,
    SizeError,
    StateError,
)

DEFAULT_SUBSTEPS = 100
POISSON_TAIL_TOL = 1e-10
MAX_AUTO_JUMPS = 60


@dataclass(frozen=True)
class TimeGrid:
    """Observation dates ``t_0 = 0 < t_1 < ... < t_N`` plus the number of
    uniform Euler substeps used inside each interval."""

    dates: tuple[float, ...]
    substeps: int = DEFAULT_SUBSTEPS

    def __post_init__(self):
        dates = tuple(float(t) for t in self.dates)
        object.__setattr__(self, "dates", dates)
        if len(dates) < 2:
            raise SizeError("a time grid needs at least two dates (N >= 1)")
        if dates[0] != 0.0:
            raise DomainError(f"grid must start at t_0 = 0, got {dates[0]}")
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise DomainError("grid dates must be strictly increasing")
        if int(self.substeps) < 1:
            raise DomainError("substeps must be >= 1")
        object.__setattr__(self, "substeps", int(self.substeps))

    @classmethod
    def uniform(cls, n_intervals: int, dt: float, substeps: int = DEFAULT_SUBSTEPS) -> "TimeGrid":
        return cls(tuple(i * dt for i in range(n_intervals + 1)), substeps)

    @property
    def n_intervals(self) -> int:
        return len(self.dates) - 1

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.dates)

    def dt(self, i: int) -> float:
        return self.dates[i + 1] - self.dates[i]

    @property
    def max_dt(self) -> float:
        return max(self.dt(i) for i in range(self.n_intervals))

    @property
    def is_uniform(self) -> bool:
        steps = np.diff(self.array)
        return bool(np.allclose(steps, steps[0], rtol=1e-9, atol=0.0))

    def subgrid(self, i: int) -> np.ndarray:
        """Points ``t_{i,k}``, k = 0..substeps, with both ends exact."""
        t0, t1 = self.dates[i], self.dates[i + 1]
        k = np.arange(self.substeps + 1, dtype=float)
        pts = t0 + (k / self.substeps) * (t1 - t0)
        pts[0] = t0
        pts[-1] = t1
        return pts


@dataclass(frozen=True)
class NormRecord:
    """One applied normalization and what is needed to undo it.

    ``params`` holds numpy arrays; per-series entries have leading axis M.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": {k: np.asarray(v).tolist() for k, v in self.params.items()}}

    @classmethod
    def from_json(cls, obj: dict) -> "NormRecord":
        return cls(obj["kind"], {k: np.asarray(v, dtype=float) for k, v in obj["params"].items()})


@dataclass(frozen=True)
class Dataset:
    """M series observed on ``grid``: ``values`` has shape (M, N+1, d)."""

    values: np.ndarray
    grid: TimeGrid
    norm_meta: tuple[NormRecord, ...] = ()
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 2:
            values = values[:, :, None]
        if values.ndim != 3:
            raise SizeError(f"values must have shape (M, N+1, d), got {values.shape}")
        m, n1, d = values.shape
        if m < 1 or d < 1:
            raise SizeError("dataset needs M >= 1 series and d >= 1 dimensions")
        if n1 != len(self.grid.dates):
            raise SizeError(f"values have {n1} dates but the grid has {len(self.grid.dates)}")
        if not np.all(np.isfinite(values)):
            raise SizeError("dataset values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        names = self.feature_names
        if names is None:
            names = tuple(f"x{p}" for p in range(d))
        if len(names) != d:
            raise SizeError(f"{len(names)} feature names for {d} dimensions")
        object.__setattr__(self, "feature_names", tuple(names))
        object.__setattr__(self, "norm_meta", tuple(self.norm_meta))

    @property
    def n_series(self) -> int:
        return self.values.shape[0]

    @property
    def n_intervals(self) -> int:
        return self.values.shape[1] - 1

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    def with_values(self, values: np.ndarray) -> "Dataset":
        """Same grid, names and normalization history; new values (any M)."""
        return replace(self, values=values)

    def component(self, p: int) -> "Dataset":
        return Dataset(
            self.values[:, :, p : p + 1],
            self.grid,
            tuple(_slice_record(r, p) for r in self.norm_meta),
            (self.feature_names[p],),
        )

    def start_value(self) -> np.ndarray:
        """Common value at t_0, which is where generation starts."""
        first = self.values[:, 0, :]
        if not np.all(first == first[0]):
            raise StateError(
                "series do not share a common value at t_0; apply base_one or standard normalization first"
            )
        return first[0].copy()

    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=1)


def _slice_record(rec: NormRecord, p: int) -> NormRecord:
    return NormRecord(rec.kind, {k: np.asarray(v)[..., p : p + 1] for k, v in rec.params.items()})


@dataclass(frozen=True)
class ReferenceParams:
    """Constants of the reference jump-diffusion: diagonal volatility,
    Poisson rate, Gaussian jump mean and std, and the truncation depth of
    the jump-count series."""

    sigma: tuple[float, ...]
    lambda0: float
    c: tuple[float, ...]
    gamma: tuple[float, ...]
    n_jumps_trunc: int | None = None
    pure_jump: bool = False

    def __post_init__(self):
        sigma = _as_tuple(self.sigma)
        c = _as_tuple(self.c)
        gamma = _as_tuple(self.gamma)
        d = max(len(sigma), len(c), len(gamma))
        sigma, c, gamma = (_broadcast(v, d, name) for v, name in ((sigma, "sigma"), (c, "c"), (gamma, "gamma")))
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "lambda0", float(self.lambda0))
        if self.lambda0 < 0 or not math.isfinite(self.lambda0):
            raise DomainError("lambda0 must be a nonnegative finite rate")
        if any(g <= 0 for g in gamma):
            raise DomainError("jump std gamma must be positive")
        if self.pure_jump:
            if any(s != 0 for s in sigma):
                raise DomainError("pure-jump mode requires sigma = 0")
            if self.lambda0 <= 0:
                raise DomainError("pure-jump mode requires lambda0 > 0")
        elif any(s <= 0 for s in sigma):
            raise DomainError("sigma must be positive outside pure-jump mode")
        if self.n_jumps_trunc is not None:
            if int(self.n_jumps_trunc) < 0:
                raise DomainError("n_jumps_trunc must be >= 0")
            object.__setattr__(self, "n_jumps_trunc", int(self.n_jumps_trunc))
            if self.pure_jump and self.n_jumps_trunc < 1:
                raise DomainError("pure-jump mode needs n_jumps_trunc >= 1")

    @property
    def dim(self) -> int:
        return len(self.sigma)

    def arrays(self):
        return np.asarray(self.sigma), np.asarray(self.c), np.asarray(self.gamma)

    def n_jumps_for(self, max_dt: float) -> int:
        """Truncation depth to use over intervals of length ``max_dt``."""
        if self.n_jumps_trunc is not None:
            return self.n_jumps_trunc
        return auto_n_jumps(self.lambda0, max_dt, pure_jump=self.pure_jump)

    def resolved(self, max_dt: float, override: int | None = None) -> "ReferenceParams":
        """Pin the truncation depth: the automatic tail-mass rule, never
        below ``override``."""
        n = auto_n_jumps(self.lambda0, max_dt, pure_jump=self.pure_jump)
        if override is not None:
            n = max(n, int(override))
        return replace(self, n_jumps_trunc=n)


def auto_n_jumps(lambda0: float, max_dt: float, tol: float = POISSON_TAIL_TOL, pure_jump: bool = False) -> int:
    """Smallest n with P(Poisson(lambda0 * max_dt) > n) < tol, capped."""
    mean = lambda0 * max_dt
    floor = 1 if pure_jump else 0
    if mean <= 0:
        return floor
    for n in range(MAX_AUTO_JUMPS + 1):
        if stats.poisson.sf(n, mean) < tol:
            return max(n, floor)
    return MAX_AUTO_JUMPS


def _as_tuple(v) -> tuple[float, ...]:
    return tuple(float(x) for x in np.atleast_1d(np.asarray(v, dtype=float)))


def _broadcast(v: tuple[float, ...], d: int, name: str) -> tuple[float, ...]:
    if len(v) == d:
        return v
    if len(v) == 1:
        return v * d
    raise SizeError(f"{name} has length {len(v)}, expected 1 or {d}")


@dataclass(frozen=True)
class KernelConfig:
    bandwidth: float
    markov_order: int = 1

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise DomainError("bandwidth must be positive")
        if int(self.markov_order) < 1:
            raise DomainError("markov_order must be >= 1")
        object.__setattr__(self, "bandwidth", float(self.bandwidth))
        object.__setattr__(self, "markov_order", int(self.markov_order))

    def check_grid(self, n_intervals: int):
        if self.markov_order > n_intervals:
            raise DomainError(f"markov_order {self.markov_order} exceeds N = {n_intervals}")


@dataclass(frozen=True)
class RngSpec:
    """Seed plus a derivation rule for independent substreams.

    A substream is keyed by ``(purpose, index, interval)``; the key goes
    through ``SeedSequence`` spawn keys into a Philox counter-based
    generator, so the draws depend only on the key, never on which worker
    or in which order the substream is consumed.
    """

    master_seed: int = 0

    def generator(self, purpose: str, index: int = 0, interval: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(
            int(self.master_seed) & 0xFFFFFFFFFFFFFFFF,
            spawn_key=(_purpose_code(purpose), int(index), int(interval)),
        )
        return np.random.Generator(np.random.Philox(ss))

    def child(self, purpose: str, index: int = 0) -> "RngSpec":
        """A derived spec whose substreams never collide with this one's."""
        seed = self.generator(purpose, index, -1 & 0xFFFFFFFF).integers(0, 2**63 - 1)
        return RngSpec(int(seed))


def _purpose_code(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


# ---------------------------------------------------------------------------
# ingestion


def load_csv(
    path: str | Path,
    layout: str = "wide",
    window_len: int | None = None,
    stride: int = 1,
    dt: float = 1.0 / 252.0,
    skip_first_column: bool = False,
    substeps: int = DEFAULT_SUBSTEPS,
) -> Dataset:
    """Read a dataset.

    ``wide``: one multivariate record, header of feature names and one row
    per timestamp (oldest first), cut into overlapping windows of
    ``window_len + 1`` rows every ``stride`` rows.
    ``long``: the windowed format written by :func:`save_dataset`.
    """
    path = Path(path)
    if layout == "long":
        return load_dataset(path)
    if layout != "wide":
        raise ValueError(f"unknown layout {layout!r}")
    if window_len is None or window_len < 1:
        raise SizeError("window_len must be a positive integer")
    if stride < 1:
        raise SizeError("stride must be a positive integer")
    names, rows = _read_wide(path, skip_first_column)
    n_rows = rows.shape[0]
    if window_len + 1 > n_rows:
        raise SizeError(f"need at least {window_len + 1} rows for window_len={window_len}, file has {n_rows}")
    starts = range(0, n_rows - window_len, stride)
    values = np.stack([rows[s : s + window_len + 1] for s in starts])
    return Dataset(values, TimeGrid.uniform(window_len, dt, substeps), (), tuple(names))


def _read_wide(path: Path, skip_first_column: bool):
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SizeError(f"{path} is empty") from None
        if skip_first_column:
            header = header[1:]
        if not header:
            raise ParseError("header has no feature columns", row=1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if skip_first_column:
                row = row[1:]
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} cells, found {len(row)}", row=lineno)
            parsed = []
            for name, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(f"non-numeric cell {cell!r}", row=lineno, column=name) from None
                if not math.isfinite(v):
                    raise ParseError(f"non-finite cell {cell!r}", row=lineno, column=name)
                parsed.append(v)
            rows.append(parsed)
    if not rows:
        raise SizeError(f"{path} has no data rows")
    return [h.strip() for h in header], np.asarray(rows, dtype=float)


def _meta_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def save_dataset(ds: Dataset, path: str | Path) -> Path:
    """Write ``series_id,time_index,t,<features>`` rows plus a JSON sidecar
    carrying the grid and normalization history."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dates = ds.grid.dates
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series_id", "time_index", "t", *ds.feature_names])
        for m in range(ds.n_series):
            for i, t in enumerate(dates):
                w.writerow([m, i, repr(t), *(repr(float(v)) for v in ds.values[m, i])])
    meta = {
        "dates": list(dates),
        "substeps": ds.grid.substeps,
        "feature_names": list(ds.feature_names),
        "norm_meta": [r.to_json() for r in ds.norm_meta],
    }
    _meta_path(path).write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return path


def load_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise SizeError(f"{path} does not exist")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:3] != ["series_id", "time_index", "t"]:
            raise ParseError("long layout needs a 'series_id,time_index,t,...' header", row=1)
        names = header[3:]
        if not names:
            raise ParseError("no feature columns", row=1)
        recs: dict[int, dict[int, tuple[float, list[float]]]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} cells, found {len(row)}", row=lineno)
            try:
                sid, ti = int(row[0]), int(row[1])
            except ValueError:
                raise ParseError("series_id/time_index must be integers", row=lineno) from None
            vals = []
            for name, cell in zip(header[2:], row[2:]):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ParseError(f"non-numeric cell {cell!r}", row=lineno, column=name) from None
            recs.setdefault(sid, {})[ti] = (vals[0], vals[1:])
    if not recs:
        raise SizeError(f"{path} has no data rows")
    ids = sorted(recs)
    n1 = len(recs[ids[0]])
    if any(sorted(recs[s]) != list(range(n1)) for s in ids):
        raise SizeError("every series must have the same contiguous time indices")
    values = np.array([[recs[s][i][1] for i in range(n1)] for s in ids])
    dates = [recs[ids[0]][i][0] for i in range(n1)]
    meta_file = _meta_path(path)
    substeps, norm_meta = DEFAULT_SUBSTEPS, ()
    if meta_file.exists():
        meta = json.loads(meta_file.read_text())
        substeps = int(meta.get("substeps", DEFAULT_SUBSTEPS))
        norm_meta = tuple(NormRecord.from_json(r) for r in meta.get("norm_meta", []))
        dates = meta.get("dates", dates)
    return Dataset(values, TimeGrid(tuple(dates), substeps), norm_meta, tuple(names))


# ---------------------------------------------------------------------------
# normalization


def normalize(ds: Dataset, kind: str, scope: str = "pooled") -> Dataset:
    """Apply one normalization and record how to invert it.

    base_one
        divide every dimension of every series by its value at t_0.
    standard
        dates t_1..t_N become ``(x - mean) / std`` with one mean and std per
        dimension taken over the whole dataset (``scope="pooled"``) or one
        per series and dimension (``scope="per_series"``); t_0 becomes 0,
        the generation start. Only pooled statistics can be inverted on
        freshly generated series.
    increments_rescale
        replace the series by cumulated increments multiplied by
        ``sqrt(dt) / std(increments)`` (start 0), so increments have
        empirical variance ``dt``.
    """
    v = ds.values
    if kind == "none":
        return replace(ds, norm_meta=ds.norm_meta + (NormRecord("none"),))
    if kind == "base_one":
        first = v[:, 0, :]
        bad = np.argwhere(first == 0)
        if bad.size:
            m, p = bad[0]
            raise NormalizationError(f"base_one: zero first value in series {m}, dimension {p}")
        out = v / first[:, None, :]
        rec = NormRecord("base_one", {"first": first.copy()})
    elif kind == "standard":
        body = v[:, 1:, :]
        if scope == "pooled":
            mean = body.mean(axis=(0, 1))
            std = body.std(axis=(0, 1))
            bad = np.flatnonzero(std == 0)
            if bad.size:
                raise NormalizationError(f"standard: zero standard deviation in dimension {bad[0]} (all series)")
        elif scope == "per_series":
            mean = body.mean(axis=1)
            std = body.std(axis=1)
            bad = np.argwhere(std == 0)
            if bad.size:
                m, p = bad[0]
                raise NormalizationError(f"standard: zero standard deviation in series {m}, dimension {p}")
            mean, std = mean[:, None, :], std[:, None, :]
        else:
            raise ValueError(f"unknown scope {scope!r}")
        out = np.empty_like(v)
        out[:, 0, :] = 0.0
        out[:, 1:, :] = (body - mean) / std
        rec = NormRecord("standard", {"mean": mean, "std": std, "start": v[:, 0, :].copy()})
    elif kind == "increments_rescale":
        if not ds.grid.is_uniform:
            raise NormalizationError("increments_rescale needs a uniform grid")
        incr = np.diff(v, axis=1)
        std = incr.reshape(-1, v.shape[2]).std(axis=0)
        bad = np.flatnonzero(std == 0)
        if bad.size:
            raise NormalizationError(f"increments_rescale: zero increment std in dimension {bad[0]} (all series)")
        scale = math.sqrt(ds.grid.dt(0)) / std
        out = np.zeros_like(v)
        out[:, 1:, :] = np.cumsum(incr * scale, axis=1)
        rec = NormRecord("increments_rescale", {"scale": scale, "start": v[:, 0, :].copy()})
    else:
        raise ValueError(f"unknown normalization {kind!r}")
    return replace(ds, values=out, norm_meta=ds.norm_meta + (rec,))


def _per_series(arr: np.ndarray, m: int, kind: str) -> np.ndarray:
    """Per-series stored values, broadcast to a dataset with m series."""
    arr = np.asarray(arr, dtype=float)
    if arr.shape[0] == m:
        return arr
    if np.all(arr == arr[0]):
        return np.broadcast_to(arr[0], (m,) + arr.shape[1:])
    raise StateError(
        f"cannot invert {kind}: stored per-series values differ and the dataset has {m} series, not {arr.shape[0]}"
    )


def denormalize(ds: Dataset, stop_at: str | None = None) -> Dataset:
    """Undo recorded normalizations, most recent first.

    ``stop_at`` leaves that kind (and anything older) in place, e.g.
    ``stop_at="base_one"`` returns synthetic windows on the base-one scale.
    """
    if not ds.norm_meta:
        raise StateError("dataset has no normalization metadata to invert")
    v = ds.values.copy()
    m = v.shape[0]
    meta = list(ds.norm_meta)
    while meta:
        rec = meta[-1]
        if stop_at is not None and rec.kind == stop_at:
            break
        meta.pop()
        p = rec.params
        if rec.kind == "none":
            continue
        if rec.kind == "base_one":
            v = v * _per_series(p["first"], m, rec.kind)[:, None, :]
        elif rec.kind == "standard":
            start = _per_series(p["start"], m, rec.kind)
            mean, std = np.asarray(p["mean"]), np.asarray(p["std"])
            if mean.ndim == 3:
                mean, std = _per_series(mean, m, rec.kind), _per_series(std, m, rec.kind)
            body = v[:, 1:, :] * std + mean
            v = np.concatenate([np.array(start, dtype=float)[:, None, :], body], axis=1)
        elif rec.kind == "increments_rescale":
            start = _per_series(p["start"], m, rec.kind)
            incr = np.diff(v, axis=1) / np.asarray(p["scale"])
            v = np.concatenate([np.zeros_like(v[:, :1, :]), np.cumsum(incr, axis=1)], axis=1)
            v = v + np.asarray(start)[:, None, :]
        else:
            raise StateError(f"unknown normalization record {rec.kind!r}")
    return replace(ds, values=v, norm_meta=tuple(meta))


def stack(datasets: Sequence[Dataset]) -> Dataset:
    first = datasets[0]
    return first.with_values(np.concatenate([d.values for d in datasets], axis=0))
