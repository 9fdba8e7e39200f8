"""Static SVG figures for evaluation reports. Headless: uses the Agg backend."""

from __future__ import annotations

import csv
import warnings
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .core import Dataset  # noqa: E402

# fixed metadata keeps the SVG bytes reproducible
_SVG_META = {"Date": None, "Creator": None}
plt.rcParams["svg.hashsalt"] = "jumpbridge"


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path


def qq_plot(pairs: list[tuple[float, float, float]], path: Path, title: str = "") -> Path:
    """Scatter of (real, synthetic) quantiles against the identity line."""
    fig, ax = plt.subplots(figsize=(4, 4))
    r = np.array([p[1] for p in pairs])
    s = np.array([p[2] for p in pairs])
    if r.size:
        lo, hi = min(r.min(), s.min()), max(r.max(), s.max())
        ax.plot([lo, hi], [lo, hi], color="grey", lw=1)
        ax.scatter(r, s, s=12)
    ax.set_xlabel("real quantile")
    ax.set_ylabel("synthetic quantile")
    ax.set_title(title)
    return _save(fig, path)


def ecdf_overlay(x, real, synth, path: Path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.step(x, real, where="post", label="real")
    ax.step(x, synth, where="post", label="synthetic", ls="--")
    ax.set_ylabel("ECDF")
    ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def qv_histogram(real, synth, path: Path, title: str = "", bins: int = 40) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    both = np.concatenate([real, synth])
    edges = np.histogram_bin_edges(both, bins=bins) if both.size else bins
    ax.hist(real, bins=edges, alpha=0.5, density=True, label="real")
    ax.hist(synth, bins=edges, alpha=0.5, density=True, label="synthetic")
    ax.set_xlabel("quadratic variation")
    ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def correlation_heatmaps(real, synth, names, path: Path) -> Path:
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.8))
    for ax, mat, title in zip(axes, (real, synth), ("real", "synthetic")):
        im = ax.imshow(np.asarray(mat), vmin=-1, vmax=1, cmap="coolwarm")
        ax.set_xticks(range(len(names)), names, rotation=90)
        ax.set_yticks(range(len(names)), names)
        ax.set_title(title)
    fig.colorbar(im, ax=axes, shrink=0.8)
    return _save(fig, path)


def path_fan(real: Dataset, synth: Dataset, path: Path, dim: int = 0, n_paths: int = 5) -> Path:
    """First few paths of each dataset side by side."""
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.5), sharey=True)
    t = real.grid.array
    for ax, ds, title in zip(axes, (real, synth), ("real", "synthetic")):
        ax.plot(t, ds.values[:n_paths, :, dim].T, lw=0.8)
        ax.set_title(f"{title}: {ds.feature_names[dim]}")
        ax.set_xlabel("t")
    return _save(fig, path)


def _read_rows(path: Path) -> list[dict]:
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def render_report(metrics: dict, out_dir: str | Path, tables_dir: str | Path | None = None,
                  real: Dataset | None = None, synth: Dataset | None = None) -> list[Path]:
    """Render every figure the available inputs allow.

    ``metrics`` is a saved metric report; ``tables_dir`` may hold the
    qv.csv and ecdf.csv tables written next to it. Empty metrics give an
    empty report and a warning.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if not metrics:
        warnings.warn("empty metrics: nothing to render", stacklevel=2)
        return written
    names = metrics.get("feature_names") or [f"x{p}" for p in range(len(metrics.get("qq_pairs", [])))]
    for p, pairs in enumerate(metrics.get("qq_pairs", [])):
        written.append(qq_plot(pairs, out / f"qq_{names[p]}.svg", f"increment QQ: {names[p]}"))
    if metrics.get("corr_real") and len(names) > 1:
        written.append(correlation_heatmaps(metrics["corr_real"], metrics["corr_synth"], names, out / "correlation.svg"))
    tables = Path(tables_dir) if tables_dir is not None else None
    if tables is not None and (tables / "qv.csv").exists():
        qv = defaultdict(list)
        for row in _read_rows(tables / "qv.csv"):
            qv[(row["feature"], row["source"])].append(float(row["qv"]))
        for name in names:
            written.append(qv_histogram(np.array(qv[(name, "real")]), np.array(qv[(name, "synthetic")]),
                                        out / f"qv_{name}.svg", f"quadratic variation: {name}"))
    if tables is not None and (tables / "ecdf.csv").exists():
        rows = defaultdict(list)
        for row in _read_rows(tables / "ecdf.csv"):
            rows[row["feature"]].append((float(row["x"]), float(row["real"]), float(row["synthetic"])))
        for name in names:
            arr = np.array(rows[name]).reshape(-1, 3)
            written.append(ecdf_overlay(arr[:, 0], arr[:, 1], arr[:, 2], out / f"ecdf_{name}.svg", f"increments: {name}"))
    if real is not None and synth is not None:
        for p in range(real.dim):
            written.append(path_fan(real, synth, out / f"paths_{real.feature_names[p]}.svg", p))
    return written
