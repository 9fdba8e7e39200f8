"""Bundle of all evaluation metrics for one real/synthetic pair."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..core import Dataset, RngSpec
from .distances import (
    correlation_matrix,
    ecdf,
    ecdf_ks,
    increments,
    qq_quantiles,
    quadratic_variation,
    quantile_table,
    wasserstein2_1d,
)
from .scores import NetConfig, discriminative_scores, predictive_scores

QQ_LEVELS = (0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.975, 0.99)


@dataclass
class MetricReport:
    qv_w2: list[float]
    qv_mean_real: list[float]
    qq_pairs: list[list[tuple[float, float, float]]]
    ks: dict[str, list[float]]
    corr_real: list[list[float]]
    corr_synth: list[list[float]]
    quantiles_real: list[list[float]]
    quantiles_synth: list[list[float]]
    disc_score: float | None = None
    disc_std: float | None = None
    pred_score: float | None = None
    pred_std: float | None = None
    feature_names: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "MetricReport":
        obj = dict(obj)
        obj["qq_pairs"] = [[tuple(p) for p in dim] for dim in obj["qq_pairs"]]
        return cls(**obj)

    def save(self, path: str | Path):
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n")


def evaluate(
    real: Dataset,
    synth: Dataset,
    scores: bool = True,
    runs: int = 10,
    net_cfg: NetConfig = NetConfig(),
    rng: RngSpec = RngSpec(),
    workers: int = 1,
) -> MetricReport:
    qv_r = np.atleast_2d(quadratic_variation(real).T).T
    qv_s = np.atleast_2d(quadratic_variation(synth).T).T
    inc_r, inc_s = increments(real), increments(synth)
    d = real.dim
    rep = MetricReport(
        qv_w2=[wasserstein2_1d(qv_r[:, p], qv_s[:, p]) for p in range(d)],
        qv_mean_real=qv_r.mean(axis=0).tolist(),
        qq_pairs=[qq_quantiles(inc_r[:, p], inc_s[:, p], QQ_LEVELS) for p in range(d)],
        ks={
            "increments": [ecdf_ks(inc_r[:, p], inc_s[:, p]) for p in range(d)],
            "quadratic_variation": [ecdf_ks(qv_r[:, p], qv_s[:, p]) for p in range(d)],
        },
        corr_real=correlation_matrix(real).tolist(),
        corr_synth=correlation_matrix(synth).tolist(),
        quantiles_real=quantile_table(real).tolist(),
        quantiles_synth=quantile_table(synth).tolist(),
        feature_names=list(real.feature_names),
    )
    if scores:
        disc = discriminative_scores(real, synth, runs, net_cfg, rng, workers)
        rep.disc_score, rep.disc_std = disc.mean, disc.std
        if d >= 2:
            pred = predictive_scores(real, synth, runs, net_cfg, rng, workers)
            rep.pred_score, rep.pred_std = pred.mean, pred.std
    return rep


def write_tables(real: Dataset, synth: Dataset, rep: MetricReport, out_dir: str | Path) -> list[Path]:
    """QQ, ECDF, QV, correlation and quantile-table CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = rep.feature_names or [f"x{p}" for p in range(real.dim)]
    written = []

    def emit(name: str, header: list[str], rows):
        path = out / name
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        written.append(path)

    emit("qq.csv", ["feature", "level", "real", "synthetic"],
         ([names[p], *pair] for p, dim in enumerate(rep.qq_pairs) for pair in dim))
    inc_r, inc_s = increments(real), increments(synth)
    rows = []
    for p in range(real.dim):
        grid = np.quantile(np.concatenate([inc_r[:, p], inc_s[:, p]]), np.linspace(0, 1, 201))
        rows += [[names[p], x, fr, fs] for x, fr, fs in zip(grid, ecdf(inc_r[:, p], grid), ecdf(inc_s[:, p], grid))]
    emit("ecdf.csv", ["feature", "x", "real", "synthetic"], rows)
    qv_r = np.atleast_2d(quadratic_variation(real).T).T
    qv_s = np.atleast_2d(quadratic_variation(synth).T).T
    emit("qv.csv", ["feature", "source", "series", "qv"],
         [[names[p], src, m, v] for src, qv in (("real", qv_r), ("synthetic", qv_s))
          for p in range(real.dim) for m, v in enumerate(qv[:, p])])
    emit("corr.csv", ["source", "row", *names],
         [[src, names[i], *row] for src, mat in (("real", rep.corr_real), ("synthetic", rep.corr_synth))
          for i, row in enumerate(mat)])
    emit("quantile_table.csv", ["feature", "real_5%", "synthetic_5%", "real_95%", "synthetic_95%"],
         [[names[p], rep.quantiles_real[p][0], rep.quantiles_synth[p][0], rep.quantiles_real[p][1], rep.quantiles_synth[p][1]]
          for p in range(real.dim)])
    return written
