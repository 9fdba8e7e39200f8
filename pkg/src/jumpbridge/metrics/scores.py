"""Post-hoc recurrent-network scores.

Discriminative: a two-layer GRU classifies real vs synthetic sequences;
the score is ``|accuracy - 0.5|`` on a held-out split. Predictive: a
one-layer GRU trained on synthetic data predicts the last feature one step
ahead from the other features; the score is its mean absolute error on the
real data. Both are averaged over run-indexed seeds.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..core import Dataset, RngSpec
from ..errors import SizeError, UnsupportedOperationError
from .gru import GruNet


@dataclass(frozen=True)
class NetConfig:
    epochs: int = 50
    batch_size: int = 128
    lr: float = 1e-3
    train_frac: float = 0.8
    hidden: int | None = None

    def hidden_for(self, d: int) -> int:
        return self.hidden if self.hidden is not None else max(d // 2, 1)


@dataclass(frozen=True)
class ScoreSummary:
    mean: float
    std: float
    runs: tuple[float, ...]


def _values(x) -> np.ndarray:
    v = x.values if isinstance(x, Dataset) else np.asarray(x, dtype=float)
    return v[:, :, None] if v.ndim == 2 else v


class MinMax:
    """Per-feature affine map of the fitted range onto [0, 1]."""

    def __init__(self, fit_on: np.ndarray):
        flat = fit_on.reshape(-1, fit_on.shape[-1])
        self.lo = flat.min(axis=0)
        span = flat.max(axis=0) - self.lo
        self.span = np.where(span > 0, span, 1.0)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return (x - self.lo) / self.span


def score_from_accuracy(acc: float) -> float:
    return abs(acc - 0.5)


def _fit(net: GruNet, X: np.ndarray, y: np.ndarray, cfg: NetConfig, rng: np.random.Generator) -> GruNet:
    n = X.shape[0]
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for s in range(0, n, cfg.batch_size):
            idx = order[s : s + cfg.batch_size]
            _, grads = net.loss_and_grads(X[idx], y[idx])
            net.adam_step(grads, lr=cfg.lr)
    return net


def _split(n: int, frac: float, rng: np.random.Generator):
    order = rng.permutation(n)
    cut = int(round(frac * n))
    cut = min(max(cut, 1), n - 1)
    return order[:cut], order[cut:]


def discriminator_data(real, synth, rng: np.random.Generator):
    """Equal-count, min-max scaled sequences (dates t_1..t_N) with labels
    1 = real, 0 = synthetic, randomly split into train and test parts."""
    r, s = _values(real)[:, 1:, :], _values(synth)[:, 1:, :]
    k = min(r.shape[0], s.shape[0])
    if k < 2:
        raise SizeError("need at least 2 series per class for the discriminator")
    r = r[rng.choice(r.shape[0], k, replace=False)] if r.shape[0] > k else r
    s = s[rng.choice(s.shape[0], k, replace=False)] if s.shape[0] > k else s
    scale = MinMax(r)
    X = np.concatenate([scale(r), scale(s)])
    y = np.concatenate([np.ones(k), np.zeros(k)])
    return X, y


def train_discriminator(real, synth, net_cfg: NetConfig, rng: np.random.Generator):
    """Returns the trained net and the held-out (X, y)."""
    X, y = discriminator_data(real, synth, rng)
    tr, te = _split(X.shape[0], net_cfg.train_frac, rng)
    net = GruNet.init(X.shape[2], net_cfg.hidden_for(X.shape[2]), 2, False, rng)
    _fit(net, X[tr], y[tr], net_cfg, rng)
    return net, (X[te], y[te])


def discriminative_score(net: GruNet, X: np.ndarray, y: np.ndarray) -> float:
    acc = float(np.mean((net.predict_proba(X) > 0.5) == (y > 0.5)))
    return score_from_accuracy(acc)


def predictor_data(values: np.ndarray, scale: MinMax):
    v = scale(values)
    d = v.shape[2]
    return v[:, 1:-1, : d - 1], v[:, 2:, d - 1]


def train_predictor(synth, net_cfg: NetConfig, rng: np.random.Generator, scale: MinMax | None = None) -> GruNet:
    s = _values(synth)
    d = s.shape[2]
    if d < 2:
        raise UnsupportedOperationError("the predictive score needs at least two features")
    X, y = predictor_data(s, scale or MinMax(s))
    net = GruNet.init(d - 1, net_cfg.hidden_for(d), 1, True, rng)
    return _fit(net, X, y, net_cfg, rng)


def predictive_score(net: GruNet, real, scale: MinMax | None = None) -> float:
    r = _values(real)
    X, y = predictor_data(r, scale or MinMax(r))
    return float(np.mean(np.abs(net.forward(X) - y)))


def _summary(runs: list[float]) -> ScoreSummary:
    arr = np.asarray(runs)
    return ScoreSummary(float(arr.mean()), float(arr.std()), tuple(arr.tolist()))


def _runs(fn, runs: int, workers: int) -> list[float]:
    if workers <= 1:
        return [fn(k) for k in range(runs)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(runs)))


def discriminative_scores(
    real, synth, runs: int = 10, net_cfg: NetConfig = NetConfig(), rng: RngSpec = RngSpec(), workers: int = 1
) -> ScoreSummary:
    def one(k: int) -> float:
        g = rng.generator("disc", k)
        net, (X, y) = train_discriminator(real, synth, net_cfg, g)
        return discriminative_score(net, X, y)

    return _summary(_runs(one, runs, workers))


def predictive_scores(
    real, synth, runs: int = 10, net_cfg: NetConfig = NetConfig(), rng: RngSpec = RngSpec(), workers: int = 1
) -> ScoreSummary:
    """Train on synthetic, test on real; both scaled by the real data's range."""
    scale = MinMax(_values(real))

    def one(k: int) -> float:
        net = train_predictor(synth, net_cfg, rng.generator("pred", k), scale)
        return predictive_score(net, real, scale)

    return _summary(_runs(one, runs, workers))
