"""A small GRU network in numpy with backpropagation through time and Adam.

Shapes: inputs are (batch, steps, features); hidden states (batch, H).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GATES = ("z", "r", "n")


def sigmoid(a: np.ndarray) -> np.ndarray:
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass
class GruLayer:
    """Weights ``W*`` (in, H), ``U*`` (H, H) and biases ``b*`` (H,) for the
    update (z), reset (r) and candidate (n) gates."""

    W: dict
    U: dict
    b: dict

    @classmethod
    def init(cls, n_in: int, hidden: int, rng: np.random.Generator) -> "GruLayer":
        s = 1.0 / np.sqrt(hidden)
        return cls(
            {g: rng.uniform(-s, s, (n_in, hidden)) for g in GATES},
            {g: rng.uniform(-s, s, (hidden, hidden)) for g in GATES},
            {g: rng.uniform(-s, s, hidden) for g in GATES},
        )

    @classmethod
    def zeros(cls, n_in: int, hidden: int) -> "GruLayer":
        return cls(
            {g: np.zeros((n_in, hidden)) for g in GATES},
            {g: np.zeros((hidden, hidden)) for g in GATES},
            {g: np.zeros(hidden) for g in GATES},
        )

    @property
    def hidden(self) -> int:
        return self.b["z"].size

    def tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for g in GATES:
            out[f"W{g}"], out[f"U{g}"], out[f"b{g}"] = self.W[g], self.U[g], self.b[g]
        return out


def gru_cell(x: np.ndarray, h: np.ndarray, layer: GruLayer, cache: list | None = None) -> np.ndarray:
    """One step: ``h' = (1 - z) * n + z * h``."""
    z = sigmoid(x @ layer.W["z"] + h @ layer.U["z"] + layer.b["z"])
    r = sigmoid(x @ layer.W["r"] + h @ layer.U["r"] + layer.b["r"])
    rh = r * h
    n = np.tanh(x @ layer.W["n"] + rh @ layer.U["n"] + layer.b["n"])
    h_new = (1.0 - z) * n + z * h
    if cache is not None:
        cache.append((x, h, z, r, rh, n))
    return h_new


def gru_cell_backward(dh_new: np.ndarray, layer: GruLayer, step_cache, grads: dict) -> tuple[np.ndarray, np.ndarray]:
    """Accumulate parameter gradients into ``grads``; return (dx, dh)."""
    x, h, z, r, rh, n = step_cache
    dz = dh_new * (h - n)
    dn = dh_new * (1.0 - z)
    dh = dh_new * z
    dan = dn * (1.0 - n * n)
    grads["Wn"] += x.T @ dan
    grads["Un"] += rh.T @ dan
    grads["bn"] += dan.sum(axis=0)
    drh = dan @ layer.U["n"].T
    dr = drh * h
    dh += drh * r
    dx = dan @ layer.W["n"].T
    daz = dz * z * (1.0 - z)
    dar = dr * r * (1.0 - r)
    for g, da in (("z", daz), ("r", dar)):
        grads[f"W{g}"] += x.T @ da
        grads[f"U{g}"] += h.T @ da
        grads[f"b{g}"] += da.sum(axis=0)
        dh += da @ layer.U[g].T
        dx += da @ layer.W[g].T
    return dx, dh


@dataclass
class GruNet:
    """Stacked GRU layers with an affine head.

    ``per_step`` heads map every hidden state to an output (regression);
    otherwise only the last state is read and passed through a sigmoid.
    """

    layers: list[GruLayer]
    head_W: np.ndarray
    head_b: np.ndarray
    per_step: bool = False
    step_count: int = 0
    moments: dict = field(default_factory=dict)

    @classmethod
    def init(cls, n_in: int, hidden: int, n_layers: int, per_step: bool, rng: np.random.Generator) -> "GruNet":
        layers = [GruLayer.init(n_in if i == 0 else hidden, hidden, rng) for i in range(n_layers)]
        s = 1.0 / np.sqrt(hidden)
        return cls(layers, rng.uniform(-s, s, (hidden, 1)), rng.uniform(-s, s, 1), per_step)

    def parameters(self) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            for k, v in layer.tensors().items():
                out[f"{i}.{k}"] = v
        out["head.W"] = self.head_W
        out["head.b"] = self.head_b
        return out

    @property
    def n_params(self) -> int:
        return sum(v.size for v in self.parameters().values())

    def forward(self, X: np.ndarray, caches: list | None = None) -> np.ndarray:
        """Logits (batch,) or per-step outputs (batch, steps)."""
        seq = X
        for li, layer in enumerate(self.layers):
            h = np.zeros((X.shape[0], layer.hidden))
            states = []
            lc = [] if caches is not None else None
            for t in range(seq.shape[1]):
                h = gru_cell(seq[:, t, :], h, layer, lc)
                states.append(h)
            seq = np.stack(states, axis=1)
            if caches is not None:
                caches.append(lc)
        if self.per_step:
            return (seq @ self.head_W)[..., 0] + self.head_b[0]
        return (seq[:, -1, :] @ self.head_W)[:, 0] + self.head_b[0]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(self.forward(X))

    def loss_and_grads(self, X: np.ndarray, y: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
        """Mean binary cross-entropy on logits, or mean absolute error for
        per-step heads."""
        caches: list = []
        out = self.forward(X, caches)
        b = X.shape[0]
        if self.per_step:
            diff = out - y
            loss = float(np.mean(np.abs(diff)))
            dout = np.sign(diff) / diff.size
        else:
            p = sigmoid(out)
            eps = 1e-12
            loss = float(-np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps)))
            dout = (p - y) / b
        grads = {k: np.zeros_like(v) for k, v in self.parameters().items()}
        hs = np.stack([_h_after(c) for c in caches[-1]], axis=1)
        if self.per_step:
            grads["head.W"] += np.einsum("bth,bt->h", hs, dout)[:, None]
            grads["head.b"] += dout.sum()
            dseq = dout[..., None] * self.head_W[:, 0]
        else:
            grads["head.W"] += (hs[:, -1, :].T @ dout[:, None])
            grads["head.b"] += dout.sum()
            dseq = np.zeros(hs.shape)
            dseq[:, -1, :] = dout[:, None] * self.head_W[:, 0]
        for li in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[li]
            lg = {k.split(".", 1)[1]: v for k, v in grads.items() if k.startswith(f"{li}.")}
            dh = np.zeros((b, layer.hidden))
            dx_seq = []
            for t in range(len(caches[li]) - 1, -1, -1):
                dx, dh = gru_cell_backward(dseq[:, t, :] + dh, layer, caches[li][t], lg)
                dx_seq.append(dx)
            dseq = np.stack(dx_seq[::-1], axis=1)
        return loss, grads

    def reset_optimizer(self):
        """Forget Adam moments, e.g. before continuing at a smaller step size."""
        self.step_count = 0
        self.moments = {}

    def adam_step(self, grads: dict[str, np.ndarray], lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.step_count += 1
        params = self.parameters()
        for k, g in grads.items():
            m, v = self.moments.get(k, (np.zeros_like(g), np.zeros_like(g)))
            m = beta1 * m + (1 - beta1) * g
            v = beta2 * v + (1 - beta2) * g * g
            self.moments[k] = (m, v)
            mhat = m / (1 - beta1**self.step_count)
            vhat = v / (1 - beta2**self.step_count)
            params[k] -= lr * mhat / (np.sqrt(vhat) + eps)


def _h_after(step_cache) -> np.ndarray:
    x, h, z, r, rh, n = step_cache
    return (1.0 - z) * n + z * h
