"""Reference trainable embedder: one hidden layer plus a linear classification head.

    x (D_in) -> W1, b1 -> act -> feature (D_feat) -> W2, b2 -> logits (C)

The feature vector is what goes into the Samples Memory; the logits are
trained with cross-entropy against the pseudo-labels. Optimisation is plain
SGD with momentum (``v <- mu*v + g;  w <- w - lr*v``) and optional L2 weight
decay on the weight matrices.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from . import io as _io

CHECKPOINT_MAGIC = "odct-embedder"
CHECKPOINT_VERSION = 1
PARAMS = ("W1", "b1", "W2", "b2")
_ACTIVATIONS = ("tanh", "relu", "identity")


def _act(z, kind):
    if kind == "tanh":
        return np.tanh(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(z, a, kind):
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "relu":
        return (z > 0).astype(z.dtype)
    return np.ones_like(z)


def log_softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


@dataclass
class EmbedderState:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    lr: float = 0.05
    momentum: float = 0.5
    weight_decay: float = 0.0
    dropout: float = 0.0
    activation: str = "tanh"
    velocity: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        for name in PARAMS:
            setattr(self, name, np.array(getattr(self, name), dtype=np.float64))
            self.velocity.setdefault(name, np.zeros_like(getattr(self, name)))

    @property
    def d_in(self) -> int:
        return self.W1.shape[0]

    @property
    def d_feat(self) -> int:
        return self.W1.shape[1]

    @property
    def n_classes(self) -> int:
        return self.W2.shape[1]

    def params(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAMS}

    def copy(self) -> "EmbedderState":
        return EmbedderState(
            *(p.copy() for p in self.params().values()),
            lr=self.lr,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            dropout=self.dropout,
            activation=self.activation,
            velocity={k: v.copy() for k, v in self.velocity.items()},
        )

    def save(self, path) -> None:
        meta = {
            "lr": self.lr,
            "momentum": self.momentum,
            "weight_decay": self.weight_decay,
            "dropout": self.dropout,
            "activation": self.activation,
        }
        arrays = dict(self.params())
        arrays.update({f"v_{k}": v for k, v in self.velocity.items()})
        _io.save_arrays(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, meta, arrays)

    @classmethod
    def load(cls, path) -> "EmbedderState":
        meta, a = _io.load_arrays(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
        return cls(
            a["W1"], a["b1"], a["W2"], a["b2"],
            velocity={k: a[f"v_{k}"] for k in PARAMS},
            **meta,
        )


def init_embedder(d_in, d_feat, n_classes, seed=0, init_scale=1.0, **hyper) -> EmbedderState:
    """Random Glorot-uniform weights (times ``init_scale``), zero biases."""
    rng = np.random.default_rng(seed)

    def glorot(fan_in, fan_out):
        lim = init_scale * np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=(fan_in, fan_out))

    return EmbedderState(
        glorot(d_in, d_feat), np.zeros(d_feat), glorot(d_feat, n_classes), np.zeros(n_classes), **hyper
    )


def _check_input(state, X):
    X = np.asarray(X, dtype=np.float64)
    squeeze = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != state.d_in:
        raise ValueError(f"input dimension {X.shape[1]} does not match embedder D_in={state.d_in}")
    return X, squeeze


def forward(state: EmbedderState, X) -> Tuple[np.ndarray, np.ndarray]:
    """Eval-mode forward pass: ``(features, logits)``. Accepts one vector or a batch."""
    X, squeeze = _check_input(state, X)
    h = _act(X @ state.W1 + state.b1, state.activation)
    logits = h @ state.W2 + state.b2
    if squeeze:
        return h[0], logits[0]
    return h, logits


def loss_and_grads(state: EmbedderState, X, y, rng: Optional[np.random.Generator] = None):
    """Mean cross-entropy and its gradients w.r.t. every parameter.

    Dropout on the features is applied (inverted scaling) only when ``rng`` is
    given and ``state.dropout > 0``.
    """
    X, _ = _check_input(state, X)
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (X.shape[0],):
        raise ValueError("need one label per input row")
    if y.size == 0:
        raise ValueError("empty batch")
    if y.min() < 0 or y.max() >= state.n_classes:
        raise ValueError(f"labels must lie in [0, {state.n_classes})")
    n = X.shape[0]
    z1 = X @ state.W1 + state.b1
    h = _act(z1, state.activation)
    mask = None
    if rng is not None and state.dropout > 0:
        keep = 1.0 - state.dropout
        mask = (rng.random(h.shape) < keep) / keep
        h_used = h * mask
    else:
        h_used = h
    logits = h_used @ state.W2 + state.b2
    logp = log_softmax(logits)
    loss = -logp[np.arange(n), y].mean()

    dlogits = np.exp(logp)
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    grads = {
        "W2": h_used.T @ dlogits,
        "b2": dlogits.sum(axis=0),
    }
    dh = dlogits @ state.W2.T
    if mask is not None:
        dh = dh * mask
    dz1 = dh * _act_grad(z1, h, state.activation)
    grads["W1"] = X.T @ dz1
    grads["b1"] = dz1.sum(axis=0)
    if state.weight_decay:
        loss = loss + 0.5 * state.weight_decay * ((state.W1**2).sum() + (state.W2**2).sum())
        grads["W1"] = grads["W1"] + state.weight_decay * state.W1
        grads["W2"] = grads["W2"] + state.weight_decay * state.W2
    return float(loss), grads


def backward_step(state: EmbedderState, X, y, rng=None) -> Tuple[EmbedderState, float]:
    """One SGD-with-momentum step in place; returns the state and the pre-update loss."""
    loss, grads = loss_and_grads(state, X, y, rng)
    for name in PARAMS:
        v = state.velocity[name]
        v *= state.momentum
        v += grads[name]
        getattr(state, name)[...] -= state.lr * v
    return state, loss


def gradient_check(state: EmbedderState, X, y, h: float = 1e-4, floor: float = 1e-7) -> float:
    """Max relative error between analytic and central-difference gradients.

    Each parameter is perturbed by ``h * max(1, |w|)``. The relative error of
    one entry is ``|a - n| / max(|a|, |n|, floor)``. Dropout is not applied.
    """
    _, grads = loss_and_grads(state, X, y)
    probe = state.copy()
    worst = 0.0
    for name in PARAMS:
        w = getattr(probe, name)
        for j in np.ndindex(w.shape):
            orig = w[j]
            step = h * max(1.0, abs(orig))
            w[j] = orig + step
            up, _ = loss_and_grads(probe, X, y)
            w[j] = orig - step
            down, _ = loss_and_grads(probe, X, y)
            w[j] = orig
            num = (up - down) / (2 * step)
            ana = grads[name][j]
            worst = max(worst, abs(ana - num) / max(abs(ana), abs(num), floor))
    return worst
