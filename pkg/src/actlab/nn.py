"""Small MLP regression lab: pluggable activation, MSE loss, reverse-mode
training with Adam or plain SGD.

The network is input -> [linear -> activation] x hidden_layers -> linear,
with a linear output head.  Defaults (3 hidden layers of width 64, lr 1e-3,
batch 128, 50 steps, MSE) are the lab's standard protocol and deliberately
never change implicitly.

Activations plug in through a two-method adapter: ``forward(z)`` and
``backward(z, upstream)`` returning the vector-Jacobian product.  This is
what lets batch-statistics activations backpropagate exactly through their
whole-tensor reductions, while natively-coded pointwise functions can fall
back to central finite differences.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import exprlang
from .exprlang import Expr, NonFiniteOutput
from .tensor import SeededRng, tensor2

__all__ = [
    "MlpConfig",
    "MlpParams",
    "TrainReport",
    "ExprActivation",
    "FiniteDifferenceActivation",
    "as_activation",
    "init_params",
    "forward_mlp",
    "loss_and_grads",
    "train",
    "evaluate",
    "collect_preactivations",
]


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    hidden_layers: int = 3
    width: int = 64
    output_dim: int = 1
    learning_rate: float = 1e-3
    batch_size: int = 128
    train_steps: int = 50
    optimizer: str = "adam"  # "adam" | "sgd"
    init: str = "he"

    def __post_init__(self):
        if min(self.input_dim, self.hidden_layers, self.width, self.output_dim) < 1:
            raise ValueError("all dimensions must be positive")
        if self.batch_size < 1 or self.train_steps < 0:
            raise ValueError("bad batch_size/train_steps")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class TrainReport:
    losses: list[float]
    final_train_mse: float
    steps: int
    wall_time: float
    diverged_at: int | None = None

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None


class ExprActivation:
    """Exact-AD adapter around a DSL expression.

    Forward passes stash their value tapes (keyed by the identity of the
    pre-activation array, which the trainer keeps alive) so the matching
    backward call skips re-evaluating the tree.  Purely a cache: results
    are identical when the tape is missing.
    """

    _MAX_TAPES = 8

    def __init__(self, expr: Expr):
        self.expr = expr
        self._tapes: dict[int, tuple[np.ndarray, dict]] = {}

    def forward(self, z: np.ndarray) -> np.ndarray:
        out, tape = exprlang.forward_tape(self.expr, z)
        if len(self._tapes) >= self._MAX_TAPES:
            self._tapes.clear()
        self._tapes[id(z)] = (z, tape)
        return out

    def backward(self, z: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        stored = self._tapes.pop(id(z), None)
        if stored is not None and stored[0] is z:
            return exprlang.backward_tape(self.expr, z, stored[1], upstream)
        return exprlang.forward_backward(self.expr, z, upstream)[1]


class FiniteDifferenceActivation:
    """Central-difference adapter for natively coded pointwise functions."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], h: float = 1e-5):
        self.fn = fn
        self.h = h

    def forward(self, z: np.ndarray) -> np.ndarray:
        return self.fn(z)

    def backward(self, z: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        d = (self.fn(z + self.h) - self.fn(z - self.h)) / (2.0 * self.h)
        return upstream * d


def as_activation(activation):
    """Accept an Expr or any object with forward/backward methods."""
    if isinstance(activation, Expr):
        return ExprActivation(activation)
    if hasattr(activation, "forward") and hasattr(activation, "backward"):
        return activation
    raise TypeError(f"not an activation: {activation!r}")


def _layer_dims(cfg: MlpConfig) -> list[tuple[int, int]]:
    dims = [cfg.input_dim] + [cfg.width] * cfg.hidden_layers + [cfg.output_dim]
    return list(zip(dims[:-1], dims[1:]))


def init_params(cfg: MlpConfig, rng: SeededRng) -> MlpParams:
    """He-normal weights (sd = sqrt(2/fan_in)), zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in _layer_dims(cfg):
        sd = math.sqrt(2.0 / fan_in)
        weights.append(rng.normal(fan_in, fan_out, 0.0, sd))
        biases.append(np.zeros((1, fan_out)))
    return MlpParams(weights, biases)


def forward_mlp(params: MlpParams, activation, x) -> tuple[np.ndarray, dict]:
    """Predict; cache holds layer inputs and hidden pre-activations."""
    act = as_activation(activation)
    x = tensor2(x)
    n_layers = len(params.weights)
    inputs = [x]
    pre = []
    h = x
    for l in range(n_layers - 1):
        z = h @ params.weights[l] + params.biases[l]
        pre.append(z)
        h = act.forward(z)
        inputs.append(h)
    prediction = h @ params.weights[-1] + params.biases[-1]
    return prediction, {"inputs": inputs, "pre": pre}


def loss_and_grads(
    params: MlpParams, activation, x: np.ndarray, y: np.ndarray
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """MSE loss plus exact gradients for every weight and bias."""
    act = as_activation(activation)
    prediction, cache = forward_mlp(params, act, x)
    resid = prediction - y
    loss = float(np.mean(resid**2))

    grad_w = [np.empty(0)] * len(params.weights)
    grad_b = [np.empty(0)] * len(params.biases)

    delta = 2.0 * resid / resid.size  # d loss / d prediction
    grad_w[-1] = cache["inputs"][-1].T @ delta
    grad_b[-1] = delta.sum(axis=0, keepdims=True)
    upstream = delta @ params.weights[-1].T

    for l in range(len(params.weights) - 2, -1, -1):
        dz = act.backward(cache["pre"][l], upstream)
        grad_w[l] = cache["inputs"][l].T @ dz
        grad_b[l] = dz.sum(axis=0, keepdims=True)
        if l > 0:
            upstream = dz @ params.weights[l].T
    return loss, grad_w, grad_b


@dataclass
class _AdamState:
    m_w: list[np.ndarray]
    v_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_b: list[np.ndarray]
    t: int = 0

    beta1: float = field(default=0.9, repr=False)
    beta2: float = field(default=0.999, repr=False)
    eps: float = field(default=1e-8, repr=False)

    @classmethod
    def like(cls, params: MlpParams) -> "_AdamState":
        return cls(
            m_w=[np.zeros_like(w) for w in params.weights],
            v_w=[np.zeros_like(w) for w in params.weights],
            m_b=[np.zeros_like(b) for b in params.biases],
            v_b=[np.zeros_like(b) for b in params.biases],
        )

    def update(self, params: MlpParams, grad_w, grad_b, lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for group, grads, m, v in (
            (params.weights, grad_w, self.m_w, self.v_w),
            (params.biases, grad_b, self.m_b, self.v_b),
        ):
            for i, g in enumerate(grads):
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g
                group[i] = group[i] - lr * (m[i] / c1) / (np.sqrt(v[i] / c2) + self.eps)


def train(cfg: MlpConfig, activation, data, rng: SeededRng) -> tuple[MlpParams, TrainReport]:
    """Run exactly ``cfg.train_steps`` optimizer steps of minibatch MSE.

    Minibatches are sampled with replacement from the training split,
    fresh each step.  A non-finite loss or activation output marks the run
    diverged at that step and stops early; the caller decides scoring.
    Deterministic given (cfg, activation, data, rng seed).
    """
    act = as_activation(activation)
    train_x, train_y = data.train_x, data.train_y
    if train_x.shape[0] < cfg.batch_size:
        raise ValueError(
            f"need at least batch_size={cfg.batch_size} training rows, "
            f"got {train_x.shape[0]}"
        )
    params = init_params(cfg, rng.substream("init"))
    adam = _AdamState.like(params) if cfg.optimizer == "adam" else None
    batch_gen = rng.substream("batches").generator

    losses: list[float] = []
    diverged_at = None
    t0 = time.perf_counter()
    for step in range(cfg.train_steps):
        idx = batch_gen.integers(0, train_x.shape[0], size=cfg.batch_size)
        xb, yb = train_x[idx], train_y[idx]
        try:
            loss, grad_w, grad_b = loss_and_grads(params, act, xb, yb)
        except NonFiniteOutput:
            diverged_at = step
            break
        if not math.isfinite(loss):
            diverged_at = step
            break
        losses.append(loss)
        if adam is not None:
            adam.update(params, grad_w, grad_b, cfg.learning_rate)
        else:
            for i, g in enumerate(grad_w):
                params.weights[i] = params.weights[i] - cfg.learning_rate * g
            for i, g in enumerate(grad_b):
                params.biases[i] = params.biases[i] - cfg.learning_rate * g
    wall = time.perf_counter() - t0
    final = losses[-1] if losses else math.inf
    report = TrainReport(
        losses=losses,
        final_train_mse=final,
        steps=len(losses),
        wall_time=wall,
        diverged_at=diverged_at,
    )
    return params, report


def evaluate(params: MlpParams, activation, x: np.ndarray, y: np.ndarray) -> float:
    """Mean squared error over a split; +inf when evaluation blows up."""
    if x.shape[0] == 0:
        raise ValueError("empty split")
    try:
        prediction, _ = forward_mlp(params, activation, x)
    except NonFiniteOutput:
        return math.inf
    if not np.isfinite(prediction).all():
        return math.inf
    return float(np.mean((prediction - y) ** 2))


def collect_preactivations(params: MlpParams, activation, x) -> np.ndarray:
    """Concatenated hidden-layer pre-activation values (for histograms)."""
    _, cache = forward_mlp(params, activation, x)
    return np.concatenate([z.ravel() for z in cache["pre"]])
