"""Small fully-connected control policy with dropout.

The network maps (ray features, speed, command one-hot) to two raw outputs
which are squashed into control bounds: an odd sigmoid-style map (tanh)
for steering and a unit-interval map (logistic) for throttle. Dropout on
the hidden activations uses inverted scaling, so the maskless pass is
expected-value inference. Repeated masked passes provide the sample sets
consumed by the uncertainty scoring.

Training is plain mini-batch gradient descent with momentum on the joint
mean squared error of both squashed outputs; everything is deterministic
per seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import rng
from .uncertainty import BinSpec, SampleSet, discretize

COMMANDS = ("follow", "left", "right", "straight")

CHECKPOINT_VERSION = 1


class CheckpointFormatError(Exception):
    """Checkpoint file missing, truncated, or inconsistent with its header."""


class TrainingDivergedError(Exception):
    """Training loss became non-finite."""


@dataclass(frozen=True)
class Action:
    steer: float  # [-1, 1], positive = rightward
    throttle: float  # [0, 1]

    def as_array(self) -> np.ndarray:
        return np.array([self.steer, self.throttle])


@dataclass(frozen=True)
class Observation:
    """Network input: normalized ray distances, speed, and route command."""

    rays: np.ndarray  # K values in [0, 1]
    speed: float  # [0, 1]
    command: str  # one of COMMANDS

    def __post_init__(self) -> None:
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")

    def to_vector(self) -> np.ndarray:
        onehot = np.zeros(len(COMMANDS))
        onehot[COMMANDS.index(self.command)] = 1.0
        return np.concatenate([self.rays, [self.speed], onehot])


def input_width(n_rays: int) -> int:
    return n_rays + 1 + len(COMMANDS)


@dataclass
class PolicyParams:
    """Layer weights/biases plus the dropout rate and activation name."""

    arch: list[int]
    weights: list[np.ndarray]  # weights[l]: (arch[l], arch[l+1])
    biases: list[np.ndarray]
    dropout_rate: float
    activation: str = "tanh"

    @property
    def hidden_widths(self) -> list[int]:
        return self.arch[1:-1]


def init(arch: list[int], p: float, seed: int) -> PolicyParams:
    """Glorot-uniform initialization, deterministic per seed."""
    if len(arch) < 2 or any(w < 1 for w in arch):
        raise ValueError(f"bad architecture {arch}")
    if arch[-1] != 2:
        raise ValueError(f"output width must be 2 (steer, throttle), got {arch[-1]}")
    if not (0.0 <= p < 1.0):
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    g = rng.stream(seed, "policy-init")
    weights, biases = [], []
    for n_in, n_out in zip(arch[:-1], arch[1:]):
        lim = np.sqrt(6.0 / (n_in + n_out))
        weights.append(g.uniform(-lim, lim, size=(n_in, n_out)))
        biases.append(np.zeros(n_out))
    return PolicyParams(arch=list(arch), weights=weights, biases=biases, dropout_rate=p)


def _activate(z: np.ndarray, name: str) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "identity":
        return z
    raise ValueError(f"unknown activation {name!r}")


def _activate_grad(a: np.ndarray, name: str) -> np.ndarray:
    # Derivative expressed in terms of the activation output a.
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (a > 0).astype(float)
    if name == "identity":
        return np.ones_like(a)
    raise ValueError(f"unknown activation {name!r}")


def _check_masks(params: PolicyParams, masks) -> None:
    widths = params.hidden_widths
    if len(masks) != len(widths):
        raise ValueError(f"expected {len(widths)} hidden masks, got {len(masks)}")
    for m, w in zip(masks, widths):
        if m.shape[-1] != w:
            raise ValueError(f"mask width {m.shape[-1]} does not match hidden width {w}")


def forward_raw(params: PolicyParams, x: np.ndarray, masks=None) -> np.ndarray:
    """Batched pass returning the two raw (pre-squash) outputs.

    ``x`` is (B, input_width); ``masks`` is one (B, width) array per hidden
    layer with entries in {0, 1/(1-p)}, or None for expected-value inference.
    """
    x = np.atleast_2d(x)
    if x.shape[1] != params.arch[0]:
        raise ValueError(f"input width {x.shape[1]} does not match arch {params.arch}")
    if masks is not None:
        _check_masks(params, masks)
    a = x
    n_hidden = len(params.arch) - 2
    for layer in range(n_hidden):
        a = _activate(a @ params.weights[layer] + params.biases[layer], params.activation)
        if masks is not None:
            a = a * np.atleast_2d(masks[layer])
    return a @ params.weights[-1] + params.biases[-1]


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def squash(raw: np.ndarray) -> np.ndarray:
    """Map raw outputs into control bounds: tanh steer, logistic throttle."""
    raw = np.atleast_2d(raw)
    return np.column_stack([np.tanh(raw[:, 0]), _sigmoid(raw[:, 1])])


def forward(params: PolicyParams, obs: Observation, mask=None) -> Action:
    """Single-observation pass; without a mask this is deterministic inference."""
    masks = None
    if mask is not None:
        masks = [np.atleast_2d(m) for m in mask]
    out = squash(forward_raw(params, obs.to_vector()[None, :], masks))[0]
    return Action(steer=float(out[0]), throttle=float(out[1]))


def draw_masks(params: PolicyParams, g: np.random.Generator, batch: int) -> list[np.ndarray]:
    """Inverted-dropout masks for each hidden layer: 0 or 1/(1-p)."""
    p = params.dropout_rate
    if p == 0.0:
        return [np.ones((batch, w)) for w in params.hidden_widths]
    keep = 1.0 - p
    return [
        (g.random((batch, w)) < keep).astype(float) / keep for w in params.hidden_widths
    ]


@dataclass(frozen=True)
class McSample:
    """Result of repeated masked passes for one observation."""

    steer: SampleSet
    throttle: SampleSet
    action: Action  # mode centers of each signal


def mc_sample(
    params: PolicyParams,
    obs: Observation,
    n: int,
    seed: int,
    steer_bins: BinSpec,
    throttle_bins: BinSpec,
) -> McSample:
    """Draw n dropout samples of both signals and discretize them.

    All masks come from one stream derived from ``seed``, so repeat calls
    are identical and independent of evaluation order. With dropout
    disabled the samples are unanimous.
    """
    if n < 2:
        raise ValueError(f"need n >= 2 samples, got {n}")
    x = np.tile(obs.to_vector(), (n, 1))
    masks = draw_masks(params, rng.stream(seed, "mc-masks"), n)
    out = squash(forward_raw(params, x, masks))
    steer_set = discretize(out[:, 0], steer_bins)
    throttle_set = discretize(out[:, 1], throttle_bins)
    action = Action(steer=steer_set.mode_center, throttle=throttle_set.mode_center)
    return McSample(steer=steer_set, throttle=throttle_set, action=action)


def loss_and_grads(params: PolicyParams, x: np.ndarray, y: np.ndarray, masks=None):
    """Joint MSE of both squashed outputs and its parameter gradients."""
    n_hidden = len(params.arch) - 2
    a = np.atleast_2d(x)
    acts = [a]  # post-mask outputs feeding the next layer
    pre_mask = []  # activation outputs before masking, for the derivative
    for layer in range(n_hidden):
        h = _activate(a @ params.weights[layer] + params.biases[layer], params.activation)
        pre_mask.append(h)
        a = h * masks[layer] if masks is not None else h
        acts.append(a)
    raw = a @ params.weights[-1] + params.biases[-1]
    steer = np.tanh(raw[:, 0])
    throttle = _sigmoid(raw[:, 1])
    pred = np.column_stack([steer, throttle])

    diff = pred - np.atleast_2d(y)
    loss = float(np.mean(diff * diff))

    # d loss / d pred, then through the output squash.
    dpred = 2.0 * diff / diff.size
    draw = np.column_stack(
        [dpred[:, 0] * (1.0 - steer * steer), dpred[:, 1] * throttle * (1.0 - throttle)]
    )

    grads_w = [np.zeros_like(w) for w in params.weights]
    grads_b = [np.zeros_like(b) for b in params.biases]
    grads_w[-1] = acts[-1].T @ draw
    grads_b[-1] = draw.sum(axis=0)
    delta = draw @ params.weights[-1].T
    for layer in range(n_hidden - 1, -1, -1):
        if masks is not None:
            delta = delta * masks[layer]
        delta = delta * _activate_grad(pre_mask[layer], params.activation)
        grads_w[layer] = acts[layer].T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = delta @ params.weights[layer].T
    return loss, grads_w, grads_b


def evaluate_loss(params: PolicyParams, x: np.ndarray, y: np.ndarray) -> float:
    """Full-data maskless loss, used for the loss curve."""
    diff = squash(forward_raw(params, x)) - np.atleast_2d(y)
    return float(np.mean(diff * diff))


def train(
    params: PolicyParams,
    x: np.ndarray,
    y: np.ndarray,
    *,
    lr: float = 1e-3,
    epochs: int = 50,
    batch: int = 64,
    seed: int = 0,
    momentum: float = 0.9,
) -> tuple[PolicyParams, list[float]]:
    """Mini-batch gradient descent with momentum; dropout active throughout.

    Returns new parameters and the loss curve (maskless full-data loss
    before training, then after each epoch).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape[0] == 0:
        raise ValueError("training dataset is empty")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"{x.shape[0]} inputs vs {y.shape[0]} labels")
    if np.any(np.abs(y[:, 0]) > 1.0) or np.any((y[:, 1] < 0.0) | (y[:, 1] > 1.0)):
        raise ValueError("labels outside action bounds")

    g = rng.stream(seed, "train")
    weights = [w.copy() for w in params.weights]
    biases = [b.copy() for b in params.biases]
    vel_w = [np.zeros_like(w) for w in weights]
    vel_b = [np.zeros_like(b) for b in biases]
    cur = PolicyParams(
        arch=list(params.arch),
        weights=weights,
        biases=biases,
        dropout_rate=params.dropout_rate,
        activation=params.activation,
    )

    curve = [evaluate_loss(cur, x, y)]
    n = x.shape[0]
    for _ in range(epochs):
        order = g.permutation(n)
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            masks = draw_masks(cur, g, len(idx))
            loss, grads_w, grads_b = loss_and_grads(cur, x[idx], y[idx], masks)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss {loss}")
            for l in range(len(weights)):
                vel_w[l] = momentum * vel_w[l] - lr * grads_w[l]
                vel_b[l] = momentum * vel_b[l] - lr * grads_b[l]
                weights[l] += vel_w[l]
                biases[l] += vel_b[l]
        epoch_loss = evaluate_loss(cur, x, y)
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(f"non-finite loss {epoch_loss}")
        curve.append(epoch_loss)
    return cur, curve


def save(params: PolicyParams, path) -> None:
    """Write a versioned textual checkpoint; floats round-trip exactly."""
    doc = {
        "version": CHECKPOINT_VERSION,
        "arch": params.arch,
        "dropout_rate": params.dropout_rate,
        "activation": params.activation,
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }
    with open(path, "w") as f:
        json.dump(doc, f)
        f.write("\n")


def load(path) -> PolicyParams:
    try:
        with open(path) as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(f"unreadable checkpoint {path}: {e}") from e
    try:
        if doc["version"] != CHECKPOINT_VERSION:
            raise CheckpointFormatError(f"unsupported checkpoint version {doc['version']}")
        arch = [int(w) for w in doc["arch"]]
        weights = [np.asarray(w, dtype=float) for w in doc["weights"]]
        biases = [np.asarray(b, dtype=float) for b in doc["biases"]]
        p = float(doc["dropout_rate"])
        activation = str(doc["activation"])
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointFormatError(f"malformed checkpoint {path}: {e}") from e
    if len(weights) != len(arch) - 1 or len(biases) != len(arch) - 1:
        raise CheckpointFormatError("tensor count does not match arch header")
    for l, (n_in, n_out) in enumerate(zip(arch[:-1], arch[1:])):
        if weights[l].shape != (n_in, n_out) or biases[l].shape != (n_out,):
            raise CheckpointFormatError(
                f"layer {l} tensors {weights[l].shape}/{biases[l].shape} "
                f"do not match arch header {arch}"
            )
    if not all(np.all(np.isfinite(w)) for w in weights + biases):
        raise CheckpointFormatError("non-finite parameters in checkpoint")
    return PolicyParams(
        arch=arch, weights=weights, biases=biases, dropout_rate=p, activation=activation
    )
