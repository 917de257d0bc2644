"""Dense feed-forward ReLU networks: forward with recording, backprop, momentum SGD, persistence."""

from __future__ import annotations

import copy
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "identity")
FORMAT_VERSION = "1.0"
INIT_SCHEME = "uniform_fan_in"


class ModelFormatError(ValueError):
    """Raised when a model file cannot be parsed; ``location`` names the offending field."""

    def __init__(self, location: str, message: str):
        self.location = location
        super().__init__(f"{location}: {message}")


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class Layer:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray  # (out,)
    activation: str = "relu"

    @property
    def width(self) -> int:
        return self.weights.shape[0]


@dataclass
class Network:
    layers: list[Layer]
    input_dim: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    @property
    def widths(self) -> list[int]:
        return [self.input_dim] + [layer.width for layer in self.layers]

    @property
    def n_hidden(self) -> int:
        return len(self.layers) - 1

    def validate(self) -> None:
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if not self.layers:
            raise ValueError("network needs at least one layer")
        fan_in = self.input_dim
        for i, layer in enumerate(self.layers):
            w, b = layer.weights, layer.biases
            if w.ndim != 2 or w.shape[1] != fan_in:
                raise ValueError(f"layer {i}: weights {w.shape} do not accept input width {fan_in}")
            if b.shape != (w.shape[0],):
                raise ValueError(f"layer {i}: biases {b.shape} do not match width {w.shape[0]}")
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"layer {i}: unknown activation {layer.activation!r}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i}: non-finite parameters")
            fan_in = w.shape[0]
        if self.layers[-1].activation != "identity":
            raise ValueError("final layer must be identity (logits)")

    def copy(self) -> "Network":
        return Network(
            [Layer(l.weights.copy(), l.biases.copy(), l.activation) for l in self.layers],
            self.input_dim,
            copy.deepcopy(self.meta),
        )

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend((layer.weights, layer.biases))
        return out

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


@dataclass
class ActivationTrace:
    """Per-layer preactivations and activations recorded by :func:`forward`.

    ``pre[l]`` / ``post[l]`` belong to ``net.layers[l]``; the last entry holds the logits.
    """

    inputs: np.ndarray
    pre: list[np.ndarray]
    post: list[np.ndarray]

    @property
    def logits(self) -> np.ndarray:
        return self.post[-1]

    def layer_input(self, l: int) -> np.ndarray:
        return self.inputs if l == 0 else self.post[l - 1]


@dataclass(frozen=True)
class SilenceMask:
    """Neurons whose activation is clamped to zero, keyed by layer index."""

    neurons: dict[int, frozenset[int]] = field(default_factory=dict)

    @classmethod
    def from_lists(cls, spec: dict[int, Iterable[int]]) -> "SilenceMask":
        return cls({int(l): frozenset(int(i) for i in idx) for l, idx in spec.items() if len(idx)})

    def is_empty(self) -> bool:
        return not any(self.neurons.values())

    def merge(self, other: "SilenceMask") -> "SilenceMask":
        keys = set(self.neurons) | set(other.neurons)
        return SilenceMask(
            {k: self.neurons.get(k, frozenset()) | other.neurons.get(k, frozenset()) for k in keys}
        )

    def validate(self, net: Network) -> None:
        for l, idx in self.neurons.items():
            if not 0 <= l < len(net.layers):
                raise IndexError(f"mask layer {l} out of range for {len(net.layers)} layers")
            width = net.layers[l].width
            bad = [i for i in idx if not 0 <= i < width]
            if bad:
                raise IndexError(f"mask layer {l}: neuron indices {sorted(bad)} outside width {width}")


@dataclass
class TrainSchedule:
    phases: list[tuple[float, int]]  # (learning_rate, epochs)
    momentum: float = 0.9
    batch_size: int = 500
    shuffle_seed: int = 0

    def __post_init__(self):
        self.phases = [(float(lr), int(n)) for lr, n in self.phases]
        if not self.phases:
            raise ValueError("schedule needs at least one phase")
        for lr, n in self.phases:
            if lr < 0 or not math.isfinite(lr):
                raise ValueError(f"learning rate must be non-negative, got {lr}")
            if n < 0:
                raise ValueError(f"epoch count must be non-negative, got {n}")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")

    @property
    def total_epochs(self) -> int:
        return sum(n for _, n in self.phases)

    def learning_rates(self) -> list[float]:
        return [lr for lr, n in self.phases for _ in range(n)]


@dataclass
class EpochRecord:
    epoch: int
    learning_rate: float
    loss: float
    accuracy: float


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.epochs[-1].loss if self.epochs else float("nan")

    def to_dict(self) -> dict:
        return {"epochs": [vars(e) for e in self.epochs]}


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def init_layer(fan_in: int, fan_out: int, rng: np.random.Generator, activation: str) -> Layer:
    bound = 1.0 / math.sqrt(fan_in)
    w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
    return Layer(w, np.zeros(fan_out), activation)


def init_network(widths: Sequence[int], seed: int) -> Network:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases, ReLU hidden layers, identity output."""
    widths = [int(w) for w in widths]
    if len(widths) < 2:
        raise ValueError("need at least input and output widths")
    if any(w < 1 for w in widths):
        raise ValueError(f"widths must be positive, got {widths}")
    rng = np.random.default_rng(seed)
    layers = []
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        act = "identity" if i == len(widths) - 2 else "relu"
        layers.append(init_layer(a, b, rng, act))
    return Network(layers, widths[0], {"seed": seed, "init": INIT_SCHEME})


def redraw_layer(net: Network, l: int, seed: int) -> Network:
    """Copy of ``net`` with layer ``l`` re-initialised from the default scheme."""
    if not 0 <= l < len(net.layers):
        raise IndexError(f"layer {l} out of range")
    out = net.copy()
    old = out.layers[l]
    out.layers[l] = init_layer(old.weights.shape[1], old.width, np.random.default_rng(seed), old.activation)
    return out


def forward(net: Network, batch: np.ndarray, mask: SilenceMask | None = None) -> ActivationTrace:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ValueError(f"batch shape {x.shape} does not match input_dim {net.input_dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("batch contains non-finite values")
    if mask is not None:
        mask.validate(net)
    pre, post = [], []
    h = x
    for l, layer in enumerate(net.layers):
        z = h @ layer.weights.T + layer.biases
        a = _relu(z) if layer.activation == "relu" else z
        if mask is not None and mask.neurons.get(l):
            a = a.copy() if a is z else a
            a[:, sorted(mask.neurons[l])] = 0.0
        pre.append(z)
        post.append(a)
        h = a
    return ActivationTrace(x, pre, post)


def predict(net: Network, batch: np.ndarray, mask: SilenceMask | None = None, chunk: int = 100_000) -> np.ndarray:
    """Argmax class predictions, evaluated in fixed-size chunks."""
    batch = np.asarray(batch, dtype=np.float64)
    out = np.empty(len(batch), dtype=np.int64)
    for i in range(0, len(batch), chunk):
        out[i : i + chunk] = forward(net, batch[i : i + chunk], mask).logits.argmax(axis=1)
    return out


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    n = len(labels)
    rows = np.arange(n)
    loss = float(np.mean(logsum - z[rows, labels]))
    grad = np.exp(z - logsum[:, None])
    grad[rows, labels] -= 1.0
    grad /= n
    return loss, grad


def _check_labels(net: Network, labels: np.ndarray, n: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match batch of {n}")
    n_classes = net.layers[-1].width
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    return labels.astype(np.int64)


def backward(net: Network, batch: np.ndarray, labels: np.ndarray) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Loss and per-layer ``(dW, db)`` gradients of the mean softmax cross-entropy."""
    trace = forward(net, batch)
    labels = _check_labels(net, labels, len(trace.inputs))
    loss, g = softmax_cross_entropy(trace.logits, labels)
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(net.layers)  # type: ignore[list-item]
    for l in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[l]
        if layer.activation == "relu":
            g = g * (trace.pre[l] > 0)
        grads[l] = (g.T @ trace.layer_input(l), g.sum(axis=0))
        if l > 0:
            g = g @ layer.weights
    return loss, grads


def train(net: Network, dataset, schedule: TrainSchedule, *, dtype=np.float64, verbose: bool = False) -> tuple[Network, TrainReport]:
    """Minibatch SGD with classic momentum (v <- m v - lr g, theta <- theta + v).

    ``dataset`` is anything with ``inputs`` and ``labels`` arrays. The input network is
    not modified. ``dtype=np.float32`` trades determinism across platforms for speed.
    """
    X = np.asarray(dataset.inputs, dtype=dtype)
    y = _check_labels(net, dataset.labels, len(X))
    n = len(X)
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    net = net.copy()
    params = [[layer.weights.astype(dtype), layer.biases.astype(dtype)] for layer in net.layers]
    velocity = [[np.zeros_like(w), np.zeros_like(b)] for w, b in params]
    relu = [layer.activation == "relu" for layer in net.layers]
    rng = np.random.default_rng(schedule.shuffle_seed)
    report = TrainReport()
    m = schedule.momentum
    bs = schedule.batch_size
    n_layers = len(params)

    for epoch, lr in enumerate(schedule.learning_rates()):
        perm = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, bs):
            idx = perm[start : start + bs]
            xb, yb = X[idx], y[idx]
            acts = [xb]
            pres = []
            h = xb
            for l, (w, b) in enumerate(params):
                z = h @ w.T + b
                pres.append(z)
                h = np.maximum(z, 0) if relu[l] else z
                acts.append(h)
            loss, g = softmax_cross_entropy(acts[-1].astype(np.float64), yb)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch starting at {start} (lr={lr})")
            loss_sum += loss * len(idx)
            correct += int(np.sum(acts[-1].argmax(axis=1) == yb))
            g = g.astype(dtype)
            for l in range(n_layers - 1, -1, -1):
                w, b = params[l]
                if relu[l]:
                    g = g * (pres[l] > 0)
                gw = g.T @ acts[l]
                gb = g.sum(axis=0)
                if l > 0:
                    g = g @ w
                vw, vb = velocity[l]
                vw *= m
                vw -= lr * gw
                vb *= m
                vb -= lr * gb
                w += vw
                b += vb
        rec = EpochRecord(epoch, lr, loss_sum / n, correct / n)
        report.epochs.append(rec)
        if verbose:
            log.info("epoch %d lr=%g loss=%.5f acc=%.4f", epoch, lr, rec.loss, rec.accuracy)

    for layer, (w, b) in zip(net.layers, params):
        layer.weights = w.astype(np.float64)
        layer.biases = b.astype(np.float64)
    net.meta.setdefault("training", []).append(
        {"epochs": schedule.total_epochs, "phases": [list(p) for p in schedule.phases],
         "momentum": m, "batch_size": bs, "shuffle_seed": schedule.shuffle_seed,
         "final_loss": report.final_loss}
    )
    net.validate()
    return net, report


# --- persistence -----------------------------------------------------------


def network_to_dict(net: Network) -> dict:
    meta = dict(net.meta)
    meta.setdefault("format_version", FORMAT_VERSION)
    return {
        "widths": net.widths,
        "layers": [
            {"w": layer.weights.ravel().tolist(), "b": layer.biases.tolist(), "act": layer.activation}
            for layer in net.layers
        ],
        "meta": meta,
    }


def network_from_dict(obj: Any) -> Network:
    if not isinstance(obj, dict):
        raise ModelFormatError("<root>", "expected a JSON object")
    for key in ("widths", "layers"):
        if key not in obj:
            raise ModelFormatError(key, "missing required field")
    widths = obj["widths"]
    if not isinstance(widths, list) or len(widths) < 2 or not all(isinstance(w, int) and w > 0 for w in widths):
        raise ModelFormatError("widths", "expected a list of at least two positive integers")
    layers_raw = obj["layers"]
    if not isinstance(layers_raw, list) or len(layers_raw) != len(widths) - 1:
        raise ModelFormatError("layers", f"expected {len(widths) - 1} layers for widths {widths}")
    meta = obj.get("meta", {})
    if not isinstance(meta, dict):
        raise ModelFormatError("meta", "expected an object")
    layers = []
    for i, raw in enumerate(layers_raw):
        loc = f"layers[{i}]"
        if not isinstance(raw, dict):
            raise ModelFormatError(loc, "expected an object")
        for key in ("w", "b", "act"):
            if key not in raw:
                raise ModelFormatError(f"{loc}.{key}", "missing required field")
        fan_in, fan_out = widths[i], widths[i + 1]
        try:
            w = np.asarray(raw["w"], dtype=np.float64)
            b = np.asarray(raw["b"], dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise ModelFormatError(loc, f"non-numeric parameters ({exc})") from None
        if w.ndim != 1 or w.size != fan_in * fan_out:
            raise ModelFormatError(
                f"{loc}.w", f"declared shape {fan_out}x{fan_in} needs {fan_in * fan_out} values, got {w.size}"
            )
        if b.ndim != 1 or b.size != fan_out:
            raise ModelFormatError(f"{loc}.b", f"declared width {fan_out} needs {fan_out} values, got {b.size}")
        if raw["act"] not in ACTIVATIONS:
            raise ModelFormatError(f"{loc}.act", f"unknown activation {raw['act']!r}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ModelFormatError(loc, "non-finite parameters")
        layers.append(Layer(w.reshape(fan_out, fan_in), b, raw["act"]))
    try:
        return Network(layers, widths[0], meta)
    except ValueError as exc:
        raise ModelFormatError("layers", str(exc)) from None


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def save_network(net: Network, path: str | os.PathLike) -> None:
    atomic_write_text(path, json.dumps(network_to_dict(net)))


def load_network(path: str | os.PathLike) -> Network:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"line {exc.lineno} col {exc.colno}", exc.msg) from None
    return network_from_dict(obj)
