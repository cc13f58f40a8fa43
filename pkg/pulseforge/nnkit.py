"""
Dense feed-forward networks trained with exact backpropagation.

Each layer is ``dense -> batch norm (optional) -> activation -> dropout``.
Training minimizes the mean absolute error plus an L1 weight penalty with
Adam, a staircase learning-rate decay, checkpointed best-model snapshots and
early stopping. Everything is float64 NumPy so analytic gradients can be
checked against finite differences.
"""

import copy
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import erf

from .errors import (
    DimMismatch,
    EmptyDataset,
    InvalidConfig,
    IoError,
    ModelFormatError,
    NonFiniteGradient,
    ShapeMismatch,
)

logger = logging.getLogger(__name__)

ACTIVATIONS = ("linear", "tanh", "selu", "gelu")
BN_EPS = 1e-8
BN_MOMENTUM = 0.9
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
SELU_ALPHA = 1.6732632423543772
SELU_SCALE = 1.0507009873554805

MODEL_MAGIC = b"P2EM"
MODEL_VERSION = 1

PathLike = Union[str, Path]


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "linear"
    batchnorm: bool = False
    dropout_p: float = 0.0
    l1: float = 0.0

    def __post_init__(self) -> None:
        if self.in_dim < 1 or self.out_dim < 1:
            raise DimMismatch(
                f"Layer dims must be positive: {self.in_dim}->{self.out_dim}"
            )
        if self.activation not in ACTIVATIONS:
            raise InvalidConfig(
                f"Unknown activation '{self.activation}'", module="nnkit"
            )
        if not 0.0 <= self.dropout_p < 1.0:
            raise InvalidConfig(
                f"dropout_p must be in [0, 1): {self.dropout_p}", module="nnkit"
            )
        if self.l1 < 0:
            raise InvalidConfig(f"l1 must be >= 0: {self.l1}", module="nnkit")

    def to_header(self) -> Dict[str, Any]:
        return {
            "in": self.in_dim,
            "out": self.out_dim,
            "activation": self.activation,
            "batchnorm": self.batchnorm,
            "dropout": self.dropout_p,
            "l1": self.l1,
        }

    @classmethod
    def from_header(cls, entry: Dict[str, Any]) -> "LayerSpec":
        return cls(
            int(entry["in"]),
            int(entry["out"]),
            str(entry["activation"]),
            bool(entry["batchnorm"]),
            float(entry["dropout"]),
            float(entry["l1"]),
        )


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and schedule settings.

    The learning rate at epoch ``e`` is
    ``lr0 * decay_mult ** (e // decay_every_epochs)``.
    """

    batch_size: int = 100
    max_epochs: int = 1000
    lr0: float = 1e-3
    decay_mult: float = math.exp(-0.1)
    decay_every_epochs: int = 10
    early_stop_patience_epochs: int = 25
    checkpoint_every_epochs: int = 5
    seed: int = 0

    def __post_init__(self) -> None:
        positive = (
            self.batch_size,
            self.max_epochs,
            self.decay_every_epochs,
            self.early_stop_patience_epochs,
            self.checkpoint_every_epochs,
        )
        if min(positive) < 1 or not self.lr0 > 0:
            raise InvalidConfig("Training settings must be positive", module="nnkit")
        if not 0.0 < self.decay_mult <= 1.0:
            raise InvalidConfig(
                f"decay_mult must be in (0, 1]: {self.decay_mult}", module="nnkit"
            )
        if self.seed < 0:
            raise InvalidConfig(f"seed must be >= 0: {self.seed}", module="nnkit")

    def lr_at(self, epoch: int) -> float:
        return self.lr0 * self.decay_mult ** (epoch // self.decay_every_epochs)


@dataclass(frozen=True, eq=False)
class Batch:
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self) -> None:
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        targets = np.atleast_2d(np.asarray(self.targets, dtype=np.float64))
        if inputs.shape[0] != targets.shape[0]:
            raise ShapeMismatch(
                f"{inputs.shape[0]} input rows vs {targets.shape[0]} target rows"
            )
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    def __len__(self) -> int:
        return int(self.inputs.shape[0])

    def take(self, rows: np.ndarray) -> "Batch":
        return Batch(self.inputs[rows], self.targets[rows])


def activate(h: np.ndarray, name: str) -> np.ndarray:
    if name == "tanh":
        return np.tanh(h)
    if name == "selu":
        negative = SELU_ALPHA * np.expm1(np.minimum(h, 0.0))
        return SELU_SCALE * np.where(h > 0, h, negative)
    if name == "gelu":
        return 0.5 * h * (1.0 + erf(h / math.sqrt(2.0)))
    return h


def activation_grad(h: np.ndarray, name: str) -> np.ndarray:
    """Derivative of ``activate`` with respect to its input."""
    if name == "tanh":
        return 1.0 - np.tanh(h) ** 2
    if name == "selu":
        negative = SELU_ALPHA * np.exp(np.minimum(h, 0.0))
        return SELU_SCALE * np.where(h > 0, 1.0, negative)
    if name == "gelu":
        cdf = 0.5 * (1.0 + erf(h / math.sqrt(2.0)))
        pdf = np.exp(-0.5 * h * h) / math.sqrt(2.0 * math.pi)
        return cdf + h * pdf
    return np.ones_like(h)


class DenseLayer:
    """One dense block with optional batch norm and dropout."""

    def __init__(self, spec: LayerSpec, weights: np.ndarray) -> None:
        self.spec = spec
        self.W = weights
        self.b = np.zeros(spec.out_dim)
        self.gamma = np.ones(spec.out_dim)
        self.beta = np.zeros(spec.out_dim)
        self.running_mean = np.zeros(spec.out_dim)
        self.running_var = np.ones(spec.out_dim)
        self.grads: Dict[str, np.ndarray] = {}
        self._cache: Optional[Dict[str, Any]] = None

    def trainable(self) -> Dict[str, np.ndarray]:
        params = {"W": self.W, "b": self.b}
        if self.spec.batchnorm:
            params.update(gamma=self.gamma, beta=self.beta)
        return params

    def forward(
        self, x: np.ndarray, train: bool, rng: Optional[np.random.Generator]
    ) -> np.ndarray:
        z = x @ self.W + self.b
        cache: Dict[str, Any] = {"x": x, "train": train}
        if self.spec.batchnorm:
            if train:
                mean = z.mean(axis=0)
                var = z.var(axis=0)
                keep = BN_MOMENTUM
                self.running_mean = keep * self.running_mean + (1 - keep) * mean
                self.running_var = keep * self.running_var + (1 - keep) * var
            else:
                mean, var = self.running_mean, self.running_var
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (z - mean) * inv_std
            h = self.gamma * xhat + self.beta
            cache.update(xhat=xhat, inv_std=inv_std)
        else:
            h = z
        out = activate(h, self.spec.activation)
        mask = None
        if train and self.spec.dropout_p > 0 and rng is not None:
            keep = 1.0 - self.spec.dropout_p
            mask = (rng.random(out.shape) < keep) / keep
            out = out * mask
        cache.update(h=h, mask=mask)
        self._cache = cache
        return out

    def backward(self, grad: np.ndarray) -> np.ndarray:
        cache = self._cache
        if cache is None:
            raise ShapeMismatch("backward called before forward")
        if cache["mask"] is not None:
            grad = grad * cache["mask"]
        grad = grad * activation_grad(cache["h"], self.spec.activation)
        if self.spec.batchnorm:
            xhat, inv_std = cache["xhat"], cache["inv_std"]
            self.grads["gamma"] = np.sum(grad * xhat, axis=0)
            self.grads["beta"] = np.sum(grad, axis=0)
            dxhat = grad * self.gamma
            if cache["train"]:
                n = grad.shape[0]
                dz = (inv_std / n) * (
                    n * dxhat - dxhat.sum(axis=0) - xhat * np.sum(dxhat * xhat, axis=0)
                )
            else:
                dz = dxhat * inv_std
        else:
            dz = grad
        self.grads["W"] = cache["x"].T @ dz + self.spec.l1 * np.sign(self.W)
        self.grads["b"] = dz.sum(axis=0)
        return dz @ self.W.T


class Network:
    """Stack of ``DenseLayer`` blocks."""

    def __init__(self, layers: List[DenseLayer], seed: int = 0) -> None:
        self.layers = layers
        self.seed = seed
        self._dropout_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))

    @property
    def specs(self) -> List[LayerSpec]:
        return [layer.spec for layer in self.layers]

    @property
    def in_dim(self) -> int:
        return self.layers[0].spec.in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].spec.out_dim

    @property
    def has_batchnorm(self) -> bool:
        return any(layer.spec.batchnorm for layer in self.layers)

    def forward(self, inputs: np.ndarray, mode: str = "eval") -> np.ndarray:
        x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
        if x.shape[1] != self.in_dim:
            raise DimMismatch(f"Network expects {self.in_dim} inputs, got {x.shape[1]}")
        train = mode == "train"
        for layer in self.layers:
            x = layer.forward(x, train, self._dropout_rng)
        return x

    def backward(self, grad_out: np.ndarray) -> None:
        grad = grad_out
        for layer in reversed(self.layers):
            grad = layer.backward(grad)

    def l1_penalty(self) -> float:
        return float(
            sum(layer.spec.l1 * np.abs(layer.W).sum() for layer in self.layers)
        )

    def parameter_blocks(self) -> List[np.ndarray]:
        """All stored arrays in container order."""
        return [block for layer in self.layers for block in layer_blocks(layer)]

    def copy(self) -> "Network":
        return copy.deepcopy(self)


@dataclass(eq=False)
class TrainedModel:
    network: Network
    history: List[Tuple[float, float]] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = math.inf
    stopped_epoch: int = 0


class AdamState:
    """First/second moment estimates keyed by ``(layer, parameter)``."""

    def __init__(self) -> None:
        self.t = 0
        self.m: Dict[Tuple[int, str], np.ndarray] = {}
        self.v: Dict[Tuple[int, str], np.ndarray] = {}

    def step(self, net: Network, lr: float) -> None:
        self.t += 1
        bias1 = 1.0 - ADAM_BETA1**self.t
        bias2 = 1.0 - ADAM_BETA2**self.t
        for index, layer in enumerate(net.layers):
            for name, param in layer.trainable().items():
                key = (index, name)
                grad = layer.grads[name]
                m = self.m.get(key, np.zeros_like(param))
                v = self.v.get(key, np.zeros_like(param))
                m = ADAM_BETA1 * m + (1 - ADAM_BETA1) * grad
                v = ADAM_BETA2 * v + (1 - ADAM_BETA2) * grad * grad
                self.m[key], self.v[key] = m, v
                param -= lr * (m / bias1) / (np.sqrt(v / bias2) + ADAM_EPS)


def init_network(specs: Sequence[LayerSpec], seed: int = 0) -> Network:
    """
    Build a network with Xavier-uniform weights.

    Raises:
        DimMismatch: If consecutive layer dimensions do not chain
    """
    if not specs:
        raise DimMismatch("A network needs at least one layer")
    for prev, nxt in zip(specs[:-1], specs[1:]):
        if prev.out_dim != nxt.in_dim:
            raise DimMismatch(
                f"Layer output {prev.out_dim} does not feed input {nxt.in_dim}"
            )
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    layers = []
    for spec in specs:
        bound = math.sqrt(6.0 / (spec.in_dim + spec.out_dim))
        W = rng.uniform(-bound, bound, (spec.in_dim, spec.out_dim))
        layers.append(DenseLayer(spec, W))
    return Network(layers, seed)


def forward(net: Network, inputs: np.ndarray, mode: str = "eval") -> np.ndarray:
    return net.forward(inputs, mode)


def mae_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over the batch of the per-sample mean absolute error."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"Prediction {pred.shape} vs target {target.shape}")
    return float(np.mean(np.abs(pred - target)))


def objective(net: Network, batch: Batch, mode: str = "train") -> float:
    """MAE plus the L1 weight penalty; the value minimized during training."""
    return mae_loss(net.forward(batch.inputs, mode), batch.targets) + net.l1_penalty()


def backward_and_step(
    net: Network, batch: Batch, state: AdamState, lr: float
) -> float:
    """
    One Adam step on ``batch``.

    Returns:
        Objective value before the step

    Raises:
        NonFiniteGradient: If the loss or any gradient is not finite; weights
            and batch-norm running statistics are left as they were
    """
    running = [(layer.running_mean, layer.running_var) for layer in net.layers]
    pred = net.forward(batch.inputs, "train")
    if pred.shape != batch.targets.shape:
        raise ShapeMismatch(f"Prediction {pred.shape} vs target {batch.targets.shape}")
    diff = pred - batch.targets
    loss = float(np.mean(np.abs(diff))) + net.l1_penalty()
    net.backward(np.sign(diff) / diff.size)
    finite = math.isfinite(loss) and all(
        np.all(np.isfinite(grad))
        for layer in net.layers
        for grad in layer.grads.values()
    )
    if not finite:
        for layer, (mean, var) in zip(net.layers, running):
            layer.running_mean, layer.running_var = mean, var
        raise NonFiniteGradient("Non-finite loss or gradient; step not applied")
    state.step(net, lr)
    return loss


def _epoch_batches(
    n: int, batch_size: int, perm: np.ndarray, drop_singleton: bool
) -> List[np.ndarray]:
    batches = [perm[i : i + batch_size] for i in range(0, n, batch_size)]
    if drop_singleton and len(batches) > 1 and batches[-1].size == 1:
        batches.pop()
    return batches


def fit(
    net: Network,
    train: Batch,
    val: Optional[Batch],
    config: TrainConfig,
) -> Tuple[TrainedModel, List[Tuple[float, float]]]:
    """
    Train ``net`` and return the best checkpointed snapshot.

    The validation loss (eval-mode MAE) is computed every epoch. At every
    ``checkpoint_every_epochs``-th epoch the network is snapshotted if its
    validation loss is the best seen at a checkpoint. Training stops after
    ``early_stop_patience_epochs`` epochs without improvement.

    Args:
        net: Network to train in place
        train: Training set
        val: Validation set (the training set is used when omitted)
        config: Schedule and optimizer settings

    Returns:
        Tuple of (trained model, per-epoch ``(train_loss, val_loss)`` history)

    Raises:
        EmptyDataset: If a set is empty
    """
    if len(train) == 0:
        raise EmptyDataset("Training set is empty")
    if val is not None and len(val) == 0:
        raise EmptyDataset("Validation set is empty")
    val = val if val is not None else train

    rng = np.random.default_rng(config.seed)
    state = AdamState()
    history: List[Tuple[float, float]] = []
    best_val = math.inf
    since_best = 0
    snapshot: Optional[Network] = None
    snapshot_val = math.inf
    snapshot_epoch = 0
    epoch = 0

    for epoch in range(config.max_epochs):
        lr = config.lr_at(epoch)
        perm = rng.permutation(len(train))
        losses = [
            backward_and_step(net, train.take(rows), state, lr)
            for rows in _epoch_batches(
                len(train), config.batch_size, perm, net.has_batchnorm
            )
        ]
        val_loss = mae_loss(net.forward(val.inputs, "eval"), val.targets)
        history.append((float(np.mean(losses)), val_loss))

        if val_loss < best_val:
            best_val = val_loss
            since_best = 0
        else:
            since_best += 1
        checkpoint = (epoch + 1) % config.checkpoint_every_epochs == 0
        if checkpoint and val_loss < snapshot_val:
            snapshot, snapshot_val, snapshot_epoch = net.copy(), val_loss, epoch
        logger.debug(
            f"epoch {epoch}: lr={lr:.3g} "
            f"train={history[-1][0]:.5f} val={val_loss:.5f}"
        )
        if since_best >= config.early_stop_patience_epochs:
            logger.info(f"Early stop at epoch {epoch}; best val {best_val:.5f}")
            break

    if snapshot is None:
        snapshot, snapshot_val, snapshot_epoch = net.copy(), history[-1][1], epoch
    model = TrainedModel(snapshot, history, snapshot_epoch, snapshot_val, epoch)
    return model, history


def _layer_param_count(spec: LayerSpec) -> int:
    count = spec.in_dim * spec.out_dim + spec.out_dim
    return count + (4 * spec.out_dim if spec.batchnorm else 0)


def write_container(
    path: PathLike, header: Dict[str, Any], blocks: Sequence[np.ndarray]
) -> None:
    """Write ``P2EM`` magic, u32 header length, JSON header and f64le blocks."""
    header = dict(header, format="f64le", version=MODEL_VERSION)
    text = json.dumps(header, sort_keys=True, separators=(",", ":"))
    raw_header = text.encode("utf-8")
    payload = b"".join(np.ascontiguousarray(b, dtype="<f8").tobytes() for b in blocks)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as handle:
            handle.write(MODEL_MAGIC)
            handle.write(struct.pack("<I", len(raw_header)))
            handle.write(raw_header)
            handle.write(payload)
    except OSError as e:
        raise IoError(f"Failed to write model {path}") from e


def read_container(path: PathLike) -> Tuple[Dict[str, Any], np.ndarray]:
    """
    Read a ``P2EM`` container.

    Returns:
        Tuple of (header dict, flat float64 parameter vector)

    Raises:
        ModelFormatError: If the magic, header or payload is invalid
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Model file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < 8 or raw[:4] != MODEL_MAGIC:
        raise ModelFormatError(f"{path} is not a P2EM model")
    (header_len,) = struct.unpack("<I", raw[4:8])
    if 8 + header_len > len(raw):
        raise ModelFormatError(f"{path}: header length exceeds file size")
    try:
        header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ModelFormatError(f"{path}: malformed header") from e
    if header.get("format") != "f64le":
        raise ModelFormatError(f"{path}: unsupported format {header.get('format')!r}")
    payload = raw[8 + header_len :]
    if len(payload) % 8:
        raise ModelFormatError(
            f"{path}: payload is not a whole number of float64 values"
        )
    return header, np.frombuffer(payload, dtype="<f8").astype(np.float64)


def network_header(net: Network) -> Dict[str, Any]:
    return {"layers": [spec.to_header() for spec in net.specs], "seed": net.seed}


def network_from_header(header: Dict[str, Any], params: np.ndarray) -> Network:
    """Rebuild a network from its container header and parameter vector."""
    try:
        specs = [LayerSpec.from_header(entry) for entry in header["layers"]]
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"Invalid layer description: {e}") from e
    expected = sum(_layer_param_count(spec) for spec in specs)
    if params.size != expected:
        raise ModelFormatError(f"Expected {expected} parameters, found {params.size}")
    net = init_network(specs, int(header.get("seed", 0)))
    offset = 0
    for layer in net.layers:
        for block in layer_blocks(layer):
            block[...] = params[offset : offset + block.size].reshape(block.shape)
            offset += block.size
    return net


def layer_blocks(layer: DenseLayer) -> List[np.ndarray]:
    blocks = [layer.W, layer.b]
    if layer.spec.batchnorm:
        blocks += [layer.gamma, layer.beta, layer.running_mean, layer.running_var]
    return blocks


def save_network(
    path: PathLike, net: Network, extra: Optional[Dict[str, Any]] = None
) -> None:
    header = network_header(net)
    header.update(extra or {})
    write_container(path, header, net.parameter_blocks())


def load_network(path: PathLike) -> Tuple[Network, Dict[str, Any]]:
    header, params = read_container(path)
    return network_from_header(header, params), header
