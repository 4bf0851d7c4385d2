"""Per-voxel fully connected classifier with from-scratch training.

The classifier maps one voxel's feature vector through fully connected
layers (default 72 -> 100 -> 100 -> 100 -> 5) with ReLU activations and a
softmax over the 5 output classes.  Because every voxel is classified
independently from its own feature vector, applying the network densely is
equivalent to a stack of single-voxel convolutions over the feature
channels.

Training is plain mini-batch SGD with momentum and L2 regularization, fully
deterministic for a fixed (data, config, seed) triple.  Class-balanced
batches are drawn by stratified sampling: class first (uniform over the
classes present), then a sample uniformly within that class; without
balancing, epochs are shuffled passes over the data.

Checkpoint file layout (``save_checkpoint``): a UTF-8 text header of
``key=value`` lines terminated by one empty line, followed by a raw binary
payload of little-endian float64 values, layer by layer, each layer's weight
matrix row-major then its bias vector.  Header keys: ``format``,
``layer_sizes`` (comma-separated), one ``feature=`` line per input feature
in order, and optional ``config.<field>`` entries recording the training
configuration.
"""

import math
from dataclasses import dataclass, fields

import numpy as np

from .volume import LabelVolume, MultiChannelVolume, Volume3D, CLASS_NAMES

DEFAULT_LAYER_SIZES = (72, 100, 100, 100, 5)

_PREDICT_CHUNK = 1 << 16
_CKPT_FORMAT = "gbmseg-ckpt-1"


@dataclass(eq=False)
class NetworkParams:
    """Weights and biases of the per-voxel classifier.

    weights[i] has shape (out, in) and biases[i] shape (out,) for layer i.
    feature_names records the input-feature order this network expects.
    """

    weights: list
    biases: list
    feature_names: list

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        self.feature_names = [str(n) for n in self.feature_names]
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("weights and biases must be non-empty, equal-length lists")
        prev = self.weights[0].shape[1]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ValueError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if w.shape[1] != prev:
                raise ValueError(f"layer {i}: expected input size {prev}, got {w.shape[1]}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {i}: non-finite parameter values")
            prev = w.shape[0]
        if len(self.feature_names) != self.layer_sizes[0]:
            raise ValueError(
                f"{len(self.feature_names)} feature names for input size "
                f"{self.layer_sizes[0]}"
            )

    @property
    def layer_sizes(self):
        return tuple([self.weights[0].shape[1]] + [w.shape[0] for w in self.weights])

    @property
    def n_classes(self):
        return self.weights[-1].shape[0]


@dataclass
class TrainConfig:
    """Optimizer hyperparameters; all recorded in the checkpoint."""

    learning_rate: float = 1e-2
    momentum: float = 0.9
    batch_size: int = 256
    epochs: int = 10
    rng_seed: int = 0
    class_balance: bool = True
    l2: float = 1e-4

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.l2 < 0:
            raise ValueError(f"l2 must be >= 0, got {self.l2}")


def _default_names(n):
    return [f"f{i}" for i in range(n)]


def init_params(layer_sizes=DEFAULT_LAYER_SIZES, rng_seed=0, feature_names=None):
    """Seeded uniform initialization in +-sqrt(6 / (fan_in + fan_out))."""
    rng = np.random.default_rng(rng_seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes, layer_sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    if feature_names is None:
        feature_names = _default_names(layer_sizes[0])
    return NetworkParams(weights, biases, feature_names)


def zero_params(layer_sizes=DEFAULT_LAYER_SIZES, feature_names=None):
    """All-zero parameters (uniform prediction over classes)."""
    weights = [np.zeros((o, i)) for i, o in zip(layer_sizes, layer_sizes[1:])]
    biases = [np.zeros(o) for o in layer_sizes[1:]]
    if feature_names is None:
        feature_names = _default_names(layer_sizes[0])
    return NetworkParams(weights, biases, feature_names)


def _forward_batch(params, x):
    """Return (logits, probabilities, activations) for a (n, F) batch."""
    activations = [x]
    a = x
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        a = a @ w.T + b
        np.maximum(a, 0.0, out=a)
        activations.append(a)
    logits = a @ params.weights[-1].T + params.biases[-1]
    shifted = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(shifted)
    probs = ez / ez.sum(axis=1, keepdims=True)
    return logits, probs, activations


def forward(params: NetworkParams, features) -> tuple:
    """Evaluate the network on one feature vector or a batch of them.

    Returns (logits, probabilities); probabilities are computed with
    max-subtracted softmax and sum to 1 along the class axis.
    """
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.layer_sizes[0]:
        raise ValueError(
            f"feature shape {np.shape(features)} does not match network input "
            f"size {params.layer_sizes[0]}"
        )
    logits, probs, _ = _forward_batch(params, x)
    if single:
        return logits[0], probs[0]
    return logits, probs


def loss_and_grad(params: NetworkParams, features, labels, l2: float = 0.0):
    """Mean softmax cross-entropy plus L2 penalty, with its gradient.

    features: (n, F) batch, labels: (n,) ints.  The loss is
    mean(-log p[label]) + (l2 / 2) * sum of squared weights; gradients come
    from backpropagation with the ReLU subgradient at 0 taken as 0.
    Duplicating every sample leaves loss and gradient unchanged.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("batch must be a non-empty (n, F) matrix")
    if y.shape != (x.shape[0],):
        raise ValueError(f"labels shape {y.shape} does not match batch size {x.shape[0]}")
    n = x.shape[0]

    logits, probs, activations = _forward_batch(params, x)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    data_loss = -log_probs[np.arange(n), y].mean()
    reg_loss = 0.5 * l2 * sum(float((w * w).sum()) for w in params.weights)

    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n

    grad_w = [None] * len(params.weights)
    grad_b = [None] * len(params.biases)
    for i in range(len(params.weights) - 1, -1, -1):
        grad_w[i] = delta.T @ activations[i] + l2 * params.weights[i]
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i]) * (activations[i] > 0.0)
    grads = NetworkParams(grad_w, grad_b, params.feature_names)
    return data_loss + reg_loss, grads


def _dataset_loss(params, x, y, l2, chunk=_PREDICT_CHUNK):
    """Full-dataset mean loss, evaluated in chunks without gradients."""
    n = x.shape[0]
    total = 0.0
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        logits, _, _ = _forward_batch(params, x[lo:hi])
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        total += -log_probs[np.arange(hi - lo), y[lo:hi]].sum()
    reg = 0.5 * l2 * sum(float((w * w).sum()) for w in params.weights)
    return total / n + reg


def train(features, labels, config: TrainConfig, initial_params=None,
          feature_names=None, layer_sizes=DEFAULT_LAYER_SIZES):
    """Train the classifier with deterministic seeded SGD.

    features: (n, F) matrix, labels: (n,) ints covering at least 2 classes.
    Returns (params, losses) where losses[0] is the mean loss over the full
    data before any update and losses[e] (e >= 1) is the mean pre-update
    mini-batch loss during epoch e.
    """
    x = np.ascontiguousarray(np.asarray(features, dtype=np.float64))
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValueError("features must be (n, F) with matching (n,) labels")
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError(f"training data covers {classes.size} class(es), need >= 2")

    if initial_params is None:
        sizes = (x.shape[1],) + tuple(layer_sizes[1:])
        params = init_params(sizes, config.rng_seed, feature_names)
    else:
        params = NetworkParams(
            [w.copy() for w in initial_params.weights],
            [b.copy() for b in initial_params.biases],
            initial_params.feature_names,
        )
    if x.shape[1] != params.layer_sizes[0]:
        raise ValueError(
            f"feature count {x.shape[1]} does not match network input "
            f"size {params.layer_sizes[0]}"
        )

    rng = np.random.default_rng(config.rng_seed)
    n = x.shape[0]
    batch = min(config.batch_size, n)
    steps_per_epoch = max(1, n // batch)

    # Sample indices grouped by class, for stratified draws.
    order = np.argsort(y, kind="stable")
    counts = np.array([(y == c).sum() for c in classes])
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])

    vel_w = [np.zeros_like(w) for w in params.weights]
    vel_b = [np.zeros_like(b) for b in params.biases]
    losses = [float(_dataset_loss(params, x, y, config.l2))]

    for _ in range(config.epochs):
        epoch_loss = 0.0
        if not config.class_balance:
            perm = rng.permutation(n)
        for step in range(steps_per_epoch):
            if config.class_balance:
                cls = rng.integers(0, classes.size, size=batch)
                within = (rng.random(batch) * counts[cls]).astype(np.int64)
                idx = order[starts[cls] + within]
            else:
                idx = perm[step * batch : (step + 1) * batch]
            loss, grads = loss_and_grad(params, x[idx], y[idx], config.l2)
            epoch_loss += loss
            for i in range(len(params.weights)):
                vel_w[i] = config.momentum * vel_w[i] - config.learning_rate * grads.weights[i]
                vel_b[i] = config.momentum * vel_b[i] - config.learning_rate * grads.biases[i]
                params.weights[i] = params.weights[i] + vel_w[i]
                params.biases[i] = params.biases[i] + vel_b[i]
        losses.append(epoch_loss / steps_per_epoch)
    return params, losses


def predict_volume(params: NetworkParams, features) -> tuple:
    """Classify every voxel of a feature tensor.

    Returns (labels, probabilities): the argmax label volume (ties broken
    toward the smaller class index) and one probability channel per class.
    """
    if features.feature_count != params.layer_sizes[0]:
        raise ValueError(
            f"feature count {features.feature_count} does not match network "
            f"input size {params.layer_sizes[0]}"
        )
    dims = features.dims
    flat = features.data.reshape(-1, features.feature_count)
    n = flat.shape[0]
    probs = np.empty((n, params.n_classes))
    for lo in range(0, n, _PREDICT_CHUNK):
        hi = min(lo + _PREDICT_CHUNK, n)
        _, p, _ = _forward_batch(params, flat[lo:hi])
        probs[lo:hi] = p
    labels = LabelVolume(np.argmax(probs, axis=1).reshape(dims))
    names = list(CLASS_NAMES[: params.n_classes])
    if params.n_classes > len(CLASS_NAMES):
        names += [f"class{i}" for i in range(len(CLASS_NAMES), params.n_classes)]
    prob_channels = MultiChannelVolume(
        [Volume3D(probs[:, c].reshape(dims)) for c in range(params.n_classes)],
        names,
    )
    return labels, prob_channels


def save_checkpoint(params: NetworkParams, path, config: TrainConfig = None):
    """Write a checkpoint file (text header + raw float64 payload)."""
    lines = [
        f"format={_CKPT_FORMAT}",
        "layer_sizes=" + ",".join(str(s) for s in params.layer_sizes),
    ]
    lines += [f"feature={name}" for name in params.feature_names]
    if config is not None:
        for f in fields(config):
            lines.append(f"config.{f.name}={getattr(config, f.name)!r}")
    header = "\n".join(lines) + "\n\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8"))
        for w, b in zip(params.weights, params.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (params, config-or-None)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    sep = blob.find(b"\n\n")
    if sep < 0:
        raise ValueError(f"{path}: missing blank line after checkpoint header")
    header, payload = blob[:sep].decode("utf-8"), blob[sep + 2 :]
    pairs = []
    for line in header.splitlines():
        if "=" not in line:
            raise ValueError(f"{path}: malformed header line {line!r}")
        pairs.append(line.split("=", 1))
    kv = dict(pairs)
    if kv.get("format") != _CKPT_FORMAT:
        raise ValueError(f"{path}: unknown checkpoint format {kv.get('format')!r}")
    sizes = [int(s) for s in kv["layer_sizes"].split(",")]
    names = [v for k, v in pairs if k == "feature"]

    expected = sum((i + 1) * o for i, o in zip(sizes, sizes[1:])) * 8
    if len(payload) != expected:
        raise ValueError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    weights, biases = [], []
    offset = 0
    raw = np.frombuffer(payload, dtype="<f8")
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        weights.append(raw[offset : offset + fan_in * fan_out].reshape(fan_out, fan_in).copy())
        offset += fan_in * fan_out
        biases.append(raw[offset : offset + fan_out].copy())
        offset += fan_out
    params = NetworkParams(weights, biases, names)

    config = None
    cfg_pairs = {k[len("config."):]: v for k, v in kv.items() if k.startswith("config.")}
    if cfg_pairs:
        kwargs = {}
        for f in fields(TrainConfig):
            if f.name in cfg_pairs:
                raw_v = cfg_pairs[f.name]
                if f.type is bool or f.type == "bool":
                    kwargs[f.name] = raw_v in ("True", "true", "1")
                elif f.type is int or f.type == "int":
                    kwargs[f.name] = int(raw_v)
                else:
                    kwargs[f.name] = float(raw_v)
        config = TrainConfig(**kwargs)
    return params, config
