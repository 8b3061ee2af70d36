"""From-scratch feed-forward binary classifier for edge survival.

Architecture 16 -> 32 -> 32 -> 32 -> 1 with ReLU hidden activations and
a sigmoid output, trained with Adam on class-weighted binary cross
entropy. Everything runs in float64 numpy so the finite-difference
gradient check is meaningful; one seed fixes initialization and the
batch sampling stream, making training histories bit-reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

LAYER_SIZES = (16, 32, 32, 32, 1)
_PROB_EPS = 1e-12


@dataclass
class Network:
    weights: list  # per layer, shape (fan_in, fan_out)
    biases: list   # per layer, shape (fan_out,)

    def copy(self) -> "Network":
        return Network([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    @property
    def architecture(self) -> tuple:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 1000
    batches_per_epoch: int = 64
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    class_weights: str = "balanced"
    patience: int | None = None
    seed: int = 0

    def __post_init__(self):
        for name in ("learning_rate", "epochs", "batches_per_epoch", "batch_size",
                     "beta1", "beta2", "epsilon"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


def init_network(seed: int, layer_sizes=LAYER_SIZES) -> Network:
    """He-uniform hidden layers (ReLU), Xavier-uniform output layer."""
    rng = np.random.Generator(np.random.PCG64(seed))
    weights, biases = [], []
    pairs = list(zip(layer_sizes, layer_sizes[1:]))
    for idx, (fan_in, fan_out) in enumerate(pairs):
        if idx < len(pairs) - 1:
            limit = np.sqrt(6.0 / fan_in)
        else:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Network(weights, biases)


def init_limits(layer_sizes=LAYER_SIZES) -> list:
    """Per-layer |weight| bounds implied by the initialization scheme."""
    pairs = list(zip(layer_sizes, layer_sizes[1:]))
    out = []
    for idx, (fan_in, fan_out) in enumerate(pairs):
        out.append(np.sqrt(6.0 / fan_in) if idx < len(pairs) - 1 else np.sqrt(6.0 / (fan_in + fan_out)))
    return out


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward_pass(net: Network, X):
    """Activations per layer; returns (pre-activations, activations, p)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite input")
    acts = [X]
    zs = []
    h = X
    last = len(net.weights) - 1
    for idx, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ W + b
        zs.append(z)
        h = _sigmoid(z) if idx == last else np.maximum(z, 0.0)
        acts.append(h)
    return zs, acts, acts[-1][:, 0]


def forward(net: Network, x) -> float:
    """Survival probability for a single feature vector."""
    return float(_forward_pass(net, np.asarray(x).reshape(1, -1))[2][0])


def predict_proba(net: Network, X) -> np.ndarray:
    return _forward_pass(net, X)[2]


def predict(net: Network, X, threshold: float = 0.5) -> np.ndarray:
    """Class 1 iff the probability estimate strictly exceeds the threshold."""
    return (predict_proba(net, X) > threshold).astype(np.int64)


def balanced_class_weights(y) -> tuple:
    """w_c = N / (2 * N_c) over the training labels."""
    y = np.asarray(y)
    n = y.shape[0]
    n1 = int(y.sum())
    n0 = n - n1
    if n0 == 0 or n1 == 0:
        raise ValueError("both classes must be present to balance weights")
    return n / (2.0 * n0), n / (2.0 * n1)


def loss(net: Network, X, y, class_weights=(1.0, 1.0)) -> float:
    """Mean class-weighted binary cross entropy, probabilities clamped
    to [1e-12, 1 - 1e-12] so the value is always finite."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] == 0:
        raise ValueError("empty batch")
    p = np.clip(predict_proba(net, X), _PROB_EPS, 1.0 - _PROB_EPS)
    w0, w1 = class_weights
    w = np.where(y == 1, w1, w0)
    return float(np.mean(w * -(y * np.log(p) + (1.0 - y) * np.log1p(-p))))


def gradient(net: Network, X, y, class_weights=(1.0, 1.0)):
    """Analytic gradient of `loss` (backpropagation); same shapes as the
    parameters."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] == 0:
        raise ValueError("empty batch")
    zs, acts, p = _forward_pass(net, X)
    w0, w1 = class_weights
    w = np.where(y == 1, w1, w0)
    B = y.shape[0]
    delta = (w * (p - y) / B)[:, None]  # dL/dz at the sigmoid output
    dWs = [None] * len(net.weights)
    dbs = [None] * len(net.biases)
    for idx in range(len(net.weights) - 1, -1, -1):
        dWs[idx] = acts[idx].T @ delta
        dbs[idx] = delta.sum(axis=0)
        if idx > 0:
            delta = (delta @ net.weights[idx].T) * (zs[idx - 1] > 0.0)
    return dWs, dbs


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    train_balanced_accuracy: list = field(default_factory=list)
    val_balanced_accuracy: list = field(default_factory=list)
    best_epoch: int = -1


def _balanced_accuracy(y, yhat) -> float:
    y = np.asarray(y)
    yhat = np.asarray(yhat)
    rates = []
    for cls in (0, 1):
        mask = y == cls
        rates.append(float((yhat[mask] == cls).mean()) if mask.any() else 1.0)
    return 0.5 * (rates[0] + rates[1])


def _unpack_dataset(dataset):
    if isinstance(dataset, tuple):
        (xtr, ytr), (xval, yval) = dataset
        return (np.asarray(xtr, dtype=np.float64), np.asarray(ytr),
                np.asarray(xval, dtype=np.float64), np.asarray(yval))
    xtr, ytr = dataset.matrices("train")
    xval, yval = dataset.matrices("val")
    return xtr, ytr, xval, yval


def train(net: Network, dataset, cfg: TrainConfig = TrainConfig()):
    """Adam on uniformly sampled mini-batches; returns (best network,
    history).

    Per epoch: cfg.batches_per_epoch batches of cfg.batch_size drawn
    uniformly with replacement from the training split, one Adam step
    each, then full train/validation loss and balanced accuracy are
    recorded. The returned parameters are the checkpoint with the best
    validation loss (training loss when the validation split is empty).
    `dataset` is a features.Dataset or ((X_train, y_train), (X_val, y_val)).
    """
    xtr, ytr, xval, yval = _unpack_dataset(dataset)
    if xtr.shape[0] == 0:
        raise ValueError("empty training split")
    if len(np.unique(ytr)) < 2:
        raise ValueError("training data must contain both classes")
    weights = balanced_class_weights(ytr) if cfg.class_weights == "balanced" else (1.0, 1.0)
    has_val = xval.shape[0] > 0

    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    m = [np.zeros_like(w) for w in net.weights] + [np.zeros_like(b) for b in net.biases]
    v = [np.zeros_like(w) for w in net.weights] + [np.zeros_like(b) for b in net.biases]
    t = 0

    net = net.copy()
    history = TrainHistory()
    best = net.copy()
    best_metric = np.inf
    stall = 0

    for epoch in range(cfg.epochs):
        for _ in range(cfg.batches_per_epoch):
            idx = rng.integers(0, xtr.shape[0], size=cfg.batch_size)
            dWs, dbs = gradient(net, xtr[idx], ytr[idx], weights)
            t += 1
            grads = dWs + dbs
            params = net.weights + net.biases
            corr1 = 1.0 - cfg.beta1 ** t
            corr2 = 1.0 - cfg.beta2 ** t
            for k, (param, g) in enumerate(zip(params, grads)):
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * (g * g)
                param -= cfg.learning_rate * (m[k] / corr1) / (np.sqrt(v[k] / corr2) + cfg.epsilon)

        tr_loss = loss(net, xtr, ytr, weights)
        tr_acc = _balanced_accuracy(ytr, predict(net, xtr))
        history.train_loss.append(tr_loss)
        history.train_balanced_accuracy.append(tr_acc)
        if has_val:
            va_loss = loss(net, xval, yval, weights)
            history.val_loss.append(va_loss)
            history.val_balanced_accuracy.append(_balanced_accuracy(yval, predict(net, xval)))
            metric = va_loss
        else:
            metric = tr_loss
        if metric < best_metric:
            best_metric = metric
            best = net.copy()
            history.best_epoch = epoch
            stall = 0
        else:
            stall += 1
            if cfg.patience is not None and stall >= cfg.patience:
                break
    return best, history


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def network_to_json(net: Network, scaler_ref: str | None = None, metadata: dict | None = None) -> str:
    """JSON with row-major weights; float repr round-trips bit-exactly."""
    return json.dumps(
        {
            "architecture": list(net.architecture),
            "layers": [
                {"weights": w.tolist(), "bias": b.tolist()}
                for w, b in zip(net.weights, net.biases)
            ],
            "scaler": scaler_ref,
            "metadata": metadata or {},
        }
    )


def network_from_json(text: str) -> Network:
    obj = json.loads(text)
    weights = [np.asarray(layer["weights"], dtype=np.float64) for layer in obj["layers"]]
    biases = [np.asarray(layer["bias"], dtype=np.float64) for layer in obj["layers"]]
    net = Network(weights, biases)
    if list(net.architecture) != list(obj["architecture"]):
        raise ValueError("architecture field disagrees with layer shapes")
    return net
