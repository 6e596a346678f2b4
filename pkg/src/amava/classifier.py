"""Movement classifier: a small fully connected network over motion features.

Architecture is fixed: 2 inputs -> 32 ReLU -> (50% dropout while training)
-> 16 ReLU -> 3 softmax outputs for low / medium / high movement. Inputs
are z-score normalized with a scaler fit on the training split. Medium and
high collapse into a single "high" branch for downstream routing.

Everything here is plain numpy: the forward pass, the analytic backward
pass, and the Adam update loop, so gradients can be checked against finite
differences and training is bit-reproducible from a seed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DegenerateVarianceError, MissingClassError, ModelFormatError
from .frames import MotionFeatures

MODEL_MAGIC = b"AMAVA-MLP1"

LAYER_SIZES = (2, 32, 16, 3)
DROPOUT_RATE = 0.5

# (rows, cols) for each tensor in container order; vectors are column-shaped.
TENSOR_SHAPES = {
    "W1": (32, 2),
    "b1": (32, 1),
    "W2": (16, 32),
    "b2": (16, 1),
    "W3": (3, 16),
    "b3": (3, 1),
}
TENSOR_ORDER = ("W1", "b1", "W2", "b2", "W3", "b3")


class MovementClass(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


class Branch(str, Enum):
    LOW = "low"
    HIGH = "high"


CLASS_ORDER = (MovementClass.LOW, MovementClass.MEDIUM, MovementClass.HIGH)
_CLASS_INDEX = {cls: i for i, cls in enumerate(CLASS_ORDER)}


@dataclass(frozen=True)
class Scaler:
    """Per-feature mean and population standard deviation."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(2)
        std = np.asarray(self.std, dtype=np.float64).reshape(2)
        if not np.all(std > 0):
            raise DegenerateVarianceError("scaler std components must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


def scaler_fit(rows) -> Scaler:
    """Fit mean and population std on an (N, 2) array of feature rows."""
    arr = np.asarray(rows, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
        raise ValueError("scaler_fit needs at least 2 rows of 2 features")
    mean = arr.mean(axis=0)
    std = arr.std(axis=0)  # population std (ddof=0)
    if np.any(std <= 0):
        bad = int(np.argmin(std))
        raise DegenerateVarianceError(f"feature column {bad} is constant")
    return Scaler(mean=mean, std=std)


def scaler_transform(scaler: Scaler, features) -> np.ndarray:
    """Z-score one MotionFeatures or an (N, 2) block of raw rows."""
    if isinstance(features, MotionFeatures):
        arr = features.as_array()
    else:
        arr = np.asarray(features, dtype=np.float64)
    return (arr - scaler.mean) / scaler.std


@dataclass
class MlpParams:
    """Network weights, stored float32 so the container round-trips exactly."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    def __post_init__(self):
        expected = {
            "W1": (32, 2), "b1": (32,),
            "W2": (16, 32), "b2": (16,),
            "W3": (3, 16), "b3": (3,),
        }
        for name, shape in expected.items():
            arr = np.asarray(getattr(self, name), dtype=np.float32)
            if arr.shape != shape:
                raise ModelFormatError(
                    f"tensor {name} has shape {arr.shape}, expected {shape}"
                )
            if not np.all(np.isfinite(arr)):
                raise ModelFormatError(f"tensor {name} contains non-finite values")
            setattr(self, name, arr)

    def tensors(self) -> list[np.ndarray]:
        return [self.W1, self.b1, self.W2, self.b2, self.W3, self.b3]

    def copy(self) -> "MlpParams":
        return MlpParams(*(t.copy() for t in self.tensors()))


def init_params(seed: int) -> MlpParams:
    """He-style uniform fan-in initialization; biases start at zero."""
    rng = np.random.default_rng(seed)
    weights = []
    for fan_in, fan_out in zip(LAYER_SIZES[:-1], LAYER_SIZES[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
    return MlpParams(
        W1=weights[0], b1=np.zeros(32),
        W2=weights[1], b2=np.zeros(16),
        W3=weights[2], b3=np.zeros(3),
    )


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def forward(params: MlpParams, x) -> np.ndarray:
    """Class probabilities for one scaled feature vector or an (N, 2) block.

    Dropout is inference-inactive; this is the deployed path.
    """
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    W1, b1, W2, b2, W3, b3 = (t.astype(np.float64) for t in params.tensors())
    a1 = np.maximum(arr @ W1.T + b1, 0.0)
    a2 = np.maximum(a1 @ W2.T + b2, 0.0)
    probs = _softmax(a2 @ W3.T + b3)
    return probs[0] if single else probs


def classify(params: MlpParams, scaler: Scaler, features: MotionFeatures):
    """Movement class plus the binary branch; medium routes to high.

    Argmax ties break toward the higher-movement class so ambiguous motion
    lands on the hazard-capable branch.
    """
    probs = forward(params, scaler_transform(scaler, features))
    idx = 2 - int(np.argmax(probs[::-1]))
    cls = CLASS_ORDER[idx]
    branch = Branch.LOW if cls is MovementClass.LOW else Branch.HIGH
    return cls, branch


def cross_entropy_loss(tensors, x, y) -> float:
    """Mean cross-entropy of the network given raw tensors (any float dtype).

    Shared by the analytic backward pass and its finite-difference check;
    no dropout, no weight decay.
    """
    W1, b1, W2, b2, W3, b3 = tensors
    a1 = np.maximum(x @ np.asarray(W1).T + np.asarray(b1), 0.0)
    a2 = np.maximum(a1 @ np.asarray(W2).T + np.asarray(b2), 0.0)
    probs = _softmax(a2 @ np.asarray(W3).T + np.asarray(b3))
    picked = probs[np.arange(len(y)), y]
    return float(-np.log(np.clip(picked, 1e-300, None)).mean())


def loss_and_grads(tensors, x, y, dropout_mask: np.ndarray | None = None):
    """Cross-entropy loss and analytic gradients for each tensor.

    dropout_mask, when given, is a 0/1 array applied to hidden layer 1 with
    inverted scaling (training-time dropout); pass None for clean gradients.
    """
    W1, b1, W2, b2, W3, b3 = (np.asarray(t, dtype=np.float64) for t in tensors)
    x = np.asarray(x, dtype=np.float64)
    n = len(y)

    z1 = x @ W1.T + b1
    a1 = np.maximum(z1, 0.0)
    if dropout_mask is not None:
        keep = 1.0 - DROPOUT_RATE
        a1d = a1 * dropout_mask / keep
    else:
        a1d = a1
    z2 = a1d @ W2.T + b2
    a2 = np.maximum(z2, 0.0)
    z3 = a2 @ W3.T + b3
    probs = _softmax(z3)

    picked = probs[np.arange(n), y]
    loss = float(-np.log(np.clip(picked, 1e-300, None)).mean())

    dz3 = probs.copy()
    dz3[np.arange(n), y] -= 1.0
    dz3 /= n
    gW3 = dz3.T @ a2
    gb3 = dz3.sum(axis=0)

    da2 = dz3 @ W3
    dz2 = da2 * (z2 > 0)
    gW2 = dz2.T @ a1d
    gb2 = dz2.sum(axis=0)

    da1 = dz2 @ W2
    if dropout_mask is not None:
        da1 = da1 * dropout_mask / (1.0 - DROPOUT_RATE)
    dz1 = da1 * (z1 > 0)
    gW1 = dz1.T @ x
    gb1 = dz1.sum(axis=0)

    return loss, [gW1, gb1, gW2, gb2, gW3, gb3]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    weight_decay: float = 1e-5
    batch_size: int = 64
    patience: int = 5
    max_epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        if min(self.learning_rate, self.batch_size, self.patience, self.max_epochs) <= 0:
            raise ValueError("all training settings must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


@dataclass
class TrainReport:
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    epochs_run: int = 0
    best_epoch: int = 0
    test_accuracy: float = 0.0


def _encode_labels(labels) -> np.ndarray:
    return np.array([_CLASS_INDEX[MovementClass(lbl)] for lbl in labels], dtype=np.int64)


def _stratified_split(labels: np.ndarray, rng: np.random.Generator):
    """Per-class 60/20/20 index split; every split keeps each class."""
    train_idx, val_idx, test_idx = [], [], []
    for cls_idx in range(len(CLASS_ORDER)):
        members = np.flatnonzero(labels == cls_idx)
        rng.shuffle(members)
        n = len(members)
        n_train = max(1, int(round(n * 0.6)))
        n_val = max(1, int(round(n * 0.2)))
        n_train = min(n_train, n - 2) if n >= 3 else n_train
        train_idx.extend(members[:n_train])
        val_idx.extend(members[n_train : n_train + n_val])
        test_idx.extend(members[n_train + n_val :])
    return (np.array(train_idx), np.array(val_idx), np.array(test_idx))


def accuracy(params: MlpParams, x_scaled: np.ndarray, y: np.ndarray) -> float:
    probs = forward(params, x_scaled)
    # same high-biased tie-break as classify()
    pred = 2 - np.argmax(probs[:, ::-1], axis=1)
    return float((pred == y).mean())


def train(features, labels, cfg: TrainConfig, val_loss_fn=None):
    """Train the network; returns (best params, scaler, report).

    features: (N, 2) raw motion feature rows. labels: per-row MovementClass
    (or its string value). All three classes must be present. The split is
    stratified 60/20/20 under cfg.seed; the scaler is fit on the training
    split only. Adam (b1=0.9, b2=0.999, eps=1e-8) minimizes cross-entropy
    with L2 weight decay folded into the gradient; 50% dropout after hidden
    layer 1 applies only while training. Training stops when validation
    loss has not improved for cfg.patience consecutive epochs, and the
    parameters from the best validation epoch are returned.

    val_loss_fn optionally overrides validation scoring (signature:
    (params, x_val_scaled, y_val, epoch) -> float), letting tests inject a
    fixed validation curve.
    """
    x_all = np.asarray(features, dtype=np.float64)
    y_all = _encode_labels(labels)
    present = set(y_all.tolist())
    missing = [cls.value for cls in CLASS_ORDER if _CLASS_INDEX[cls] not in present]
    if missing:
        raise MissingClassError(f"classes absent from training data: {missing}")

    rng = np.random.default_rng(cfg.seed)
    train_idx, val_idx, test_idx = _stratified_split(y_all, rng)
    scaler = scaler_fit(x_all[train_idx])
    x_train = scaler_transform(scaler, x_all[train_idx])
    y_train = y_all[train_idx]
    x_val = scaler_transform(scaler, x_all[val_idx])
    y_val = y_all[val_idx]
    x_test = scaler_transform(scaler, x_all[test_idx])
    y_test = y_all[test_idx]

    params = init_params(cfg.seed)
    adam_m = [np.zeros_like(t, dtype=np.float64) for t in params.tensors()]
    adam_v = [np.zeros_like(t, dtype=np.float64) for t in params.tensors()]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0

    report = TrainReport()
    best_val = np.inf
    best_params = params.copy()
    bad_epochs = 0

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(y_train))
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            xb, yb = x_train[batch], y_train[batch]
            mask = (rng.random((len(batch), 32)) >= DROPOUT_RATE).astype(np.float64)
            _, grads = loss_and_grads(params.tensors(), xb, yb, dropout_mask=mask)
            step += 1
            for i, tensor in enumerate(params.tensors()):
                g = grads[i] + cfg.weight_decay * tensor.astype(np.float64)
                adam_m[i] = beta1 * adam_m[i] + (1 - beta1) * g
                adam_v[i] = beta2 * adam_v[i] + (1 - beta2) * g * g
                m_hat = adam_m[i] / (1 - beta1**step)
                v_hat = adam_v[i] / (1 - beta2**step)
                update = tensor.astype(np.float64) - cfg.learning_rate * m_hat / (
                    np.sqrt(v_hat) + eps
                )
                tensor[...] = update.astype(np.float32)

        report.train_losses.append(cross_entropy_loss(params.tensors(), x_train, y_train))
        if val_loss_fn is not None:
            val_loss = float(val_loss_fn(params, x_val, y_val, epoch))
        else:
            val_loss = cross_entropy_loss(params.tensors(), x_val, y_val)
        report.val_losses.append(val_loss)
        report.epochs_run = epoch

        if val_loss < best_val:
            best_val = val_loss
            best_params = params.copy()
            report.best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                break

    report.test_accuracy = accuracy(best_params, x_test, y_test)
    return best_params, scaler, report


def save_model(params: MlpParams, scaler: Scaler, path) -> None:
    """Write the model container: magic, scaler, then shape-tagged tensors."""
    blob = bytearray(MODEL_MAGIC)
    blob += struct.pack(
        "<4f",
        float(scaler.mean[0]), float(scaler.mean[1]),
        float(scaler.std[0]), float(scaler.std[1]),
    )
    for name, tensor in zip(TENSOR_ORDER, params.tensors()):
        rows, cols = TENSOR_SHAPES[name]
        data = np.ascontiguousarray(tensor.reshape(rows, cols), dtype="<f4")
        blob += struct.pack("<II", rows, cols)
        blob += data.tobytes()
    Path(path).write_bytes(bytes(blob))


def load_model(path):
    """Read a model container back into (MlpParams, Scaler)."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MODEL_MAGIC) or raw[: len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise ModelFormatError(f"{path}: missing {MODEL_MAGIC.decode()} magic header")
    offset = len(MODEL_MAGIC)
    if len(raw) < offset + 16:
        raise ModelFormatError(f"{path}: truncated before scaler block")
    m0, m1, s0, s1 = struct.unpack_from("<4f", raw, offset)
    offset += 16
    if not (s0 > 0 and s1 > 0):
        raise ModelFormatError(f"{path}: scaler std must be positive, got ({s0}, {s1})")

    tensors = {}
    for name in TENSOR_ORDER:
        if len(raw) < offset + 8:
            raise ModelFormatError(f"{path}: truncated before tensor {name} header")
        rows, cols = struct.unpack_from("<II", raw, offset)
        offset += 8
        if (rows, cols) != TENSOR_SHAPES[name]:
            raise ModelFormatError(
                f"{path}: tensor {name} has shape {(rows, cols)}, "
                f"expected {TENSOR_SHAPES[name]}"
            )
        nbytes = rows * cols * 4
        if len(raw) < offset + nbytes:
            raise ModelFormatError(f"{path}: truncated inside tensor {name}")
        data = np.frombuffer(raw, dtype="<f4", count=rows * cols, offset=offset)
        offset += nbytes
        tensors[name] = data.reshape(rows, cols).copy()
    if offset != len(raw):
        raise ModelFormatError(f"{path}: {len(raw) - offset} trailing bytes")

    params = MlpParams(
        W1=tensors["W1"], b1=tensors["b1"].reshape(32),
        W2=tensors["W2"], b2=tensors["b2"].reshape(16),
        W3=tensors["W3"], b3=tensors["b3"].reshape(3),
    )
    scaler = Scaler(mean=np.array([m0, m1]), std=np.array([s0, s1]))
    return params, scaler


class MovementClassifier:
    """Loaded model bundle exposing the single call the pipeline needs."""

    def __init__(self, params: MlpParams, scaler: Scaler):
        self.params = params
        self.scaler = scaler

    @classmethod
    def from_file(cls, path) -> "MovementClassifier":
        return cls(*load_model(path))

    def classify(self, features: MotionFeatures):
        return classify(self.params, self.scaler, features)
