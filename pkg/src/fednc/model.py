"""Desk-scale classifiers (MLP and logistic regression) in numpy.

Parameters live in one flat float32 vector.  Layer order for the MLP is
``W1 (n_features x n_hidden, row-major), b1, W2 (n_hidden x n_classes), b2``;
logistic regression stores ``W (n_features x n_classes), b``.
"""
import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codec import Packet
from .errors import EmptyDataset, ShapeMismatch, SizeMismatch


@dataclass(frozen=True)
class Architecture:
    kind: str = "mlp"          # "mlp" or "logreg"
    n_features: int = 32
    n_classes: int = 10
    n_hidden: int = 32

    def __post_init__(self):
        if self.kind not in ("mlp", "logreg"):
            raise ValueError(f"unknown architecture {self.kind!r}")

    @property
    def shape_tag(self) -> str:
        if self.kind == "mlp":
            return f"mlp-{self.n_features}-{self.n_hidden}-{self.n_classes}"
        return f"logreg-{self.n_features}-{self.n_classes}"

    @classmethod
    def from_tag(cls, tag: str) -> "Architecture":
        parts = tag.split("-")
        if parts[0] == "mlp" and len(parts) == 4:
            return cls("mlp", int(parts[1]), int(parts[3]), int(parts[2]))
        if parts[0] == "logreg" and len(parts) == 3:
            return cls("logreg", int(parts[1]), int(parts[2]))
        raise ShapeMismatch(f"unrecognised shape tag {tag!r}")

    def layer_shapes(self):
        if self.kind == "mlp":
            return [(self.n_features, self.n_hidden), (self.n_hidden,),
                    (self.n_hidden, self.n_classes), (self.n_classes,)]
        return [(self.n_features, self.n_classes), (self.n_classes,)]

    @property
    def size(self) -> int:
        return sum(int(np.prod(s)) for s in self.layer_shapes())

    def unflatten(self, values):
        out, off = [], 0
        for shp in self.layer_shapes():
            n = int(np.prod(shp))
            out.append(values[off:off + n].reshape(shp))
            off += n
        return out


@dataclass(frozen=True)
class ModelParams:
    values: np.ndarray
    shape_tag: str

    def __post_init__(self):
        object.__setattr__(self, "values", np.ascontiguousarray(self.values, dtype=np.float32))

    @property
    def arch(self) -> Architecture:
        return Architecture.from_tag(self.shape_tag)

    def bits(self) -> bytes:
        return self.values.tobytes()

    def bit_equal(self, other: "ModelParams") -> bool:
        return self.shape_tag == other.shape_tag and self.bits() == other.bits()


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    indices: np.ndarray = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.features) != len(self.labels):
            raise ShapeMismatch("features and labels differ in length")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ShapeMismatch("label outside [0, n_classes)")
        if self.indices is None:
            object.__setattr__(self, "indices", np.arange(len(self.labels)))

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.n_classes, self.indices[idx])


@dataclass(frozen=True)
class TrainConfig:
    local_epochs: int = 5
    batch_size: int = 10
    learning_rate: float = 0.05
    optimizer: str = "sgd"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.local_epochs < 1:
            raise ValueError("local_epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def init_model(arch: Architecture, rng: np.random.Generator) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    parts = []
    for shp in arch.layer_shapes():
        if len(shp) == 2:
            limit = np.sqrt(6.0 / (shp[0] + shp[1]))
            parts.append(rng.uniform(-limit, limit, size=shp).ravel())
        else:
            parts.append(np.zeros(shp))
    return ModelParams(np.concatenate(parts).astype(np.float32), arch.shape_tag)


def _forward(values, x, arch):
    layers = arch.unflatten(values)
    if arch.kind == "mlp":
        w1, b1, w2, b2 = layers
        pre = x @ w1 + b1
        h = np.maximum(pre, 0.0)
        return h @ w2 + b2, (pre, h)
    w, b = layers
    return x @ w + b, None


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def loss_and_grad(values: np.ndarray, x: np.ndarray, y: np.ndarray, arch: Architecture):
    """Mean softmax cross-entropy and its gradient, in float64."""
    values = np.asarray(values, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    n = len(y)
    logits, cache = _forward(values, x, arch)
    logp = _log_softmax(logits)
    loss = -logp[np.arange(n), y].mean()
    dz = np.exp(logp)
    dz[np.arange(n), y] -= 1.0
    dz /= n
    if arch.kind == "mlp":
        pre, h = cache
        _, _, w2, _ = arch.unflatten(values)
        gw2 = h.T @ dz
        gb2 = dz.sum(axis=0)
        dh = (dz @ w2.T) * (pre > 0)
        gw1 = x.T @ dh
        gb1 = dh.sum(axis=0)
        grads = [gw1, gb1, gw2, gb2]
    else:
        grads = [x.T @ dz, dz.sum(axis=0)]
    return float(loss), np.concatenate([g.ravel() for g in grads])


def _check(w: ModelParams, data: Dataset) -> Architecture:
    if len(data) == 0:
        raise EmptyDataset("dataset is empty")
    arch = w.arch
    if w.values.size != arch.size:
        raise ShapeMismatch(f"{w.values.size} values for architecture of size {arch.size}")
    if data.features.shape[1] != arch.n_features or data.n_classes != arch.n_classes:
        raise ShapeMismatch(f"dataset shape does not match {w.shape_tag}")
    return arch


def train(w: ModelParams, data: Dataset, cfg: TrainConfig, rng: np.random.Generator):
    """Local training returning ``(new_params, mean loss over the last epoch)``."""
    arch = _check(w, data)
    theta = w.values.astype(np.float64)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    step = 0
    n = len(data)
    last = 0.0
    for _ in range(cfg.local_epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, g = loss_and_grad(theta, data.features[idx], data.labels[idx], arch)
            total += loss * len(idx)
            if cfg.learning_rate == 0:
                continue
            if cfg.optimizer == "sgd":
                theta = theta - cfg.learning_rate * g
            else:
                step += 1
                m = cfg.adam_beta1 * m + (1 - cfg.adam_beta1) * g
                v = cfg.adam_beta2 * v + (1 - cfg.adam_beta2) * g * g
                mhat = m / (1 - cfg.adam_beta1 ** step)
                vhat = v / (1 - cfg.adam_beta2 ** step)
                theta = theta - cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.adam_eps)
        last = total / n
    return ModelParams(theta.astype(np.float32), w.shape_tag), last


def local_train(w: ModelParams, data: Dataset, cfg: TrainConfig, rng: np.random.Generator) -> ModelParams:
    return train(w, data, cfg, rng)[0]


def predict(w: ModelParams, x: np.ndarray) -> np.ndarray:
    logits, _ = _forward(w.values.astype(np.float64), np.asarray(x, dtype=np.float64), w.arch)
    return logits.argmax(axis=1)  # first maximum wins ties


def evaluate(w: ModelParams, data: Dataset) -> float:
    _check(w, data)
    return float(np.mean(predict(w, data.features) == data.labels))


def dataset_loss(w: ModelParams, data: Dataset) -> float:
    arch = _check(w, data)
    return loss_and_grad(w.values, data.features, data.labels, arch)[0]


def params_to_packet(w: ModelParams, origin: int, generation: int) -> Packet:
    return Packet(w.values.astype("<f4").tobytes(), origin, generation)


def packet_to_params(p: Packet, shape_tag: str) -> ModelParams:
    size = Architecture.from_tag(shape_tag).size
    if len(p.payload) != 4 * size:
        raise SizeMismatch(f"payload of {len(p.payload)} bytes, expected {4 * size}")
    return ModelParams(np.frombuffer(p.payload, dtype="<f4").astype(np.float32), shape_tag)


def make_synthetic(n_train: int, n_test: int, rng: np.random.Generator, n_classes: int = 10,
                   dim: int = 32, class_sep: float = 1.0, noise: float = 1.0):
    """Gaussian blobs with balanced classes; train and test share the class means."""
    means = rng.normal(0.0, class_sep, size=(n_classes, dim))

    def draw(n):
        y = np.arange(n) % n_classes
        y = y[rng.permutation(n)]
        x = means[y] + rng.normal(0.0, noise, size=(n, dim))
        return Dataset(x.astype(np.float32), y.astype(np.int64), n_classes)

    return draw(n_train), draw(n_test)


def read_idx(path) -> np.ndarray:
    """Read an IDX file (optionally gzip-compressed) into an array."""
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        raw = fh.read()
    zero, dtype_code, ndim = struct.unpack_from(">HBB", raw, 0)
    if zero != 0 or dtype_code != 0x08:
        raise ValueError(f"{path}: unsupported IDX header")
    dims = struct.unpack_from(">" + "I" * ndim, raw, 4)
    data = np.frombuffer(raw, dtype=np.uint8, offset=4 + 4 * ndim)
    if data.size != int(np.prod(dims)):
        raise ValueError(f"{path}: payload size does not match header")
    return data.reshape(dims)


def load_idx_dataset(images_path, labels_path, side: int = 14) -> Dataset:
    """Images (magic 0x803) and labels (magic 0x801), block-averaged to side x side."""
    imgs = read_idx(images_path).astype(np.float32) / 255.0
    labels = read_idx(labels_path).astype(np.int64)
    if imgs.ndim != 3 or labels.ndim != 1:
        raise ValueError("expected a 3-d image file and a 1-d label file")
    n, h, w = imgs.shape
    if h % side or w % side:
        raise ValueError(f"cannot downsample {h}x{w} to {side}x{side}")
    fh, fw = h // side, w // side
    small = imgs.reshape(n, side, fh, side, fw).mean(axis=(2, 4))
    return Dataset(small.reshape(n, -1), labels, int(labels.max()) + 1)
