"""Trainable regression backends mapping feature vectors to intensity vectors.

Two backends share one training loop: a per-label linear model and a
one-hidden-layer MLP (ReLU hidden, linear output). Both minimize the
half mean squared error L = (1/2m) sum_i mean_j (yhat_ij - y_ij)^2 by
mini-batch gradient descent with classical momentum. Training is fully
deterministic for a fixed (data, config, seed) triple. Raw predictions
are unbounded; clamping to the 0..10 scale happens downstream.
"""

from __future__ import annotations

import hashlib
import json
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import sparse

from .errors import DataError, NumericalError, UsageError
from .featurize import FeatureVector, FeaturizerConfig

MOMENTUM = 0.9
DEFAULT_LR = {"linear": 0.05, "mlp": 0.01}
_CKPT_MAGIC = b"EQNCKPT1\n"


@dataclass
class LinearModel:
    weights: np.ndarray  # (C, dim)
    biases: np.ndarray  # (C,)

    @property
    def num_labels(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def params(self) -> list[np.ndarray]:
        return [self.weights, self.biases]

    def copy(self) -> "LinearModel":
        return LinearModel(self.weights.copy(), self.biases.copy())


@dataclass
class MlpModel:
    hidden_weights: np.ndarray  # (H, dim)
    hidden_bias: np.ndarray  # (H,)
    output_weights: np.ndarray  # (C, H)
    output_bias: np.ndarray  # (C,)

    @property
    def num_labels(self) -> int:
        return self.output_weights.shape[0]

    @property
    def dim(self) -> int:
        return self.hidden_weights.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.hidden_weights.shape[0]

    def params(self) -> list[np.ndarray]:
        return [self.hidden_weights, self.hidden_bias, self.output_weights, self.output_bias]

    def copy(self) -> "MlpModel":
        return MlpModel(*(p.copy() for p in self.params()))


Model = LinearModel | MlpModel


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    learning_rate: float | None = None  # None -> backend default (0.05 linear, 0.01 mlp)
    batch_size: int = 32
    seed: int = 0
    l2: float = 1e-4
    hidden_size: int = 256
    patience: int = 0  # 0 disables early stopping

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise UsageError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise UsageError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise UsageError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.hidden_size < 1:
            raise UsageError(f"hidden_size must be >= 1, got {self.hidden_size}")
        if self.l2 < 0:
            raise UsageError(f"l2 must be >= 0, got {self.l2}")

    def lr_for(self, backend: str) -> float:
        return self.learning_rate if self.learning_rate is not None else DEFAULT_LR[backend]

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "l2": self.l2,
            "hidden_size": self.hidden_size,
            "patience": self.patience,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {"epochs", "learning_rate", "batch_size", "seed", "l2", "hidden_size", "patience"}
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainReport:
    train_losses: list[float]
    val_losses: list[float]
    best_epoch: int
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        # wall_time is intentionally omitted: persisted artifacts stay
        # byte-identical across reruns of the same seeded config.
        return {
            "train_losses": self.train_losses,
            "val_losses": self.val_losses,
            "best_epoch": self.best_epoch,
        }


def to_matrix(features: Sequence[FeatureVector], dim: int) -> sparse.csr_matrix:
    """Stack sparse feature vectors into a CSR matrix."""
    data: list[float] = []
    indices: list[int] = []
    indptr = [0]
    for fv in features:
        for idx, w in sorted(fv.entries.items()):
            indices.append(idx)
            data.append(w)
        indptr.append(len(indices))
    return sparse.csr_matrix(
        (np.asarray(data), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(features), dim),
    )


def _forward(model: Model, x: sparse.csr_matrix) -> tuple[np.ndarray, np.ndarray | None]:
    """Return (predictions, hidden activations or None)."""
    if isinstance(model, LinearModel):
        return x @ model.weights.T + model.biases, None
    pre = x @ model.hidden_weights.T + model.hidden_bias
    act = np.maximum(pre, 0.0)
    return act @ model.output_weights.T + model.output_bias, act


def mse_loss(model: Model, x: sparse.csr_matrix, y: np.ndarray) -> float:
    """Half MSE averaged over labels and samples: (1/2m) mean_j (err^2)."""
    pred, _ = _forward(model, x)
    err = pred - y
    return float(np.sum(err * err) / (2.0 * y.shape[0] * y.shape[1]))


def _loss_and_grads(
    model: Model, x: sparse.csr_matrix, y: np.ndarray, l2: float
) -> tuple[float, list[np.ndarray]]:
    m, c = y.shape
    pred, act = _forward(model, x)
    err = pred - y
    loss = float(np.sum(err * err) / (2.0 * m * c))
    d_pred = err / (m * c)
    if isinstance(model, LinearModel):
        g_w = x.T.dot(d_pred).T + l2 * model.weights
        g_b = d_pred.sum(axis=0)
        return loss, [g_w, g_b]
    assert act is not None
    g_w2 = d_pred.T @ act + l2 * model.output_weights
    g_b2 = d_pred.sum(axis=0)
    d_act = d_pred @ model.output_weights
    d_pre = d_act * (act > 0)
    g_w1 = x.T.dot(d_pre).T + l2 * model.hidden_weights
    g_b1 = d_pre.sum(axis=0)
    return loss, [g_w1, g_b1, g_w2, g_b2]


def init_model(backend: str, dim: int, num_labels: int, cfg: TrainConfig, rng: np.random.Generator) -> Model:
    """Fresh parameters; epoch-0 predictions equal the (zero) bias vector."""
    if backend == "linear":
        return LinearModel(np.zeros((num_labels, dim)), np.zeros(num_labels))
    if backend == "mlp":
        h = cfg.hidden_size
        bound = np.sqrt(6.0 / (dim + h))
        return MlpModel(
            rng.uniform(-bound, bound, size=(h, dim)),
            np.zeros(h),
            np.zeros((num_labels, h)),
            np.zeros(num_labels),
        )
    raise UsageError(f"unknown backend {backend!r} (expected 'linear' or 'mlp')")


def train(
    features: Sequence[FeatureVector],
    targets: Sequence[Sequence[float]] | np.ndarray,
    val_features: Sequence[FeatureVector],
    val_targets: Sequence[Sequence[float]] | np.ndarray,
    cfg: TrainConfig,
    backend: str = "linear",
    dim: int | None = None,
    initial: Model | None = None,
) -> tuple[Model, TrainReport]:
    """Fit a backend by seeded mini-batch gradient descent.

    Returns the epoch checkpoint with the lowest validation loss (lowest
    training loss when no validation split is given). ``initial`` warm
    starts from an existing model instead of fresh parameters.
    """
    start = time.perf_counter()
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] != len(features):
        raise DataError(f"targets shape {y.shape} does not match {len(features)} feature vectors")
    if len(features) == 0:
        raise DataError("cannot train on an empty feature list")
    if dim is None:
        dim = 1 + max((max(fv.entries) for fv in features if fv.entries), default=0)
    m, num_labels = y.shape

    has_val = len(val_features) > 0
    if cfg.patience > 0 and not has_val:
        raise UsageError("early stopping (patience > 0) requires a validation split")
    x = to_matrix(features, dim)
    y_val = np.asarray(val_targets, dtype=np.float64) if has_val else None
    x_val = to_matrix(val_features, dim) if has_val else None

    rng = np.random.default_rng(cfg.seed)
    model = initial.copy() if initial is not None else init_model(backend, dim, num_labels, cfg, rng)
    lr = cfg.lr_for(backend)
    velocity = [np.zeros_like(p) for p in model.params()]

    train_losses: list[float] = []
    val_losses: list[float] = []
    best_loss = np.inf
    best_epoch = -1
    best_params = [p.copy() for p in model.params()]
    since_best = 0

    for epoch in range(cfg.epochs):
        order = rng.permutation(m)
        # Divergence surfaces as a non-finite epoch loss below, so transient
        # overflow in the arithmetic itself need not warn.
        with np.errstate(over="ignore", invalid="ignore"):
            for lo in range(0, m, cfg.batch_size):
                batch = order[lo : lo + cfg.batch_size]
                _, grads = _loss_and_grads(model, x[batch], y[batch], cfg.l2)
                for p, v, g in zip(model.params(), velocity, grads):
                    v *= MOMENTUM
                    v -= lr * g
                    p += v
            epoch_train = mse_loss(model, x, y)
        train_losses.append(epoch_train)
        if not np.isfinite(epoch_train):
            raise NumericalError(
                f"training diverged at epoch {epoch} (loss={epoch_train}); lower the learning rate"
            )
        if has_val:
            assert x_val is not None and y_val is not None
            epoch_val = mse_loss(model, x_val, y_val)
            val_losses.append(epoch_val)
            selection = epoch_val
        else:
            selection = epoch_train
        if selection < best_loss:
            best_loss = selection
            best_epoch = epoch
            best_params = [p.copy() for p in model.params()]
            since_best = 0
        else:
            since_best += 1
            if cfg.patience > 0 and since_best > cfg.patience:
                break

    for p, best in zip(model.params(), best_params):
        p[...] = best
    report = TrainReport(train_losses, val_losses, best_epoch, time.perf_counter() - start)
    return model, report


def predict(model: Model, fv: FeatureVector) -> np.ndarray:
    """Raw (unclamped) intensity prediction for one feature vector."""
    if fv.entries:
        items = sorted(fv.entries.items())
        idx = np.array([i for i, _ in items], dtype=np.int64)
        vals = np.array([w for _, w in items], dtype=np.float64)
    else:
        idx = np.empty(0, dtype=np.int64)
        vals = np.empty(0, dtype=np.float64)
    if idx.size and int(idx.max()) >= model.dim:
        raise DataError(f"feature index {int(idx.max())} out of range for model dim {model.dim}")
    if isinstance(model, LinearModel):
        return model.weights[:, idx] @ vals + model.biases
    pre = model.hidden_weights[:, idx] @ vals + model.hidden_bias
    act = np.maximum(pre, 0.0)
    return model.output_weights @ act + model.output_bias


def predict_batch(model: Model, features: Sequence[FeatureVector]) -> np.ndarray:
    """Per-sample predictions, order preserving."""
    return np.stack([predict(model, fv) for fv in features]) if features else np.empty((0, model.num_labels))


def gradient_check(
    model: Model,
    features: Sequence[FeatureVector],
    targets: Sequence[Sequence[float]] | np.ndarray,
    max_params: int = 200,
    step: float = 1e-5,
    seed: int = 0,
) -> float:
    """Max deviation of analytic MSE gradients from central finite differences.

    Deviations are measured relative to max(|analytic|, |numeric|, 1) on a
    seeded sample of at most ``max_params`` parameters.
    """
    y = np.asarray(targets, dtype=np.float64)
    if y.shape[0] == 0:
        raise DataError("gradient check needs a non-empty batch")
    x = to_matrix(features, model.dim)
    _, grads = _loss_and_grads(model, x, y, l2=0.0)

    sizes = [p.size for p in model.params()]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(total, size=min(max_params, total), replace=False)
    chosen.sort()

    max_err = 0.0
    for flat_idx in chosen:
        flat_idx = int(flat_idx)
        for p_idx, size in enumerate(sizes):
            if flat_idx < size:
                break
            flat_idx -= size
        param = model.params()[p_idx]
        pos = np.unravel_index(flat_idx, param.shape)
        original = param[pos]
        param[pos] = original + step
        loss_plus = mse_loss(model, x, y)
        param[pos] = original - step
        loss_minus = mse_loss(model, x, y)
        param[pos] = original
        numeric = (loss_plus - loss_minus) / (2.0 * step)
        analytic = grads[p_idx][pos]
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1.0)
        max_err = max(max_err, err)
    return max_err


def featurizer_fingerprint(cfg: FeaturizerConfig, idf: Sequence[float] | None) -> str:
    """Content hash of the featurizer state a model was trained with."""
    h = hashlib.sha256(json.dumps(cfg.to_dict(), sort_keys=True).encode("utf-8"))
    if idf is not None:
        h.update(struct.pack(f"<{len(idf)}d", *idf))
    return h.hexdigest()


@dataclass
class Checkpoint:
    """A trained model plus everything needed to reproduce its features."""

    backend: str
    model: Model
    labels: tuple[str, ...]
    featurizer: FeaturizerConfig
    idf: list[float] | None
    fingerprint: str = field(default="")

    def __post_init__(self) -> None:
        if not self.fingerprint:
            self.fingerprint = featurizer_fingerprint(self.featurizer, self.idf)


_ARRAY_FIELDS = {
    "linear": ("weights", "biases"),
    "mlp": ("hidden_weights", "hidden_bias", "output_weights", "output_bias"),
}


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    """Write a versioned binary checkpoint (JSON header + raw float64 arrays)."""
    arrays = ckpt.model.params()
    if ckpt.idf is not None:
        arrays = arrays + [np.asarray(ckpt.idf, dtype=np.float64)]
    names = list(_ARRAY_FIELDS[ckpt.backend]) + (["idf"] if ckpt.idf is not None else [])
    header = {
        "backend": ckpt.backend,
        "labels": list(ckpt.labels),
        "featurizer": ckpt.featurizer.to_dict(),
        "fingerprint": ckpt.fingerprint,
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in zip(names, arrays)],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with Path(path).open("wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for a in arrays:
            f.write(np.ascontiguousarray(a, dtype=np.float64).tobytes())


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    raw = path.read_bytes()
    if not raw.startswith(_CKPT_MAGIC):
        raise DataError(f"{path}: not a model checkpoint (bad magic)")
    offset = len(_CKPT_MAGIC)
    (header_len,) = struct.unpack_from("<Q", raw, offset)
    offset += 8
    header = json.loads(raw[offset : offset + header_len].decode("utf-8"))
    offset += header_len

    arrays: dict[str, np.ndarray] = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
        offset += count * 8
        arrays[spec["name"]] = arr

    backend = header["backend"]
    if backend == "linear":
        model: Model = LinearModel(arrays["weights"], arrays["biases"])
    elif backend == "mlp":
        model = MlpModel(
            arrays["hidden_weights"], arrays["hidden_bias"], arrays["output_weights"], arrays["output_bias"]
        )
    else:
        raise DataError(f"{path}: unknown backend {backend!r}")
    idf = arrays["idf"].tolist() if "idf" in arrays else None
    ckpt = Checkpoint(
        backend=backend,
        model=model,
        labels=tuple(header["labels"]),
        featurizer=FeaturizerConfig.from_dict(header["featurizer"]),
        idf=idf,
        fingerprint=header["fingerprint"],
    )
    expected = featurizer_fingerprint(ckpt.featurizer, ckpt.idf)
    if ckpt.fingerprint != expected:
        raise DataError(f"{path}: featurizer fingerprint mismatch (corrupt checkpoint)")
    return ckpt
