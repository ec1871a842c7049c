"""Softmax head, Adam optimizer, metrics, decision-level fusion, checkpoints.

The classifier is a two-class softmax over fused features, trained with
mini-batch Adam. Everything is deterministic for a fixed seed: weight
init, per-epoch shuffling, and therefore the final parameters and
metrics.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils import check_array, check_X_y

from .fusion import STRATEGIES

PROB_FLOOR = 1e-12

_CKPT_MAGIC = b"QFSC"
_CKPT_VERSION = 1


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, numerically stabilized by max subtraction."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def cross_entropy(probs, y, positive_only: bool = False) -> float:
    """Mean binary cross-entropy of predicted dealer probabilities.

    ``probs`` may be a vector of class-1 probabilities or an (n, 2) softmax
    output. Probabilities are clamped to [1e-12, 1 - 1e-12] so the loss is
    always finite. ``positive_only=True`` drops the negative-class term,
    i.e. mean of -c * log(p); kept as a documented alternative, not the
    default.
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim == 2:
        p = p[:, 1]
    c = np.asarray(y, dtype=np.float64)
    p = np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)
    if positive_only:
        return float(np.mean(-c * np.log(p)))
    return float(np.mean(-(c * np.log(p) + (1.0 - c) * np.log(1.0 - p))))


def loss_and_grads(W: np.ndarray, b: np.ndarray, X: np.ndarray, y: np.ndarray):
    """Full-batch loss and analytic gradients of mean cross-entropy.

    Returns (loss, {"W": dW, "b": db}); d(logits) = (softmax - onehot)/n.
    """
    n = X.shape[0]
    logits = X @ W + b
    P = softmax(logits)
    loss = cross_entropy(P, y)
    dlogits = P.copy()
    dlogits[np.arange(n), np.asarray(y, dtype=int)] -= 1.0
    dlogits /= n
    return loss, {"W": X.T @ dlogits, "b": dlogits.sum(axis=0)}


class Adam:
    """Adam with bias correction; moment state is keyed by parameter name."""

    def __init__(self, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999,
                 epsilon: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """One in-place update of every parameter from its gradient."""
        self.t += 1
        for name, p in params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / (1.0 - self.beta1 ** self.t)
            v_hat = self.v[name] / (1.0 - self.beta2 ** self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)


@dataclass
class TrainConfig:
    """Optimizer and loop settings; defaults mirror the reference setup."""

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 10
    epochs: int = 50
    seed: int = 0
    threshold: float = 0.5

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not (0 <= self.threshold <= 1):
            raise ValueError("threshold must lie in [0, 1]")


class SoftmaxClassifier(BaseEstimator, ClassifierMixin):
    """Two-class softmax head trained with seeded mini-batch Adam.

    Estimator parameters mirror TrainConfig; ``fit`` initializes
    W ~ uniform[-0.01, 0.01] (seeded) and b = 0, then runs ``epochs``
    passes with a fresh seeded shuffle per epoch. ``loss_curve_`` records
    the full-train-set loss after each epoch.
    """

    def __init__(self, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999,
                 epsilon: float = 1e-8, batch_size: int = 10, epochs: int = 50,
                 seed: int = 0, threshold: float = 0.5):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.threshold = threshold

    def _train_config(self) -> TrainConfig:
        return TrainConfig(lr=self.lr, beta1=self.beta1, beta2=self.beta2,
                           epsilon=self.epsilon, batch_size=self.batch_size,
                           epochs=self.epochs, seed=self.seed, threshold=self.threshold)

    def fit(self, X, y):
        cfg = self._train_config()
        X, y = check_X_y(X, y)
        y = np.asarray(y, dtype=np.int64)
        if not set(np.unique(y)) <= {0, 1}:
            raise ValueError("labels must be 0 or 1")
        n, d = X.shape
        if n == 0:
            raise ValueError("empty training set")
        rng = np.random.default_rng(cfg.seed)
        self.W_ = rng.uniform(-0.01, 0.01, size=(d, 2))
        self.b_ = np.zeros(2)
        self.opt_ = Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon)
        self.loss_curve_ = []
        order = np.arange(n)
        for _ in range(cfg.epochs):
            rng.shuffle(order)
            for start in range(0, n, cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                _, grads = loss_and_grads(self.W_, self.b_, X[idx], y[idx])
                self.opt_.step({"W": self.W_, "b": self.b_}, grads)
            epoch_loss, _ = loss_and_grads(self.W_, self.b_, X, y)
            self.loss_curve_.append(epoch_loss)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = d
        return self

    def _check_fitted(self):
        if not hasattr(self, "W_"):
            raise NotFittedError("fit the classifier before predicting")

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        X = check_array(X)
        if X.shape[1] != self.W_.shape[0]:
            raise ValueError(
                f"expected {self.W_.shape[0]} features, got {X.shape[1]}"
            )
        return softmax(X @ self.W_ + self.b_)

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= self.threshold).astype(np.int64)


@dataclass
class Metrics:
    """Binary-classification metrics plus the confusion counts behind them."""

    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int, tn: int) -> "Metrics":
        """Metrics from confusion counts; undefined ratios become 0.0."""
        total = tp + fp + fn + tn
        accuracy = (tp + tn) / total if total else 0.0
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return cls(accuracy, precision, recall, f1, tp, fp, fn, tn)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
        }

    def format_table(self) -> str:
        """Aligned plain-text rendering, one metric per row."""
        rows = [
            ("accuracy", f"{self.accuracy:.4f}"),
            ("precision", f"{self.precision:.4f}"),
            ("recall", f"{self.recall:.4f}"),
            ("f1", f"{self.f1:.4f}"),
            ("tp/fp/fn/tn", f"{self.tp}/{self.fp}/{self.fn}/{self.tn}"),
        ]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def compute_metrics(y_true, y_pred) -> Metrics:
    """Confusion counts and derived metrics; class 1 is the positive class."""
    t = np.asarray(y_true, dtype=np.int64)
    p = np.asarray(y_pred, dtype=np.int64)
    if t.shape != p.shape:
        raise ValueError("y_true and y_pred must have the same length")
    tp = int(np.sum((t == 1) & (p == 1)))
    fp = int(np.sum((t == 0) & (p == 1)))
    fn = int(np.sum((t == 1) & (p == 0)))
    tn = int(np.sum((t == 0) & (p == 0)))
    return Metrics.from_counts(tp, fp, fn, tn)


def evaluate(clf: SoftmaxClassifier, X, y, threshold: float | None = None) -> Metrics:
    """Threshold the classifier's dealer probability and score against y."""
    if threshold is None:
        threshold = clf.threshold
    probs = clf.predict_proba(X)[:, 1]
    preds = (probs >= threshold).astype(np.int64)
    return compute_metrics(y, preds)


DECISION_WEIGHTS = (0.25, 0.25, 0.25, 0.25)


def decision_fuse(channel_probs, weights=None):
    """Linear opinion pool over per-modality dealer probabilities.

    ``channel_probs`` is a sequence of k probability arrays (or scalars),
    one per single-modality model; NaN entries mark records where that
    modality is missing and contribute a neutral 0.5 while keeping their
    weight. Weights must be nonnegative and sum to 1 (default: uniform).
    """
    stacked = np.asarray(channel_probs, dtype=np.float64)
    if stacked.ndim == 1:
        stacked = stacked[:, None]
        scalar = True
    elif stacked.ndim == 2:
        scalar = False
    else:
        raise ValueError("channel_probs must be a sequence of scalars or 1-D arrays")
    k = stacked.shape[0]
    if weights is None:
        w = np.full(k, 1.0 / k)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (k,) or np.any(w < 0) or abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValueError("bad weights: need k nonnegative reals summing to 1")
    filled = np.where(np.isnan(stacked), 0.5, stacked)
    fused = w @ filled
    return float(fused[0]) if scalar else fused


def save_checkpoint(path, clf: SoftmaxClassifier, strategy: str = "concat") -> None:
    """Write a fitted classifier as header + little-endian float32 block.

    Header: magic, version, input dim, class count, fusion-strategy id,
    seed; then W (row-major) and b as 32-bit floats.
    """
    clf._check_fitted()
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    d, n_classes = clf.W_.shape
    header = struct.pack(
        "<4sIIIIq", _CKPT_MAGIC, _CKPT_VERSION, d, n_classes,
        STRATEGIES.index(strategy), int(clf.seed),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(clf.W_.astype("<f4").tobytes())
        fh.write(clf.b_.astype("<f4").tobytes())


def load_checkpoint(path) -> SoftmaxClassifier:
    """Read a checkpoint back into a ready-to-predict classifier.

    The fusion strategy recorded in the header is exposed as
    ``clf.strategy_``.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    head_size = struct.calcsize("<4sIIIIq")
    if len(raw) < head_size:
        raise ValueError("not a checkpoint file: truncated header")
    magic, version, d, n_classes, strategy_id, seed = struct.unpack(
        "<4sIIIIq", raw[:head_size]
    )
    if magic != _CKPT_MAGIC:
        raise ValueError("not a checkpoint file: bad magic")
    if version != _CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    if strategy_id >= len(STRATEGIES):
        raise ValueError(f"unknown strategy id {strategy_id}")
    expected = head_size + 4 * (d * n_classes + n_classes)
    if len(raw) != expected:
        raise ValueError("not a checkpoint file: bad parameter block size")
    block = np.frombuffer(raw[head_size:], dtype="<f4").astype(np.float64)
    clf = SoftmaxClassifier(seed=int(seed))
    clf.W_ = block[: d * n_classes].reshape(d, n_classes)
    clf.b_ = block[d * n_classes :]
    clf.classes_ = np.array(range(n_classes))
    clf.n_features_in_ = d
    clf.strategy_ = STRATEGIES[strategy_id]
    return clf
