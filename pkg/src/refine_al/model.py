"""Trainable softmax-regression head and its derived per-instance quantities.

The head is a single linear layer trained with minibatch SGD on softmax
cross-entropy, L2 weight decay on the weights, and a cosine-annealed
learning rate. Everything downstream of it (margins, gradient embeddings,
Fisher blocks) is computed in double precision.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .errors import DataError, FormatError, UsageError

_REFH_MAGIC = b"REFH"
_REFH_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    minibatch: int = 64
    lr: float = 0.01
    weight_decay: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise UsageError("epochs must be >= 1")
        if self.minibatch < 1:
            raise UsageError("minibatch must be >= 1")
        if self.lr <= 0:
            raise UsageError("lr must be positive")
        if self.weight_decay < 0:
            raise UsageError("weight_decay must be non-negative")


def softmax(logits) -> np.ndarray:
    """Row-wise softmax with max-subtraction for stability."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class SoftmaxHead(BaseEstimator, ClassifierMixin):
    """Linear classification head over frozen features.

    Parameters mirror the training recipe: zero initialization, minibatch
    SGD, cosine annealing of the learning rate from ``lr`` down to 0 at
    the final epoch, weight decay on weights only. Training is a
    single-threaded deterministic loop given ``seed``.
    """

    def __init__(self, n_classes, epochs=200, minibatch=64, lr=0.01,
                 weight_decay=1e-4, seed=0):
        self.n_classes = n_classes
        self.epochs = epochs
        self.minibatch = minibatch
        self.lr = lr
        self.weight_decay = weight_decay
        self.seed = seed

    # -- training ---------------------------------------------------------

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] < 1:
            raise UsageError("training requires at least one labeled instance")
        if y.shape != (X.shape[0],):
            raise DataError(f"labels shape {y.shape} does not match {X.shape[0]} rows")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise DataError("labels outside [0, n_classes)")
        cfg = TrainConfig(self.epochs, self.minibatch, self.lr, self.weight_decay, self.seed)

        n, d = X.shape
        k = self.n_classes
        w = np.zeros((k, d))
        b = np.zeros(k)
        onehot = np.eye(k)[y]
        rng = np.random.default_rng(cfg.seed)

        for epoch in range(cfg.epochs):
            if cfg.epochs > 1:
                lr_e = 0.5 * cfg.lr * (1.0 + np.cos(np.pi * epoch / (cfg.epochs - 1)))
            else:
                lr_e = cfg.lr
            order = rng.permutation(n)
            for start in range(0, n, cfg.minibatch):
                idx = order[start:start + cfg.minibatch]
                xb, tb = X[idx], onehot[idx]
                p = softmax(xb @ w.T + b)
                resid = (p - tb) / idx.size
                gw = resid.T @ xb + cfg.weight_decay * w
                gb = resid.sum(axis=0)
                w -= lr_e * gw
                b -= lr_e * gb

        self.weights_ = w
        self.bias_ = b
        self.n_dims_ = d
        return self

    # -- inference --------------------------------------------------------

    def _check_fitted_dims(self, X):
        X = np.asarray(X, dtype=np.float64)
        if not hasattr(self, "weights_"):
            raise UsageError("head is not trained; call fit first")
        if X.ndim != 2 or X.shape[1] != self.n_dims_:
            raise DataError(f"expected features of dim {self.n_dims_}, got shape {X.shape}")
        return X

    def decision_function(self, X):
        X = self._check_fitted_dims(X)
        return X @ self.weights_.T + self.bias_

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def predict(self, X):
        # argmax ties break toward the lowest class index
        return np.argmax(self.predict_proba(X), axis=1)

    def score(self, X, y):
        return evaluate(self, X, y)

    # -- persistence ------------------------------------------------------

    def save(self, path):
        if not hasattr(self, "weights_"):
            raise UsageError("cannot save an untrained head")
        with open(path, "wb") as fh:
            fh.write(_REFH_MAGIC)
            fh.write(struct.pack("<HII", _REFH_VERSION, self.n_classes, self.n_dims_))
            fh.write(self.weights_.astype("<f8").tobytes())
            fh.write(self.bias_.astype("<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            if fh.read(4) != _REFH_MAGIC:
                raise FormatError(f"{path}: bad REFH magic")
            version, k, d = struct.unpack("<HII", fh.read(struct.calcsize("<HII")))
            if version != _REFH_VERSION:
                raise FormatError(f"{path}: unsupported REFH version {version}")
            payload = fh.read()
        if len(payload) != (k * d + k) * 8:
            raise FormatError(f"{path}: truncated REFH payload")
        head = cls(n_classes=k)
        head.weights_ = np.frombuffer(payload[: k * d * 8], dtype="<f8").reshape(k, d).copy()
        head.bias_ = np.frombuffer(payload[k * d * 8:], dtype="<f8").copy()
        head.n_dims_ = d
        return head


def train_head(features, labels, cfg: TrainConfig, n_classes: int) -> SoftmaxHead:
    """Train a fresh zero-initialized head on the given labeled view."""
    head = SoftmaxHead(n_classes=n_classes, epochs=cfg.epochs, minibatch=cfg.minibatch,
                       lr=cfg.lr, weight_decay=cfg.weight_decay, seed=cfg.seed)
    return head.fit(features, labels)


def margin_scores(probs) -> np.ndarray:
    """Per row: largest minus second-largest probability, in [0, 1]."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] < 2:
        raise UsageError("margin requires a probability matrix with K >= 2")
    if not np.allclose(p.sum(axis=1), 1.0, atol=1e-6):
        raise DataError("probability rows must sum to 1")
    k = p.shape[1]
    part = np.partition(p, (k - 2, k - 1), axis=1)
    return part[:, -1] - part[:, -2]


def gradient_embeddings(head: SoftmaxHead, features) -> np.ndarray:
    """BADGE-style embeddings: (p - onehot(argmax p)) outer x, flattened.

    This is the cross-entropy gradient wrt the last-layer weights under
    the pseudo-label, so confident instances map to near-zero rows.
    """
    X = head._check_fitted_dims(features)
    p = head.predict_proba(X)
    pseudo = np.argmax(p, axis=1)
    resid = p.copy()
    resid[np.arange(len(p)), pseudo] -= 1.0
    return (resid[:, :, None] * X[:, None, :]).reshape(len(p), -1)


def fisher_blocks(head: SoftmaxHead, features):
    """Per-instance logit-space Fisher blocks diag(p) - p p^T and ||x||^2.

    Consumers form last-layer Fisher contributions as ||x||^2 * F under
    the block-diagonal approximation.
    """
    X = head._check_fitted_dims(features)
    p = head.predict_proba(X)
    blocks = -p[:, :, None] * p[:, None, :]
    idx = np.arange(p.shape[1])
    blocks[:, idx, idx] += p
    sq_norms = np.einsum("ij,ij->i", X, X)
    return blocks, sq_norms


def evaluate(head: SoftmaxHead, features, labels) -> float:
    """Accuracy of argmax predictions; ties break to the lowest class."""
    X = head._check_fitted_dims(features)
    y = np.asarray(labels, dtype=np.int64)
    if y.size == 0:
        raise UsageError("cannot evaluate on an empty test set")
    if y.shape != (X.shape[0],):
        raise DataError("feature/label length mismatch")
    return float(np.mean(head.predict(X) == y))
