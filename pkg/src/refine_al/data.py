"""Dataset ingestion, validation, and synthetic fixture generation.

Embeddings are plain float32 numpy arrays of shape (n_instances, n_dims);
labels are int64 arrays of class indices in [0, n_classes). Two binary
formats are canonical for tests (REFB for embeddings, REFL for labels),
with CSV fallbacks for interop.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError

_REFB_MAGIC = b"REFB"
_REFL_MAGIC = b"REFL"
_VERSION = 1


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters for the Gaussian-blob fixture generator."""

    n_per_class: int
    n_classes: int
    n_dims: int
    cluster_spread: float = 1.0
    center_scale: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.n_per_class < 1 or self.n_classes < 1 or self.n_dims < 1:
            raise DataError("n_per_class, n_classes, and n_dims must all be >= 1")
        if self.cluster_spread <= 0 or self.center_scale <= 0:
            raise DataError("cluster_spread and center_scale must be positive")


@dataclass(frozen=True)
class PoolState:
    """Disjoint labeled/unlabeled index sets at a given cycle."""

    labeled: np.ndarray
    unlabeled: np.ndarray
    cycle: int = 0

    def __post_init__(self):
        labeled = np.sort(np.asarray(self.labeled, dtype=np.int64))
        unlabeled = np.sort(np.asarray(self.unlabeled, dtype=np.int64))
        object.__setattr__(self, "labeled", labeled)
        object.__setattr__(self, "unlabeled", unlabeled)
        if np.intersect1d(labeled, unlabeled).size:
            raise DataError("labeled and unlabeled index sets must be disjoint")
        for name, idx in (("labeled", labeled), ("unlabeled", unlabeled)):
            if idx.size and (idx.min() < 0 or np.unique(idx).size != idx.size):
                raise DataError(f"{name} indices must be non-negative and distinct")
        if self.cycle < 0:
            raise DataError("cycle must be >= 0")


def validate_embeddings(values) -> np.ndarray:
    """Check shape and finiteness of an embedding matrix."""
    m = np.asarray(values)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DataError(f"embedding matrix must be 2-D and non-empty, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DataError("embedding matrix contains NaN or Inf")
    return m


def validate_labels(labels, n_classes: int) -> np.ndarray:
    y = np.asarray(labels, dtype=np.int64)
    if y.ndim != 1 or y.size < 1:
        raise DataError("label vector must be 1-D and non-empty")
    if n_classes < 1:
        raise DataError("n_classes must be >= 1")
    if y.min() < 0 or y.max() >= n_classes:
        raise DataError(f"labels must lie in [0, {n_classes}), got range [{y.min()}, {y.max()}]")
    return y


def save_embeddings(path, values) -> None:
    """Write a REFB file: magic | u16 version | u64 N | u32 D | N*D f32 LE."""
    m = validate_embeddings(values).astype("<f4", copy=False)
    n, d = m.shape
    with open(path, "wb") as fh:
        fh.write(_REFB_MAGIC)
        fh.write(struct.pack("<HQI", _VERSION, n, d))
        fh.write(np.ascontiguousarray(m).tobytes())


def load_embeddings(path) -> np.ndarray:
    """Read embeddings from a REFB file or a headerless CSV fallback."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
        if head != _REFB_MAGIC:
            return _load_embeddings_csv(path)
        meta = fh.read(struct.calcsize("<HQI"))
        if len(meta) < struct.calcsize("<HQI"):
            raise FormatError(f"{path}: truncated REFB header")
        version, n, d = struct.unpack("<HQI", meta)
        if version != _VERSION:
            raise FormatError(f"{path}: unsupported REFB version {version}")
        payload = fh.read()
    expected = n * d * 4
    if len(payload) != expected:
        raise FormatError(f"{path}: payload has {len(payload)} bytes, header implies {expected}")
    m = np.frombuffer(payload, dtype="<f4").reshape(n, d)
    if not np.all(np.isfinite(m)):
        raise DataError(f"{path}: embedding payload contains NaN or Inf")
    return validate_embeddings(m)


def _load_embeddings_csv(path) -> np.ndarray:
    try:
        m = np.loadtxt(path, delimiter=",", dtype=np.float32, ndmin=2)
    except ValueError as exc:
        raise FormatError(f"{path}: not a REFB file and CSV parsing failed: {exc}") from exc
    if m.size == 0:
        raise FormatError(f"{path}: empty embeddings CSV")
    if not np.all(np.isfinite(m)):
        raise DataError(f"{path}: embeddings contain NaN or Inf")
    return validate_embeddings(m)


def save_labels(path, labels, n_classes: int) -> None:
    """Write a REFL file: magic | u16 version | u64 N | u32 K | N u32 LE."""
    y = validate_labels(labels, n_classes)
    with open(path, "wb") as fh:
        fh.write(_REFL_MAGIC)
        fh.write(struct.pack("<HQI", _VERSION, y.size, n_classes))
        fh.write(y.astype("<u4").tobytes())


def load_labels(path, n_classes: int) -> np.ndarray:
    """Read labels from a REFL file or a one-column CSV (optional header)."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
        if head != _REFL_MAGIC:
            return _load_labels_csv(path, n_classes)
        meta = fh.read(struct.calcsize("<HQI"))
        if len(meta) < struct.calcsize("<HQI"):
            raise FormatError(f"{path}: truncated REFL header")
        version, n, k = struct.unpack("<HQI", meta)
        if version != _VERSION:
            raise FormatError(f"{path}: unsupported REFL version {version}")
        payload = fh.read()
    if len(payload) != n * 4:
        raise FormatError(f"{path}: payload has {len(payload)} bytes, header implies {n * 4}")
    if k != n_classes:
        raise DataError(f"{path}: file declares K={k}, caller expects K={n_classes}")
    return validate_labels(np.frombuffer(payload, dtype="<u4").astype(np.int64), n_classes)


def _load_labels_csv(path, n_classes: int) -> np.ndarray:
    lines = [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]
    if lines and lines[0].lower() == "label":
        lines = lines[1:]
    if not lines:
        raise DataError(f"{path}: no labels found")
    try:
        y = np.array([int(ln) for ln in lines], dtype=np.int64)
    except ValueError as exc:
        raise DataError(f"{path}: non-integer label: {exc}") from exc
    return validate_labels(y, n_classes)


def normalize_features(values) -> np.ndarray:
    """Rescale every row to unit L2 norm. Zero rows are rejected."""
    m = validate_embeddings(values).astype(np.float64)
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms < 1e-12):
        bad = int(np.argmin(norms))
        raise DataError(f"row {bad} has (near-)zero norm and cannot be normalized")
    return (m / norms[:, None]).astype(values.dtype if hasattr(values, "dtype") else np.float64)


def synth_gaussian(spec: SyntheticSpec):
    """Generate isotropic Gaussian blobs, one per class, reproducibly.

    Class centers are drawn on a pseudo-random direction and scaled to
    magnitude ``center_scale``; points get N(0, cluster_spread^2) noise.
    Returns ``(embeddings, labels)`` with labels sorted by class.
    """
    rng = np.random.default_rng(spec.seed)
    directions = rng.standard_normal((spec.n_classes, spec.n_dims))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    centers = spec.center_scale * directions / norms
    blobs = []
    for c in range(spec.n_classes):
        noise = rng.standard_normal((spec.n_per_class, spec.n_dims))
        blobs.append(centers[c] + spec.cluster_spread * noise)
    x = np.vstack(blobs).astype(np.float32)
    y = np.repeat(np.arange(spec.n_classes, dtype=np.int64), spec.n_per_class)
    return x, y
