"""Coverage-based batch selection over a candidate pool.

Coverage of a target set by a covering set is the mean, over targets, of
the maximum RBF similarity to any covering point. The final batch is
built greedily: each step adds the candidate with the largest (optionally
uncertainty-weighted) marginal coverage gain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .errors import DataError, UsageError
from .model import margin_scores


@dataclass(frozen=True)
class KernelConfig:
    kind: str = "rbf"
    bandwidth: object = "median"  # "median" or a positive float

    def __post_init__(self):
        if self.kind != "rbf":
            raise UsageError(f"unsupported kernel kind: {self.kind}")
        if self.bandwidth != "median":
            if not isinstance(self.bandwidth, (int, float)) or self.bandwidth <= 0:
                raise UsageError("fixed bandwidth must be a positive number")


def median_bandwidth(X) -> float:
    """Median pairwise Euclidean distance of the rows of X."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        raise DataError("median bandwidth needs at least two points")
    sigma = float(np.median(pdist(X)))
    if sigma <= 0:
        raise DataError("all points identical; bandwidth is zero")
    return sigma


def resolve_bandwidth(X, cfg: KernelConfig) -> float:
    if cfg.bandwidth == "median":
        return median_bandwidth(X)
    return float(cfg.bandwidth)


def rbf_kernel(A, B, sigma) -> np.ndarray:
    """exp(-||a - b||^2 / (2 sigma^2)) for all pairs; values in (0, 1]."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape[1] != B.shape[1]:
        raise DataError("kernel operands must share the feature dimension")
    if sigma <= 0:
        raise DataError("bandwidth must be positive")
    aa = np.einsum("ij,ij->i", A, A)[:, None]
    bb = np.einsum("ij,ij->i", B, B)[None, :]
    d2 = np.maximum(aa + bb - 2.0 * (A @ B.T), 0.0)
    return np.exp(-d2 / (2.0 * sigma * sigma))


def coverage_value(X, targets, covered_by, sigma) -> float:
    """Mean over targets of the max similarity to the covering set."""
    targets = np.asarray(targets, dtype=np.int64)
    covered_by = np.asarray(covered_by, dtype=np.int64)
    if targets.size == 0:
        raise UsageError("coverage over an empty target set is undefined")
    if covered_by.size == 0:
        return 0.0
    sims = rbf_kernel(X[targets], X[covered_by], sigma)
    return float(sims.max(axis=1).mean())


def greedy_cover(X, candidates, labeled, b, cfg: KernelConfig, weights=None) -> np.ndarray:
    """Greedy weighted coverage maximization of the candidate set.

    Targets are the candidates themselves; the labeled set contributes to
    the initial best-similarity vector but is never selectable. Ties in
    the per-step argmax break toward the lowest candidate index.
    Returns the selected indices sorted ascending.
    """
    candidates = np.sort(np.asarray(candidates, dtype=np.int64))
    labeled = np.asarray(labeled, dtype=np.int64)
    n = candidates.size
    if b < 1 or n < b:
        raise UsageError(f"need 1 <= b <= |candidates|, got b={b}, n={n}")

    sigma = resolve_bandwidth(X[candidates], cfg) if n >= 2 else 1.0
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (n,):
            raise UsageError("weights must align with the candidate set")
        if np.any(w < 0):
            raise UsageError("weights must be non-negative")

    K = rbf_kernel(X[candidates], X[candidates], sigma)  # targets x candidates
    if labeled.size:
        best_sim = rbf_kernel(X[candidates], X[labeled], sigma).max(axis=1)
    else:
        best_sim = np.zeros(n)

    selected = []
    selectable = np.ones(n, dtype=bool)
    for _ in range(b):
        gains = (w[:, None] * np.maximum(K - best_sim[:, None], 0.0)).sum(axis=0)
        gains[~selectable] = -np.inf
        pick = int(np.argmax(gains))  # argmax returns the lowest index on ties
        selected.append(pick)
        selectable[pick] = False
        best_sim = np.maximum(best_sim, K[:, pick])
    return np.sort(candidates[np.array(selected, dtype=np.int64)])


def uncertainty_weights(probs) -> np.ndarray:
    """Per-instance weights 1 - margin, rescaled to mean 1.

    The fully-certain degenerate case (all margins 1) falls back to unit
    weights so coverage alone decides.
    """
    raw = 1.0 - margin_scores(probs)
    mean = raw.mean()
    if mean <= 1e-12:
        return np.ones_like(raw)
    return raw / mean


def refine_select(ctx, candidates, b, cfg: KernelConfig) -> np.ndarray:
    """Final-stage selection: uncertainty-weighted greedy coverage of C_R."""
    candidates = np.sort(np.asarray(candidates, dtype=np.int64))
    if ctx.head is None:
        raise UsageError("refine_select requires a trained head for uncertainty weights")
    probs = ctx.head.predict_proba(ctx.embeddings[candidates])
    w = uncertainty_weights(probs)
    return greedy_cover(ctx.embeddings, candidates, ctx.pool_state.labeled, b, cfg, weights=w)
