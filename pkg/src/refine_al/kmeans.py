"""Deterministic k-means utilities shared by several query strategies.

Kept in-tree (rather than sklearn) so the rng stream, tie-breaking, and
empty-cluster handling are bit-reproducible across platforms and thread
counts: k-means++ init draws from the caller's generator, Lloyd runs a
fixed 50 iterations or until centroid shift < 1e-6, and empty clusters
are re-seeded to the point farthest from its assigned centroid.
"""

from __future__ import annotations

import numpy as np

from .errors import UsageError

MAX_LLOYD_ITERS = 50
SHIFT_TOL = 1e-6


def _sq_dists_to(X, center):
    diff = X - center
    return np.einsum("ij,ij->i", diff, diff)


def kmeans_pp_seeds(X, k, rng, first_weights=None) -> np.ndarray:
    """k-means++ D^2 seeding; returns the k chosen row indices.

    ``first_weights`` biases the first draw (defaults to uniform); later
    draws are proportional to squared distance from the nearest chosen
    seed. Degenerate all-zero weights fall back to a uniform draw over
    the not-yet-chosen rows.
    """
    n = X.shape[0]
    if not 1 <= k <= n:
        raise UsageError(f"need 1 <= k <= n, got k={k}, n={n}")
    chosen = np.empty(k, dtype=np.int64)
    taken = np.zeros(n, dtype=bool)

    if first_weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(first_weights, dtype=np.float64).copy()
    chosen[0] = _weighted_draw(w, taken, rng)
    taken[chosen[0]] = True
    min_d2 = _sq_dists_to(X, X[chosen[0]])

    for t in range(1, k):
        w = np.where(taken, 0.0, min_d2)
        chosen[t] = _weighted_draw(w, taken, rng)
        taken[chosen[t]] = True
        min_d2 = np.minimum(min_d2, _sq_dists_to(X, X[chosen[t]]))
    return chosen


def _weighted_draw(weights, taken, rng):
    w = np.where(taken, 0.0, np.maximum(weights, 0.0))
    total = w.sum()
    if total <= 0:
        w = np.where(taken, 0.0, 1.0)
        total = w.sum()
    return int(rng.choice(len(w), p=w / total))


def kmeans(X, k, rng, max_iters=MAX_LLOYD_ITERS, tol=SHIFT_TOL):
    """Lloyd iteration with k-means++ init; returns (assignments, centers)."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise UsageError(f"need 1 <= k <= n, got k={k}, n={n}")
    centers = X[kmeans_pp_seeds(X, k, rng)].copy()

    assign = np.zeros(n, dtype=np.int64)
    for _ in range(max_iters):
        d2 = _pairwise_sq_dists(X, centers)
        assign = np.argmin(d2, axis=1)
        new_centers = centers.copy()
        own_d2 = d2[np.arange(n), assign].copy()
        for c in range(k):
            mask = assign == c
            if mask.any():
                new_centers[c] = X[mask].mean(axis=0)
            else:
                # re-seed to the globally farthest point from its centroid
                far = int(np.argmax(own_d2))
                new_centers[c] = X[far]
                assign[far] = c
                own_d2[far] = -1.0
        shift = np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max()
        centers = new_centers
        if shift < tol:
            break
    d2 = _pairwise_sq_dists(X, centers)
    assign = np.argmin(d2, axis=1)
    return assign, centers


def _pairwise_sq_dists(A, B):
    # (a - b)^2 = a.a + b.b - 2 a.b, clipped for numerical safety
    aa = np.einsum("ij,ij->i", A, A)[:, None]
    bb = np.einsum("ij,ij->i", B, B)[None, :]
    return np.maximum(aa + bb - 2.0 * (A @ B.T), 0.0)
