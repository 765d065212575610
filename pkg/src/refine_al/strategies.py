"""The ensemble of batch query strategies.

Every strategy maps (context, pool, b, rng) to exactly b distinct
instance indices drawn from the pool. Pools are processed in ascending
index order and ties always break toward the lowest instance index, so a
fixed rng stream reproduces the same batch regardless of how the caller
ordered the pool.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator

from .coverage import KernelConfig, greedy_cover, uncertainty_weights
from .errors import UsageError
from .kmeans import kmeans, kmeans_pp_seeds
from .model import fisher_blocks, gradient_embeddings, margin_scores


@dataclass(frozen=True)
class StrategyContext:
    """Read-only view handed to every strategy invocation."""

    embeddings: np.ndarray
    pool_state: object  # PoolState
    head: object = None  # trained SoftmaxHead, or None when nothing is labeled
    labeled_labels: np.ndarray = None  # labels aligned with pool_state.labeled


@dataclass(frozen=True)
class StrategySpec:
    kind: str
    params: dict = field(default_factory=dict)


class Strategy(BaseEstimator):
    """Base class enforcing the shared batch contract."""

    name = None
    requires_head = True

    def select(self, ctx, pool, b, rng):
        pool = np.sort(np.asarray(pool, dtype=np.int64))
        if np.unique(pool).size != pool.size:
            raise UsageError("pool contains duplicate indices")
        if b < 1:
            raise UsageError("batch size must be >= 1")
        if pool.size < b:
            raise UsageError(f"pool of size {pool.size} cannot yield a batch of {b}")
        if self.requires_head and ctx.head is None:
            raise UsageError(f"strategy '{self.name}' requires a trained head")
        batch = np.sort(np.asarray(self._select(ctx, pool, b, rng), dtype=np.int64))
        if batch.size != b or np.unique(batch).size != b or not np.isin(batch, pool).all():
            raise UsageError(f"strategy '{self.name}' violated the batch contract")
        return batch

    def _select(self, ctx, pool, b, rng):
        raise NotImplementedError


def _bottom_by_score(pool, scores, b):
    """b pool indices with the smallest scores; ties to the lowest index."""
    order = np.argsort(scores, kind="stable")
    return pool[order[:b]]


class RandomSampling(Strategy):
    name = "random"
    requires_head = False

    def _select(self, ctx, pool, b, rng):
        return rng.choice(pool, size=b, replace=False)


class MarginSampling(Strategy):
    name = "margin"

    def _select(self, ctx, pool, b, rng):
        probs = ctx.head.predict_proba(ctx.embeddings[pool])
        return _bottom_by_score(pool, margin_scores(probs), b)


class TypiClust(Strategy):
    """Cluster pool + labeled points and take each fresh cluster's most
    typical member (inverse mean distance to its nearest neighbors)."""

    name = "typiclust"
    requires_head = False

    def __init__(self, n_neighbors=20):
        self.n_neighbors = n_neighbors

    def _select(self, ctx, pool, b, rng):
        labeled = ctx.pool_state.labeled
        points = np.concatenate([pool, labeled])
        X = ctx.embeddings[points].astype(np.float64)
        k = min(labeled.size + b, points.size)
        assign, _ = kmeans(X, k, rng)

        n_pool = pool.size
        labeled_clusters = set(assign[n_pool:].tolist())
        typicality = self._typicality(X, assign)

        sizes = np.bincount(assign, minlength=k)
        fresh = [c for c in range(k) if c not in labeled_clusters and (assign[:n_pool] == c).any()]
        fresh.sort(key=lambda c: (-sizes[c], c))

        picks = []
        for c in fresh[:b]:
            members = np.where(assign[:n_pool] == c)[0]
            picks.append(members[np.argmax(typicality[members])])
        if len(picks) < b:
            # not enough label-free clusters; fall back to globally typical pool points
            rest = np.setdiff1d(np.arange(n_pool), np.array(picks, dtype=np.int64))
            order = rest[np.argsort(-typicality[rest], kind="stable")]
            picks.extend(order[: b - len(picks)].tolist())
        return pool[np.array(picks, dtype=np.int64)]

    def _typicality(self, X, assign):
        typ = np.empty(X.shape[0])
        for c in np.unique(assign):
            members = np.where(assign == c)[0]
            if members.size == 1:
                typ[members] = np.inf  # a singleton is typical by convention
                continue
            d = cdist(X[members], X[members])
            knn = min(self.n_neighbors, members.size - 1)
            d.sort(axis=1)
            typ[members] = 1.0 / d[:, 1:knn + 1].mean(axis=1)
        return typ


class Badge(Strategy):
    """k-means++ seeding over gradient embeddings; the seeds are the batch.

    The first seed is sampled proportional to squared embedding norm so
    confidently-predicted (near-zero-gradient) points do not seed.
    """

    name = "badge"

    def _select(self, ctx, pool, b, rng):
        g = gradient_embeddings(ctx.head, ctx.embeddings[pool])
        sq_norms = np.einsum("ij,ij->i", g, g)
        # zero-gradient (confident) points carry no seeding mass at all;
        # only fall back to them when informative points run out
        informative = np.where(sq_norms > 0)[0]
        if b <= informative.size < pool.size:
            seeds = informative[kmeans_pp_seeds(g[informative], b, rng,
                                                first_weights=sq_norms[informative])]
        else:
            seeds = kmeans_pp_seeds(g, b, rng, first_weights=sq_norms)
        return pool[seeds]


class Bait(Strategy):
    """Greedy maximization of the trace of the summed last-layer Fisher
    contributions ||x||^2 * (diag(p) - p p^T)."""

    name = "bait"

    def _select(self, ctx, pool, b, rng):
        blocks, sq_norms = fisher_blocks(ctx.head, ctx.embeddings[pool])
        gains = sq_norms * np.trace(blocks, axis1=1, axis2=2)
        picks = []
        selectable = np.ones(pool.size, dtype=bool)
        for _ in range(b):
            masked = np.where(selectable, gains, -np.inf)
            pick = int(np.argmax(masked))
            picks.append(pick)
            selectable[pick] = False
        return pool[np.array(picks, dtype=np.int64)]


class _PerturbationStrategy(Strategy):
    """Shared tail for AlfaMix/DropQuery: cluster the flip candidates and
    pad with the smallest-margin points when candidates are scarce."""

    def _select(self, ctx, pool, b, rng):
        probs = ctx.head.predict_proba(ctx.embeddings[pool])
        clean = np.argmax(probs, axis=1)
        candidate_mask = self._candidates(ctx, pool, clean, rng)
        cands = np.where(candidate_mask)[0]

        if cands.size >= b:
            Xc = ctx.embeddings[pool[cands]].astype(np.float64)
            assign, centers = kmeans(Xc, b, rng)
            picks = []
            for c in range(b):
                members = np.where(assign == c)[0]
                d = np.linalg.norm(Xc[members] - centers[c], axis=1)
                picks.append(cands[members[np.argmin(d)]])
            return pool[np.array(picks, dtype=np.int64)]

        picks = cands.tolist()
        rest = np.setdiff1d(np.arange(pool.size), cands)
        margins = margin_scores(probs[rest])
        order = rest[np.argsort(margins, kind="stable")]
        picks.extend(order[: b - len(picks)].tolist())
        return pool[np.array(picks, dtype=np.int64)]

    def _candidates(self, ctx, pool, clean, rng):
        raise NotImplementedError


class AlfaMix(_PerturbationStrategy):
    """Candidates are pool points whose prediction flips when the feature
    is mixed toward any labeled class anchor (per-class mean feature)."""

    name = "alfamix"

    def __init__(self, eps_mix=0.2):
        self.eps_mix = eps_mix

    def _candidates(self, ctx, pool, clean, rng):
        mask = np.zeros(pool.size, dtype=bool)
        if self.eps_mix <= 0 or ctx.labeled_labels is None or ctx.labeled_labels.size == 0:
            return mask
        Xp = ctx.embeddings[pool].astype(np.float64)
        labeled_X = ctx.embeddings[ctx.pool_state.labeled].astype(np.float64)
        for c in np.unique(ctx.labeled_labels):
            anchor = labeled_X[ctx.labeled_labels == c].mean(axis=0)
            mixed = (1.0 - self.eps_mix) * Xp + self.eps_mix * anchor
            mask |= ctx.head.predict(mixed) != clean
        return mask


class DropQuery(_PerturbationStrategy):
    """Candidates are pool points whose prediction flips under at least
    half of a set of random feature-dropout masks."""

    name = "dropquery"

    def __init__(self, n_masks=10, drop_rate=0.5):
        self.n_masks = n_masks
        self.drop_rate = drop_rate

    def _candidates(self, ctx, pool, clean, rng):
        Xp = ctx.embeddings[pool].astype(np.float64)
        flips = np.zeros(pool.size, dtype=np.int64)
        for _ in range(self.n_masks):
            keep = rng.random(Xp.shape) >= self.drop_rate
            flips += ctx.head.predict(Xp * keep) != clean
        return flips >= 0.5 * self.n_masks


class MaxHerding(Strategy):
    """Unweighted greedy coverage maximization of the pool."""

    name = "maxherding"
    requires_head = False

    def __init__(self, bandwidth="median"):
        self.bandwidth = bandwidth

    def _select(self, ctx, pool, b, rng):
        cfg = KernelConfig(bandwidth=self.bandwidth)
        return greedy_cover(ctx.embeddings, pool, ctx.pool_state.labeled, b, cfg)


class UHerding(Strategy):
    """Greedy coverage with multiplicative uncertainty (1 - margin) weights."""

    name = "uherding"

    def __init__(self, bandwidth="median"):
        self.bandwidth = bandwidth

    def _select(self, ctx, pool, b, rng):
        cfg = KernelConfig(bandwidth=self.bandwidth)
        probs = ctx.head.predict_proba(ctx.embeddings[pool])
        w = uncertainty_weights(probs)
        return greedy_cover(ctx.embeddings, pool, ctx.pool_state.labeled, b, cfg, weights=w)


class Coreset(Strategy):
    """Greedy k-center: repeatedly add the pool point farthest from the
    labeled set plus the points selected so far."""

    name = "coreset"
    requires_head = False

    def _select(self, ctx, pool, b, rng):
        Xp = ctx.embeddings[pool].astype(np.float64)
        labeled = ctx.pool_state.labeled
        picks = []
        if labeled.size:
            min_d = cdist(Xp, ctx.embeddings[labeled].astype(np.float64)).min(axis=1)
        else:
            center = Xp.mean(axis=0)
            first = int(np.argmax(np.linalg.norm(Xp - center, axis=1)))
            picks.append(first)
            min_d = np.linalg.norm(Xp - Xp[first], axis=1)
            min_d[first] = -np.inf
        while len(picks) < b:
            pick = int(np.argmax(min_d))
            picks.append(pick)
            min_d = np.minimum(min_d, np.linalg.norm(Xp - Xp[pick], axis=1))
            min_d[pick] = -np.inf
        return pool[np.array(picks, dtype=np.int64)]


_REGISTRY = {
    cls.name: cls
    for cls in (RandomSampling, MarginSampling, TypiClust, Badge, Bait,
                AlfaMix, DropQuery, MaxHerding, UHerding, Coreset)
}


def strategy_names():
    return sorted(_REGISTRY)


def make_strategy(spec) -> Strategy:
    """Instantiate a strategy from a StrategySpec, name, or (name, params)."""
    if isinstance(spec, Strategy):
        return spec
    if isinstance(spec, str):
        spec = StrategySpec(spec)
    if spec.kind not in _REGISTRY:
        raise UsageError(f"unknown strategy '{spec.kind}'; known: {strategy_names()}")
    cls = _REGISTRY[spec.kind]
    try:
        return cls(**spec.params)
    except TypeError as exc:
        raise UsageError(f"bad params for strategy '{spec.kind}': {exc}") from exc
