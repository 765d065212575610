"""Progressive filtering: iterative union-of-selected-batches refinement.

Each round, every strategy in the ensemble selects J batches, each from a
fresh uniform subsample of the current pool; the next pool is the union
of all selected batches. Pools therefore nest (C_r is a subset of
C_{r-1}) and shrink toward the batch size. A minimum-pool floor reverts
to the previous round's pool rather than truncating a union.

Each (round, strategy, batch) task owns a private rng stream derived from
(seed, round, strategy, batch), so results are bit-identical regardless
of how many worker threads execute the tasks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import StrategyError, UsageError
from .strategies import make_strategy


@dataclass(frozen=True)
class FilterConfig:
    batch_size: int
    rounds: int = 5
    batches_per_strategy: int = 10
    sample_ratio: float = 0.4
    min_pool: int = None  # defaults to batch_size
    n_jobs: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise UsageError("batch_size must be >= 1")
        if self.rounds < 1:
            raise UsageError("rounds must be >= 1")
        if self.batches_per_strategy < 1:
            raise UsageError("batches_per_strategy must be >= 1")
        if not 0.0 < self.sample_ratio < 1.0:
            raise UsageError("sample_ratio must lie in (0, 1)")
        if self.min_pool is None:
            object.__setattr__(self, "min_pool", self.batch_size)
        if self.min_pool < self.batch_size:
            raise UsageError("min_pool must be >= batch_size")


@dataclass
class BatchRecord:
    strategy: str
    batch_index: int
    indices: list


@dataclass
class RoundRecord:
    size: int
    batches: list = field(default_factory=list)


@dataclass
class FilterTrace:
    """Audit log: per-round pool sizes and every selected batch."""

    seed: int
    rounds: list = field(default_factory=list)

    def to_dict(self):
        return {
            "seed": self.seed,
            "rounds": [
                {
                    "size": r.size,
                    "batches": [
                        {"strategy": b.strategy, "j": b.batch_index, "indices": b.indices}
                        for b in r.batches
                    ],
                }
                for r in self.rounds
            ],
        }


def subsample(pool, alpha, b, rng) -> np.ndarray:
    """Uniform sample without replacement of size max(b, ceil(alpha*|pool|)),
    capped at the pool size."""
    pool = np.sort(np.asarray(pool, dtype=np.int64))
    if pool.size < 1:
        raise UsageError("cannot subsample an empty pool")
    size = min(pool.size, max(b, int(np.ceil(alpha * pool.size))))
    return np.sort(rng.choice(pool, size=size, replace=False))


def derive_rng(*parts) -> np.random.Generator:
    """Deterministic child stream keyed by a tuple of integers."""
    return np.random.default_rng([int(p) % (2 ** 63) for p in parts])


def _run_task(strategy, name, ctx, prev, cfg, seed_key, m, j):
    rng = derive_rng(*seed_key, m, j)
    sample = subsample(prev, cfg.sample_ratio, cfg.batch_size, rng)
    try:
        batch = strategy.select(ctx, sample, cfg.batch_size, rng)
    except Exception as exc:
        raise StrategyError(
            f"strategy '{name}' failed on batch j={j}: {exc}",
            strategy=name, batch_index=j,
        ) from exc
    return batch


def filter_round(prev, ensemble, cfg: FilterConfig, ctx, seed_key):
    """One union round. Returns (new pool, RoundRecord).

    ``seed_key`` is a tuple of ints identifying (seed, cycle, round); the
    per-task stream appends (strategy index, batch index).
    """
    prev = np.sort(np.asarray(prev, dtype=np.int64))
    if prev.size < cfg.batch_size:
        raise UsageError("previous pool smaller than the batch size")
    strategies = [make_strategy(s) for s in ensemble]
    names = [s.name for s in strategies]
    tasks = [(m, j) for m in range(len(strategies)) for j in range(cfg.batches_per_strategy)]

    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.n_jobs) as pool_exec:
            batches = list(pool_exec.map(
                lambda t: _run_task(strategies[t[0]], names[t[0]], ctx, prev, cfg,
                                    seed_key, t[0], t[1]),
                tasks,
            ))
    else:
        batches = [_run_task(strategies[m], names[m], ctx, prev, cfg, seed_key, m, j)
                   for m, j in tasks]

    union = np.unique(np.concatenate(batches))
    record = RoundRecord(size=int(union.size))
    for (m, j), batch in zip(tasks, batches):
        record.batches.append(BatchRecord(names[m], j, batch.tolist()))
    return union, record


def progressive_filter(unlabeled, ensemble, cfg: FilterConfig, ctx, seed, cycle=0):
    """Run up to ``cfg.rounds`` union rounds starting from the unlabeled pool.

    Early stop: a round whose union would fall below ``cfg.min_pool`` is
    discarded and the previous pool returned; refinement also stops once
    the current pool is no larger than the batch size.
    Returns (candidate pool, FilterTrace).
    """
    current = np.sort(np.asarray(unlabeled, dtype=np.int64))
    if current.size < cfg.batch_size:
        raise UsageError("unlabeled pool smaller than the batch size")
    trace = FilterTrace(seed=seed)
    for r in range(1, cfg.rounds + 1):
        if current.size <= cfg.batch_size:
            break
        nxt, record = filter_round(current, ensemble, cfg, ctx, (seed, cycle, r))
        if nxt.size < cfg.min_pool:
            break
        trace.rounds.append(record)
        current = nxt
    return current, trace
