import numpy as np
import pytest

from refine_al import (
    FilterConfig,
    PoolState,
    StrategyContext,
    StrategyError,
    SyntheticSpec,
    TrainConfig,
    UsageError,
    filter_round,
    progressive_filter,
    subsample,
    synth_gaussian,
    train_head,
)
from refine_al.strategies import Strategy


class FixedBatch(Strategy):
    """Test stub: returns a fixed batch whenever it fits in the sample."""

    name = "fixed"
    requires_head = False

    def __init__(self, batch):
        self.batch = batch

    def _select(self, ctx, pool, b, rng):
        fixed = np.asarray(self.batch, dtype=np.int64)
        present = fixed[np.isin(fixed, pool)]
        if present.size >= b:
            return present[:b]
        pad = np.setdiff1d(pool, present)[: b - present.size]
        return np.concatenate([present, pad])


class Exploding(Strategy):
    name = "exploding"
    requires_head = False

    def _select(self, ctx, pool, b, rng):
        raise RuntimeError("boom")


@pytest.fixture(scope="module")
def ctx():
    x, y = synth_gaussian(SyntheticSpec(n_per_class=60, n_classes=4, n_dims=5,
                                        cluster_spread=1.5, seed=21))
    labeled = np.arange(0, 240, 12)
    unlabeled = np.setdiff1d(np.arange(240), labeled)
    head = train_head(x[labeled], y[labeled], TrainConfig(epochs=30, seed=2), 4)
    return StrategyContext(embeddings=x, pool_state=PoolState(labeled=labeled, unlabeled=unlabeled),
                           head=head, labeled_labels=y[labeled])


class TestSubsample:
    def test_ratio_size(self):
        rng = np.random.default_rng(0)
        out = subsample(np.arange(100), 0.4, 10, rng)
        assert out.size == 40
        assert np.unique(out).size == 40

    def test_floor_raised_to_batch_size(self):
        out = subsample(np.arange(20), 0.4, 10, np.random.default_rng(1))
        assert out.size == 10

    def test_capped_at_pool(self):
        out = subsample(np.arange(5), 0.9, 10, np.random.default_rng(2))
        np.testing.assert_array_equal(out, np.arange(5))

    def test_subset_and_sorted(self):
        pool = np.arange(50, 150, 3)
        out = subsample(pool, 0.5, 5, np.random.default_rng(3))
        assert np.isin(out, pool).all()
        assert np.all(np.diff(out) > 0)


class TestFilterRound:
    def test_union_of_disjoint_batches(self, ctx):
        cfg = FilterConfig(batch_size=2, rounds=1, batches_per_strategy=1,
                           sample_ratio=0.99)
        prev = ctx.pool_state.unlabeled[:8]
        ensemble = [FixedBatch(prev[[0, 1]]), FixedBatch(prev[[2, 3]])]
        pool, record = filter_round(prev, ensemble, cfg, ctx, (0, 0, 1))
        np.testing.assert_array_equal(pool, np.sort(prev[[0, 1, 2, 3]]))
        assert record.size == 4

    def test_dedupe(self, ctx):
        cfg = FilterConfig(batch_size=2, rounds=1, batches_per_strategy=1,
                           sample_ratio=0.99)
        prev = ctx.pool_state.unlabeled[:8]
        ensemble = [FixedBatch(prev[[0, 1]]), FixedBatch(prev[[0, 1]])]
        pool, _ = filter_round(prev, ensemble, cfg, ctx, (0, 0, 1))
        np.testing.assert_array_equal(pool, np.sort(prev[[0, 1]]))

    def test_counting_bound(self, ctx):
        cfg = FilterConfig(batch_size=10, rounds=1, batches_per_strategy=10)
        prev = ctx.pool_state.unlabeled
        pool, _ = filter_round(prev, ["random", "margin", "coreset"], cfg, ctx, (5, 0, 1))
        assert pool.size <= 300
        assert np.isin(pool, prev).all()

    def test_strategy_failure_names_the_batch(self, ctx):
        cfg = FilterConfig(batch_size=2, rounds=1, batches_per_strategy=3)
        with pytest.raises(StrategyError) as err:
            filter_round(ctx.pool_state.unlabeled, [Exploding()], cfg, ctx, (0, 0, 1))
        assert err.value.strategy == "exploding"
        assert err.value.batch_index in (0, 1, 2)


class TestProgressiveFilter:
    def test_nesting_and_floor(self, ctx):
        cfg = FilterConfig(batch_size=5, rounds=4, batches_per_strategy=2)
        pool, trace = progressive_filter(ctx.pool_state.unlabeled, ["random", "margin"],
                                         cfg, ctx, seed=7)
        sizes = [r.size for r in trace.rounds]
        assert sizes == sorted(sizes, reverse=True)
        assert pool.size >= cfg.min_pool

    def test_single_round_equals_filter_round(self, ctx):
        cfg = FilterConfig(batch_size=5, rounds=1, batches_per_strategy=2)
        pool, _ = progressive_filter(ctx.pool_state.unlabeled, ["margin"], cfg, ctx,
                                     seed=9, cycle=3)
        direct, _ = filter_round(ctx.pool_state.unlabeled, ["margin"], cfg, ctx, (9, 3, 1))
        np.testing.assert_array_equal(pool, direct)

    def test_shrinks_toward_but_not_below_b(self, ctx):
        cfg = FilterConfig(batch_size=5, rounds=10, batches_per_strategy=1)
        pool, _ = progressive_filter(ctx.pool_state.unlabeled, ["random"], cfg, ctx, seed=3)
        assert pool.size >= 5

    def test_determinism_across_thread_counts(self, ctx):
        import os
        pools = []
        for n_jobs in (1, 2, max(2, os.cpu_count() or 2)):
            cfg = FilterConfig(batch_size=5, rounds=3, batches_per_strategy=4,
                               n_jobs=n_jobs)
            pool, trace = progressive_filter(ctx.pool_state.unlabeled,
                                             ["random", "margin", "badge"],
                                             cfg, ctx, seed=11)
            pools.append((pool.tobytes(), [r.size for r in trace.rounds]))
        assert pools[0] == pools[1] == pools[2]

    def test_membership_provenance(self, ctx):
        cfg = FilterConfig(batch_size=5, rounds=3, batches_per_strategy=3)
        pool, trace = progressive_filter(ctx.pool_state.unlabeled, ["random", "margin"],
                                         cfg, ctx, seed=13)
        for record in trace.rounds:
            union = set()
            for batch in record.batches:
                union.update(batch.indices)
            assert len(union) == record.size
        last = trace.rounds[-1]
        final_union = set()
        for batch in last.batches:
            final_union.update(batch.indices)
        assert set(pool.tolist()) == final_union

    def test_small_pool_rejected(self, ctx):
        cfg = FilterConfig(batch_size=10)
        with pytest.raises(UsageError):
            progressive_filter(np.arange(5), ["random"], cfg, ctx, seed=0)

    def test_trace_roundtrips_to_dict(self, ctx):
        cfg = FilterConfig(batch_size=5, rounds=2, batches_per_strategy=2)
        _, trace = progressive_filter(ctx.pool_state.unlabeled, ["random"], cfg, ctx, seed=1)
        doc = trace.to_dict()
        assert doc["seed"] == 1
        assert all({"size", "batches"} <= set(r) for r in doc["rounds"])


class TestFilterConfig:
    def test_validation(self):
        with pytest.raises(UsageError):
            FilterConfig(batch_size=0)
        with pytest.raises(UsageError):
            FilterConfig(batch_size=1, rounds=0)
        with pytest.raises(UsageError):
            FilterConfig(batch_size=1, sample_ratio=1.0)
        with pytest.raises(UsageError):
            FilterConfig(batch_size=5, min_pool=3)

    def test_min_pool_defaults_to_b(self):
        assert FilterConfig(batch_size=7).min_pool == 7
