"""Closed-form survival bounds and Monte Carlo simulators for them.

The simulators replay the progressive-filtering control flow under a
probabilistic strategy model: per draw, an instance is present in the
subsample with probability alpha, and a present instance is selected
with its strategy/round-specific probability. Survival of a round means
being selected by at least one of the M*J draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError


@dataclass(frozen=True)
class SyntheticStrategy:
    """Probabilistic stand-in for a query strategy.

    ``select_prob(ids, round)`` returns the per-instance probability of
    being included in one selected batch, conditioned on presence in the
    subsample.
    """

    select_prob: callable

    @classmethod
    def constant(cls, p):
        return cls(select_prob=lambda ids, r: np.full(len(ids), float(p)))

    @classmethod
    def per_instance(cls, probs):
        probs = np.asarray(probs, dtype=np.float64)
        return cls(select_prob=lambda ids, r: probs[ids])


def thm1_bound(alpha, n_batches, p_max) -> float:
    """Lower bound on one-round survival of an instance some strategy
    selects with probability p_max: 1 - (1 - alpha*p_max)^J."""
    if not 0.0 < alpha <= 1.0:
        raise UsageError("alpha must lie in (0, 1]")
    if n_batches < 1:
        raise UsageError("n_batches must be >= 1")
    if not 0.0 <= p_max <= 1.0:
        raise UsageError("p_max must lie in [0, 1]")
    return 1.0 - (1.0 - alpha * p_max) ** n_batches


def thm2_bound(alpha, eps, n_strategies, n_batches, rounds) -> float:
    """Upper bound on R-round survival of an eps-uninformative instance:
    (1 - (1 - alpha*eps)^(M*J))^R."""
    if not 0.0 < alpha <= 1.0:
        raise UsageError("alpha must lie in (0, 1]")
    if not 0.0 <= eps <= 1.0:
        raise UsageError("eps must lie in [0, 1]")
    if n_strategies < 1 or n_batches < 1 or rounds < 1:
        raise UsageError("n_strategies, n_batches, and rounds must be >= 1")
    return (1.0 - (1.0 - alpha * eps) ** (n_strategies * n_batches)) ** rounds


@dataclass
class SurvivalEstimate:
    per_round: np.ndarray      # conditional per-round survival frequency
    per_round_se: np.ndarray
    cumulative: np.ndarray     # Pr(alive after round r)
    cumulative_se: np.ndarray


def simulate_survival(strategies, alpha, n_batches, rounds, trials, seed,
                      instance_id=0) -> SurvivalEstimate:
    """Monte Carlo survival frequencies of a single tracked instance.

    Per-round entries are conditional on having survived the previous
    rounds; standard errors are binomial at the effective trial counts.
    """
    if trials < 1:
        raise UsageError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    ids = np.array([instance_id])
    alive = np.ones(trials, dtype=bool)
    surv_counts = np.zeros(rounds, dtype=np.int64)
    at_risk = np.zeros(rounds, dtype=np.int64)
    for r in range(1, rounds + 1):
        probs = [float(s.select_prob(ids, r)[0]) for s in strategies]
        at_risk[r - 1] = alive.sum()
        # vectorized over trials: each trial runs M*J independent draws
        survived = np.zeros(trials, dtype=bool)
        for p in probs:
            draws_present = rng.random((trials, n_batches)) < alpha
            draws_select = rng.random((trials, n_batches)) < p
            survived |= (draws_present & draws_select).any(axis=1)
        alive &= survived
        surv_counts[r - 1] = alive.sum()

    with np.errstate(invalid="ignore", divide="ignore"):
        per_round = np.where(at_risk > 0, surv_counts / np.maximum(at_risk, 1), np.nan)
        per_round_se = np.sqrt(np.maximum(per_round * (1 - per_round), 0)
                               / np.maximum(at_risk, 1))
    cumulative = np.cumprod(np.nan_to_num(per_round, nan=0.0)) if rounds else np.array([])
    cum_freq = surv_counts / trials
    cum_se = np.sqrt(cum_freq * (1 - cum_freq) / trials)
    return SurvivalEstimate(per_round, per_round_se, cum_freq, cum_se)


@dataclass
class ValueTrajectory:
    per_round_mean: np.ndarray  # trial-averaged mean pool value, index 0 = C_0
    per_round_se: np.ndarray


def check_value_monotonicity(values, strategies, alpha, n_batches, rounds,
                             trials, seed) -> ValueTrajectory:
    """Trial-averaged mean pool value per round under monotone selection.

    Runs the full pool-level simulation: every instance survives a round
    if at least one of the M*J (presence, selection) draws hits it.
    Trials whose pool empties stop contributing from that round on.
    """
    values = np.asarray(values, dtype=np.float64)
    if trials < 1:
        raise UsageError("trials must be >= 1")
    n = values.size
    ids = np.arange(n)
    rng = np.random.default_rng(seed)

    sums = np.zeros(rounds + 1)
    sq_sums = np.zeros(rounds + 1)
    counts = np.zeros(rounds + 1, dtype=np.int64)
    base_mean = float(values.mean())
    sums[0] = base_mean * trials
    sq_sums[0] = base_mean ** 2 * trials
    counts[0] = trials

    alive = np.ones((trials, n), dtype=bool)
    for r in range(1, rounds + 1):
        survived = np.zeros((trials, n), dtype=bool)
        for s in strategies:
            probs = np.asarray(s.select_prob(ids, r), dtype=np.float64)
            for _ in range(n_batches):
                present = rng.random((trials, n)) < alpha
                selected = present & (rng.random((trials, n)) < probs)
                survived |= selected
        alive &= survived
        sizes = alive.sum(axis=1)
        nonempty = sizes > 0
        mean_v = (alive @ values)[nonempty] / sizes[nonempty]
        sums[r] = mean_v.sum()
        sq_sums[r] = (mean_v ** 2).sum()
        counts[r] = int(nonempty.sum())

    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
        var = np.maximum(sq_sums / np.maximum(counts, 1) - means ** 2, 0.0)
        se = np.sqrt(var / np.maximum(counts, 1))
    return ValueTrajectory(means, se)
