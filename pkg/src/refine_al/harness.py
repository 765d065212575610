"""Experiment loop, metrics, and result persistence.

A trial runs the pool-based batch AL protocol: label a random initial
pool of b instances, then for each cycle train the head, record test
accuracy, and query b more instances from the unlabeled pool with the
configured method. Methods:

  "refine"           progressive filtering + uncertainty-weighted coverage
  "<strategy>"       a single strategy applied to the raw unlabeled pool
  "filtered:<name>"  progressive filtering, then that strategy on C_R

Result JSON files are deterministic given (config, seed); wall-clock
timings go to a ``.times.json`` sidecar so reruns stay byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .coverage import KernelConfig, greedy_cover, refine_select
from .data import PoolState
from .errors import FormatError, UsageError
from .filtering import FilterConfig, derive_rng, progressive_filter
from .model import TrainConfig, train_head
from .strategies import StrategyContext, StrategySpec, make_strategy


def seed_from(*parts) -> int:
    """Stable 63-bit integer derived from a tuple of integers."""
    ss = np.random.SeedSequence([int(p) % (2 ** 63) for p in parts])
    return int(ss.generate_state(1, dtype=np.uint64)[0] % (2 ** 63))


@dataclass(frozen=True)
class RunConfig:
    method: str
    batch_size: int
    cycles: int = 20
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    filter: FilterConfig = None
    kernel: KernelConfig = field(default_factory=KernelConfig)
    ensemble: tuple = ()
    uncertainty: bool = True  # uncertainty-weight the final coverage stage
    test_fraction: float = 0.2

    def __post_init__(self):
        if self.batch_size < 1:
            raise UsageError("batch_size must be >= 1")
        if self.cycles < 1:
            raise UsageError("cycles must be >= 1")
        if not 0.0 < self.test_fraction < 1.0:
            raise UsageError("test_fraction must lie in (0, 1)")
        if self.filter is None:
            object.__setattr__(self, "filter", FilterConfig(batch_size=self.batch_size))
        if self._needs_filtering() and not self.ensemble:
            raise UsageError(f"method '{self.method}' needs a non-empty ensemble")

    def _needs_filtering(self):
        return self.method == "refine" or self.method.startswith("filtered:")

    def digest(self) -> str:
        payload = {
            "method": self.method,
            "batch_size": self.batch_size,
            "cycles": self.cycles,
            "train": asdict(self.train),
            "filter": {k: v for k, v in asdict(self.filter).items() if k != "n_jobs"},
            "kernel": asdict(self.kernel),
            "ensemble": [[s.kind, dict(sorted(s.params.items()))] for s in self.ensemble],
            "uncertainty": self.uncertainty,
            "test_fraction": self.test_fraction,
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class TrialResult:
    method: str
    seed: int
    config_digest: str
    accuracies: list
    aulc: float
    times: list = field(default_factory=list)

    def to_dict(self):
        # times are wall-clock and deliberately excluded; see module docstring
        return {
            "method": self.method,
            "seed": self.seed,
            "config_digest": self.config_digest,
            "accuracies": self.accuracies,
            "aulc": self.aulc,
        }


def stratified_split(labels, test_fraction, rng):
    """Seeded per-class holdout; returns (train_idx, test_idx), both sorted."""
    labels = np.asarray(labels, dtype=np.int64)
    test = []
    for c in np.unique(labels):
        members = np.where(labels == c)[0]
        n_test = int(round(test_fraction * members.size))
        if members.size > 1:
            n_test = min(max(n_test, 1), members.size - 1)
        else:
            n_test = 0
        if n_test:
            test.append(rng.choice(members, size=n_test, replace=False))
    test_idx = np.sort(np.concatenate(test)) if test else np.array([], dtype=np.int64)
    train_idx = np.setdiff1d(np.arange(labels.size), test_idx)
    return train_idx, test_idx


def _select_batch(cfg, ctx, unlabeled, cycle):
    rng = derive_rng(cfg.seed, 11, cycle)
    if cfg.method == "refine":
        pool_r, trace = progressive_filter(unlabeled, cfg.ensemble, cfg.filter, ctx,
                                           cfg.seed, cycle=cycle)
        if cfg.uncertainty:
            batch = refine_select(ctx, pool_r, cfg.batch_size, cfg.kernel)
        else:
            batch = greedy_cover(ctx.embeddings, pool_r, ctx.pool_state.labeled,
                                 cfg.batch_size, cfg.kernel)
        return batch, trace
    if cfg.method.startswith("filtered:"):
        strategy = make_strategy(cfg.method.split(":", 1)[1])
        pool_r, trace = progressive_filter(unlabeled, cfg.ensemble, cfg.filter, ctx,
                                           cfg.seed, cycle=cycle)
        return strategy.select(ctx, pool_r, cfg.batch_size, rng), trace
    strategy = make_strategy(cfg.method)
    return strategy.select(ctx, unlabeled, cfg.batch_size, rng), None


def run_trial(embeddings, labels, n_classes, cfg: RunConfig) -> TrialResult:
    """Run one full AL trial and return its learning curve and AULC."""
    X = np.asarray(embeddings)
    y = np.asarray(labels, dtype=np.int64)
    if X.shape[0] != y.size:
        raise UsageError("embeddings and labels disagree on instance count")

    train_idx, test_idx = stratified_split(y, cfg.test_fraction, derive_rng(cfg.seed, 1))
    if test_idx.size == 0:
        raise UsageError("test split is empty; dataset too small")
    budget = cfg.batch_size * (cfg.cycles + 1)
    if budget > train_idx.size:
        raise UsageError(f"budget {budget} exceeds the {train_idx.size} training instances")

    init_rng = derive_rng(cfg.seed, 2)
    labeled = np.sort(init_rng.choice(train_idx, size=cfg.batch_size, replace=False))
    unlabeled = np.setdiff1d(train_idx, labeled)

    accuracies = []
    times = []
    for cycle in range(cfg.cycles + 1):
        t0 = time.perf_counter()
        head_cfg = TrainConfig(cfg.train.epochs, cfg.train.minibatch, cfg.train.lr,
                               cfg.train.weight_decay, seed_from(cfg.seed, 7, cycle))
        head = train_head(X[labeled], y[labeled], head_cfg, n_classes)
        accuracies.append(head.score(X[test_idx], y[test_idx]))
        if cycle < cfg.cycles:
            state = PoolState(labeled=labeled, unlabeled=unlabeled, cycle=cycle)
            ctx = StrategyContext(embeddings=X, pool_state=state, head=head,
                                  labeled_labels=y[labeled])
            batch, _ = _select_batch(cfg, ctx, unlabeled, cycle)
            labeled = np.sort(np.concatenate([labeled, batch]))
            unlabeled = np.setdiff1d(unlabeled, batch)
        times.append(time.perf_counter() - t0)

    return TrialResult(method=cfg.method, seed=cfg.seed, config_digest=cfg.digest(),
                       accuracies=accuracies, aulc=aulc(accuracies), times=times)


# -- metrics --------------------------------------------------------------


def aulc(curve) -> float:
    """Area under the learning curve: the mean of the recorded accuracies."""
    curve = np.asarray(curve, dtype=np.float64)
    if curve.size == 0:
        raise UsageError("AULC of an empty curve is undefined")
    return float(curve.mean())


def relative_curve(results, baseline_results) -> np.ndarray:
    """Per-cycle mean accuracy difference vs. a baseline, in percentage points."""
    a = np.array([r.accuracies for r in results], dtype=np.float64)
    b = np.array([r.accuracies for r in baseline_results], dtype=np.float64)
    if a.ndim != 2 or a.shape != b.shape:
        raise UsageError("relative curves need matched trial counts and cycle counts")
    return 100.0 * (a.mean(axis=0) - b.mean(axis=0))


def win_matrix(results_by_method: dict) -> tuple:
    """Pairwise AULC win proportions over seed-paired trials.

    Returns (sorted method names, matrix) with W[i, j] the fraction of
    paired trials where method i's AULC beats method j's; ties count 0.5
    and the diagonal is fixed at 0.5.
    """
    names = sorted(results_by_method)
    seed_maps = {}
    seed_sets = []
    for name in names:
        by_seed = {r.seed: r.aulc for r in results_by_method[name]}
        if len(by_seed) != len(results_by_method[name]):
            raise UsageError(f"method '{name}' has duplicate seeds")
        seed_maps[name] = by_seed
        seed_sets.append(set(by_seed))
    if seed_sets and any(s != seed_sets[0] for s in seed_sets):
        raise UsageError("win matrix requires the same seed list for every method")
    seeds = sorted(seed_sets[0]) if seed_sets else []
    if not seeds:
        raise UsageError("win matrix needs at least one trial per method")

    w = np.full((len(names), len(names)), 0.5)
    for i, ni in enumerate(names):
        for j, nj in enumerate(names):
            if i == j:
                continue
            wins = sum(1.0 if seed_maps[ni][s] > seed_maps[nj][s]
                       else 0.5 if seed_maps[ni][s] == seed_maps[nj][s]
                       else 0.0
                       for s in seeds)
            w[i, j] = wins / len(seeds)
    return names, w


# -- persistence and reporting --------------------------------------------


def save_trial(result: TrialResult, out_dir) -> Path:
    """Write the trial JSON (atomically) plus a wall-time sidecar."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{result.method.replace(':', '-')}_{result.seed}"
    path = out_dir / f"{stem}.json"
    _atomic_write(path, json.dumps(result.to_dict(), sort_keys=True, indent=2) + "\n")
    _atomic_write(out_dir / f"{stem}.times.json",
                  json.dumps({"times": result.times}) + "\n")
    return path


def _atomic_write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def load_trial(path) -> TrialResult:
    try:
        doc = json.loads(Path(path).read_text())
        result = TrialResult(method=doc["method"], seed=doc["seed"],
                             config_digest=doc["config_digest"],
                             accuracies=doc["accuracies"], aulc=doc["aulc"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed trial result ({exc})") from exc
    if not result.accuracies or abs(aulc(result.accuracies) - result.aulc) > 1e-9:
        raise FormatError(f"{path}: stored AULC inconsistent with its curve")
    return result


_SCHEMA_HINT = ("expected one JSON file per trial with keys "
                "{method, seed, config_digest, accuracies, aulc}")


def report(results_dir, out_dir=None) -> dict:
    """Aggregate trial JSONs into curves.csv, relative.csv, winmatrix.csv,
    and summary.txt. Deterministic given the directory contents."""
    results_dir = Path(results_dir)
    out_dir = Path(out_dir) if out_dir else results_dir
    files = sorted(p for p in results_dir.glob("*.json")
                   if not p.name.endswith(".times.json") and not p.name.endswith(".tmp"))
    if not files:
        raise UsageError(f"no trial results in {results_dir}; {_SCHEMA_HINT}")

    by_method = {}
    for path in files:
        r = load_trial(path)
        by_method.setdefault(r.method, []).append(r)
    for rs in by_method.values():
        rs.sort(key=lambda r: r.seed)

    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = {}

    lines = ["cycle,strategy,mean_acc,stderr"]
    for name in sorted(by_method):
        curves = np.array([r.accuracies for r in by_method[name]], dtype=np.float64)
        mean = curves.mean(axis=0)
        se = curves.std(axis=0, ddof=0) / np.sqrt(curves.shape[0])
        for cycle in range(curves.shape[1]):
            lines.append(f"{cycle},{name},{mean[cycle]:.6f},{se[cycle]:.6f}")
    outputs["curves.csv"] = "\n".join(lines) + "\n"

    lines = ["cycle,strategy,gain_pp"]
    if "random" in by_method:
        base = by_method["random"]
        for name in sorted(by_method):
            if name == "random":
                continue
            if len(by_method[name]) == len(base):
                rel = relative_curve(by_method[name], base)
                for cycle, gain in enumerate(rel):
                    lines.append(f"{cycle},{name},{gain:.4f}")
    outputs["relative.csv"] = "\n".join(lines) + "\n"

    lines = []
    try:
        names, w = win_matrix(by_method)
        lines.append("strategy," + ",".join(names))
        for i, name in enumerate(names):
            lines.append(name + "," + ",".join(f"{w[i, j]:.4f}" for j in range(len(names))))
    except UsageError:
        lines.append("strategy")  # seeds not paired across methods
    outputs["winmatrix.csv"] = "\n".join(lines) + "\n"

    lines = ["method summary (AULC = mean of per-cycle test accuracies)"]
    for name in sorted(by_method):
        aulcs = np.array([r.aulc for r in by_method[name]])
        se = aulcs.std(ddof=0) / np.sqrt(aulcs.size)
        lines.append(f"  {name}: n={aulcs.size} mean_aulc={aulcs.mean():.6f} stderr={se:.6f}")
    outputs["summary.txt"] = "\n".join(lines) + "\n"

    for fname, text in outputs.items():
        _atomic_write(out_dir / fname, text)
    return outputs
