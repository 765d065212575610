"""The ``refine`` command-line interface.

Exit codes: 0 success, 2 usage/config error, 3 data/format error,
4 theory-verification failure.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import config as cfgmod
from . import data, theory
from .errors import DataError, FormatError, StrategyError, UsageError
from .filtering import progressive_filter
from .harness import report as make_report
from .harness import run_trial, save_trial, seed_from
from .model import TrainConfig, train_head
from .strategies import StrategyContext


def _exit_on_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except UsageError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except (DataError, FormatError, StrategyError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(3)
    return wrapper


@click.group()
def main():
    """Ensemble active learning with progressive pool filtering."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@_exit_on_errors
def run(config_path):
    """Run one AL trial from a TOML config and persist its result."""
    doc = cfgmod.load_toml(config_path)
    base_dir = Path(config_path).resolve().parent
    x, y, n_classes = cfgmod.load_dataset(doc, base_dir)
    run_cfg = cfgmod.run_config_from(doc)
    out_dir = base_dir / doc.get("output", {}).get("dir", "results")

    result = run_trial(x, y, n_classes, run_cfg)
    path = save_trial(result, out_dir)
    click.echo(f"method={result.method} seed={result.seed} "
               f"aulc={result.aulc:.6f} -> {path}")


@main.command("filter")
@click.option("--config", "config_path", required=True, type=click.Path())
@_exit_on_errors
def filter_cmd(config_path):
    """Refine the unlabeled pool once and write pool CSV + trace JSON."""
    doc = cfgmod.load_toml(config_path)
    base_dir = Path(config_path).resolve().parent
    x, y, n_classes = cfgmod.load_dataset(doc, base_dir)
    run_cfg = cfgmod.run_config_from(doc)
    if not run_cfg.ensemble:
        raise UsageError("filtering needs a non-empty [[ensemble]] list")
    out_dir = base_dir / doc.get("output", {}).get("dir", "results")
    out_dir.mkdir(parents=True, exist_ok=True)

    ds = doc.get("dataset", {})
    if "labeled_indices" in ds:
        labeled = cfgmod.load_labeled_indices(base_dir / ds["labeled_indices"], x.shape[0])
    else:
        labeled = np.array([], dtype=np.int64)
    unlabeled = np.setdiff1d(np.arange(x.shape[0]), labeled)

    head = None
    if labeled.size:
        train = run_cfg.train
        head_cfg = TrainConfig(train.epochs, train.minibatch, train.lr,
                               train.weight_decay, seed_from(run_cfg.seed, 7, 0))
        head = train_head(x[labeled], y[labeled], head_cfg, n_classes)
    state = data.PoolState(labeled=labeled, unlabeled=unlabeled, cycle=0)
    ctx = StrategyContext(embeddings=x, pool_state=state, head=head,
                          labeled_labels=y[labeled])

    pool, trace = progressive_filter(unlabeled, run_cfg.ensemble, run_cfg.filter,
                                     ctx, run_cfg.seed)
    pool_path = out_dir / "refined_pool.csv"
    pool_path.write_text("index\n" + "\n".join(str(i) for i in pool) + "\n")
    trace_path = out_dir / "filter_trace.json"
    trace_path.write_text(json.dumps(trace.to_dict(), indent=2) + "\n")
    click.echo(f"refined pool: {unlabeled.size} -> {pool.size} instances; "
               f"wrote {pool_path} and {trace_path}")


@main.command("verify-theory")
@click.option("--trials", default=20000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@_exit_on_errors
def verify_theory(trials, seed):
    """Monte Carlo checks of the three survival/value bounds."""
    rows = []
    ok = True

    def add(name, bound, empirical, se, passed):
        nonlocal ok
        ok &= passed
        rows.append((name, bound, empirical, se, "pass" if passed else "FAIL"))

    # Round-survival lower bound for a strongly-valued instance
    for n_strats in (1, 3):
        strategies = [theory.SyntheticStrategy.constant(0.9)]
        strategies += [theory.SyntheticStrategy.constant(0.2)] * (n_strats - 1)
        est = theory.simulate_survival(strategies, alpha=0.4, n_batches=10,
                                       rounds=5, trials=trials, seed=seed)
        bound = theory.thm1_bound(0.4, 10, 0.9)
        worst = np.nanmin(est.per_round - bound + 3 * est.per_round_se)
        add(f"round-survival lower bound (M={n_strats})", bound,
            float(np.nanmin(est.per_round)), float(np.nanmax(est.per_round_se)),
            worst >= 0)

    # R-round survival upper bound for an uninformative instance
    strategies = [theory.SyntheticStrategy.constant(0.05)] * 3
    est = theory.simulate_survival(strategies, alpha=0.4, n_batches=10,
                                   rounds=5, trials=trials, seed=seed + 1)
    bound = theory.thm2_bound(0.4, 0.05, 3, 10, 5)
    # one tracked instance survives M*J draws per round, so its survival
    # events already pool the three strategies
    emp = float(est.cumulative[-1])
    se = float(est.cumulative_se[-1])
    add("uninformative survival upper bound (R=5)", bound, emp, se,
        emp <= bound + 3 * max(se, np.sqrt(bound * (1 - bound) / trials)))

    # Mean pool value never decreases across rounds
    values = np.tile([0.0, 1.0], 50)
    probs = np.where(values > 0.5, 0.9, 0.1)
    strategies = [theory.SyntheticStrategy.per_instance(probs)] * 3
    traj = theory.check_value_monotonicity(values, strategies, alpha=0.4,
                                           n_batches=10, rounds=5,
                                           trials=min(trials, 5000), seed=seed + 2)
    diffs = np.diff(traj.per_round_mean)
    tol = 3 * np.sqrt(traj.per_round_se[1:] ** 2 + traj.per_round_se[:-1] ** 2)
    add("pool mean value non-decreasing", 0.0, float(np.nanmin(diffs)),
        float(np.nanmax(tol)), bool(np.all(diffs >= -tol)))

    click.echo(f"{'check':45s} {'bound':>9s} {'empirical':>10s} {'se':>9s} verdict")
    for name, bound, emp, se, verdict in rows:
        click.echo(f"{name:45s} {bound:9.4f} {emp:10.4f} {se:9.4f} {verdict}")
    if not ok:
        sys.exit(4)


@main.command("report")
@click.option("--dir", "results_dir", required=True, type=click.Path())
@click.option("--out", "out_dir", default=None, type=click.Path())
@_exit_on_errors
def report_cmd(results_dir, out_dir):
    """Aggregate trial JSONs into CSV tables and a text summary."""
    outputs = make_report(results_dir, out_dir)
    target = Path(out_dir) if out_dir else Path(results_dir)
    for name in outputs:
        click.echo(f"wrote {target / name}")


@main.command("synth")
@click.option("--spec", "spec_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@_exit_on_errors
def synth(spec_path, out_dir):
    """Generate a Gaussian-blob dataset and write REFB/REFL files."""
    doc = cfgmod.load_toml(spec_path)
    table = doc.get("synth", doc)
    spec = cfgmod.synthetic_spec_from(table)
    x, y = data.synth_gaussian(spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data.save_embeddings(out / "embeddings.refb", x)
    data.save_labels(out / "labels.refl", y, spec.n_classes)
    click.echo(f"wrote {x.shape[0]}x{x.shape[1]} embeddings and labels to {out}")


if __name__ == "__main__":
    main()
