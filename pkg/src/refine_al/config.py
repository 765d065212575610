"""TOML config parsing for the CLI.

Sections: ``dataset`` (paths or an inline ``dataset.synth`` table),
``model`` (training recipe), ``al`` (b, cycles, seed, method),
``filter``, ``ensemble`` (array of tables), ``coverage``, ``output``.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import data
from .coverage import KernelConfig
from .errors import FormatError, UsageError
from .filtering import FilterConfig
from .harness import RunConfig
from .model import TrainConfig
from .strategies import StrategySpec


def load_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise FormatError(f"{path}: invalid TOML: {exc}") from exc


def synthetic_spec_from(table: dict) -> data.SyntheticSpec:
    try:
        return data.SyntheticSpec(
            n_per_class=int(table["n_per_class"]),
            n_classes=int(table["n_classes"]),
            n_dims=int(table["n_dims"]),
            cluster_spread=float(table.get("cluster_spread", 1.0)),
            center_scale=float(table.get("center_scale", 5.0)),
            seed=int(table.get("seed", 0)),
        )
    except KeyError as exc:
        raise UsageError(f"synth spec is missing key {exc}")


def load_dataset(doc: dict, base_dir: Path):
    """Resolve the [dataset] section to (embeddings, labels, n_classes)."""
    ds = doc.get("dataset")
    if not ds:
        raise UsageError("config has no [dataset] section")
    if "synth" in ds:
        spec = synthetic_spec_from(ds["synth"])
        x, y = data.synth_gaussian(spec)
        n_classes = spec.n_classes
    else:
        try:
            emb_path = base_dir / ds["embeddings"]
            lab_path = base_dir / ds["labels"]
            n_classes = int(ds["n_classes"])
        except KeyError as exc:
            raise UsageError(f"[dataset] is missing key {exc}")
        x = data.load_embeddings(emb_path)
        y = data.load_labels(lab_path, n_classes)
    if x.shape[0] != y.size:
        raise UsageError("embeddings and labels disagree on instance count")
    if ds.get("normalize", True):
        x = data.normalize_features(x)
    return x, y, n_classes


def ensemble_from(doc: dict):
    specs = []
    for entry in doc.get("ensemble", []):
        if "strategy" not in entry:
            raise UsageError("each [[ensemble]] entry needs a 'strategy' key")
        specs.append(StrategySpec(kind=entry["strategy"],
                                  params=dict(entry.get("params", {}))))
    return tuple(specs)


def run_config_from(doc: dict) -> RunConfig:
    al = doc.get("al", {})
    if "b" not in al:
        raise UsageError("[al] section must set the batch size 'b'")
    b = int(al["b"])

    model = doc.get("model", {})
    train = TrainConfig(
        epochs=int(model.get("epochs", 200)),
        minibatch=int(model.get("minibatch", 64)),
        lr=float(model.get("lr", 0.01)),
        weight_decay=float(model.get("weight_decay", 1e-4)),
    )

    flt = doc.get("filter", {})
    filter_cfg = FilterConfig(
        batch_size=b,
        rounds=int(flt.get("rounds", 5)),
        batches_per_strategy=int(flt.get("batches_per_strategy", 10)),
        sample_ratio=float(flt.get("alpha", 0.4)),
        min_pool=int(flt["min_pool"]) if "min_pool" in flt else None,
        n_jobs=int(flt.get("n_jobs", 1)),
    )

    cov = doc.get("coverage", {})
    bandwidth = cov.get("bandwidth", "median")
    if isinstance(bandwidth, str) and bandwidth != "median":
        raise UsageError("coverage.bandwidth must be 'median' or a number")
    kernel = KernelConfig(kind=cov.get("kernel", "rbf"), bandwidth=bandwidth)

    return RunConfig(
        method=str(al.get("method", "refine")),
        batch_size=b,
        cycles=int(al.get("cycles", 20)),
        seed=int(al.get("seed", 0)),
        train=train,
        filter=filter_cfg,
        kernel=kernel,
        ensemble=ensemble_from(doc),
        uncertainty=bool(cov.get("uncertainty", True)),
        test_fraction=float(al.get("test_fraction", 0.2)),
    )


def load_labeled_indices(path, n_instances: int) -> np.ndarray:
    """One-column CSV of labeled instance indices (optional 'index' header)."""
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if lines and lines[0].lower() in ("index", "idx"):
        lines = lines[1:]
    try:
        idx = np.array([int(ln) for ln in lines], dtype=np.int64)
    except ValueError as exc:
        raise UsageError(f"{path}: non-integer index: {exc}") from exc
    if idx.size and (idx.min() < 0 or idx.max() >= n_instances):
        raise UsageError(f"{path}: labeled index out of range [0, {n_instances})")
    if np.unique(idx).size != idx.size:
        raise UsageError(f"{path}: duplicate labeled indices")
    return np.sort(idx)
