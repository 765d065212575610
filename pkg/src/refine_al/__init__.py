"""Ensemble active learning with progressive pool filtering and
coverage-based batch selection."""

from .coverage import KernelConfig, coverage_value, greedy_cover, refine_select
from .data import PoolState, SyntheticSpec, load_embeddings, load_labels, \
    normalize_features, save_embeddings, save_labels, synth_gaussian
from .errors import DataError, FormatError, RefineError, StrategyError, UsageError
from .filtering import FilterConfig, FilterTrace, filter_round, progressive_filter, subsample
from .harness import RunConfig, TrialResult, aulc, load_trial, relative_curve, \
    report, run_trial, save_trial, stratified_split, win_matrix
from .model import SoftmaxHead, TrainConfig, evaluate, fisher_blocks, \
    gradient_embeddings, margin_scores, softmax, train_head
from .strategies import StrategyContext, StrategySpec, make_strategy, strategy_names
from .theory import SyntheticStrategy, check_value_monotonicity, simulate_survival, \
    thm1_bound, thm2_bound

__version__ = "0.1.0"

__all__ = [
    "KernelConfig", "coverage_value", "greedy_cover", "refine_select",
    "PoolState", "SyntheticSpec", "load_embeddings", "load_labels",
    "normalize_features", "save_embeddings", "save_labels", "synth_gaussian",
    "DataError", "FormatError", "RefineError", "StrategyError", "UsageError",
    "FilterConfig", "FilterTrace", "filter_round", "progressive_filter", "subsample",
    "RunConfig", "TrialResult", "aulc", "load_trial", "relative_curve",
    "report", "run_trial", "save_trial", "stratified_split", "win_matrix",
    "SoftmaxHead", "TrainConfig", "evaluate", "fisher_blocks",
    "gradient_embeddings", "margin_scores", "softmax", "train_head",
    "StrategyContext", "StrategySpec", "make_strategy", "strategy_names",
    "SyntheticStrategy", "check_value_monotonicity", "simulate_survival",
    "thm1_bound", "thm2_bound",
]
