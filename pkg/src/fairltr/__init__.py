"""Fairness-constrained learning to rank with stochastic ranking policies.

Trains Plackett-Luce ranking policies by policy gradient to maximize a
ranking utility (NDCG, DCG, ERR, average relevant rank) minus a weighted
exposure-disparity penalty, with individual (merit-pairwise) and group
(exposure-per-merit ratio) fairness notions, plus a linear-programming
post-processing baseline and a top-1 softmax baseline.
"""
from .data import (
    Dataset,
    Document,
    Query,
    convert_binary_table,
    generate_simulated,
    load_dataset,
    parse_letor,
    save_dataset,
    split_dataset,
)
from .fairness import (
    DisparityConfig,
    MeritFunction,
    exposure_of_policy,
    exposure_of_ranking,
    group_disparity,
    individual_disparity,
)
from .metrics import UtilityMetric, dcg, err, expected_utility, ndcg, position_bias
from .policy import (
    LinearModel,
    MLP1Model,
    argmax_ranking,
    init_model,
    load_model,
    ranking_logprob,
    sample_rankings,
    save_model,
)
from .trainer import EvalSummary, RunRecord, TrainConfig, evaluate, train
from .baselines import (
    enumerate_policy_expectations,
    fit_linear_regression,
    solve_fair_lp,
    train_top1_baseline,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset", "Document", "Query", "convert_binary_table",
    "generate_simulated", "load_dataset", "parse_letor", "save_dataset",
    "split_dataset",
    "DisparityConfig", "MeritFunction", "exposure_of_policy",
    "exposure_of_ranking", "group_disparity", "individual_disparity",
    "UtilityMetric", "dcg", "err", "expected_utility", "ndcg", "position_bias",
    "LinearModel", "MLP1Model", "argmax_ranking", "init_model", "load_model",
    "ranking_logprob", "sample_rankings", "save_model",
    "EvalSummary", "RunRecord", "TrainConfig", "evaluate", "train",
    "enumerate_policy_expectations", "fit_linear_regression", "solve_fair_lp",
    "train_top1_baseline",
    "__version__",
]
