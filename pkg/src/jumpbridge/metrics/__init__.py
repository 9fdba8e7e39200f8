from .distances import (
    correlation_matrix,
    ecdf,
    ecdf_ks,
    increments,
    qq_quantiles,
    quadratic_variation,
    quantile_table,
    wasserstein2_1d,
)
from .gru import GruLayer, GruNet, gru_cell, gru_cell_backward
from .report import QQ_LEVELS, MetricReport, evaluate, write_tables
from .scores import (
    NetConfig,
    ScoreSummary,
    discriminative_score,
    discriminative_scores,
    predictive_score,
    predictive_scores,
    score_from_accuracy,
    train_discriminator,
    train_predictor,
)

__all__ = [
    "GruLayer",
    "GruNet",
    "MetricReport",
    "NetConfig",
    "QQ_LEVELS",
    "ScoreSummary",
    "correlation_matrix",
    "discriminative_score",
    "discriminative_scores",
    "ecdf",
    "ecdf_ks",
    "evaluate",
    "gru_cell",
    "gru_cell_backward",
    "increments",
    "predictive_score",
    "predictive_scores",
    "qq_quantiles",
    "quadratic_variation",
    "quantile_table",
    "score_from_accuracy",
    "train_discriminator",
    "train_predictor",
    "wasserstein2_1d",
    "write_tables",
]
