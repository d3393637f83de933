"""Fair identity scaling: group- and individual-level loss reweighting with a
fairness metric suite, synthetic biased data and an experiment harness."""

from fairscaling.core import (
    Dataset,
    MetricsReport,
    Sample,
    ScoredPrediction,
    split_dataset,
)
from fairscaling.fis import (
    FisState,
    fis_scaled_loss,
    fis_weights,
    update_beta,
    update_loss_memory,
)
from fairscaling.metrics import (
    EvalSet,
    auc,
    deo,
    deodds,
    dpd,
    full_report,
    group_auc,
    max_psd,
    mean_psd,
)

__all__ = [
    "Dataset",
    "EvalSet",
    "FisState",
    "MetricsReport",
    "Sample",
    "ScoredPrediction",
    "auc",
    "deo",
    "deodds",
    "dpd",
    "fis_scaled_loss",
    "fis_weights",
    "full_report",
    "group_auc",
    "max_psd",
    "mean_psd",
    "split_dataset",
    "update_beta",
    "update_loss_memory",
]

__version__ = "0.1.0"
