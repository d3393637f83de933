from fairscaling.harness.config import ExperimentConfig, disparity_testbed
from fairscaling.harness.runner import (
    aggregate,
    compare,
    evaluate,
    run_experiment,
    run_seed,
    sweep,
    sweep_c,
    sweep_tau,
    train,
)

__all__ = [
    "ExperimentConfig",
    "aggregate",
    "compare",
    "disparity_testbed",
    "evaluate",
    "run_experiment",
    "run_seed",
    "sweep",
    "sweep_c",
    "sweep_tau",
    "train",
]
