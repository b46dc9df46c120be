"""Dynamic data pruning under label noise, scored by loss-trajectory alignment.

The package trains small softmax classifiers while re-selecting the training
subset every epoch. Pruning policies rank samples either by their latest
epoch loss or by the correlation of their recent loss trajectory with a
clean reference trajectory; the second ranking separates hard-but-clean
samples from mislabeled ones, which raw loss cannot.
"""

from .alignment import AlignmentScores, alignment_scores, cosine, pearson
from .data import Dataset, ReferenceSpec, Sample, carve_reference, load_csv, make_blobs
from .estimator import EpochSnapshot, PrunedClassifier
from .harness import (
    Budget,
    DasSpec,
    DatasetSpec,
    MetricsRecord,
    RunConfig,
    TrainerSpec,
    config_from_dict,
    load_config,
    retained_noise_ratio,
    run_experiment,
    run_single,
    sweep,
)
from .nnet import DivergenceError, LinearSoftmax, OneHiddenMLP, evaluate_accuracy
from .noise import NoiseSpec, apply_noise
from .policy import (
    EpochPlan,
    PolicyConfig,
    dynamic_random_plan,
    infobatch_plan,
    seta_plan,
    static_random_select,
)
from .report import aggregate_runs, build_gap_table, hard_vs_noisy_export
from .trajectory import ReferenceTrajectory, TrajectoryBank

__version__ = "0.1.0"

__all__ = [
    "AlignmentScores",
    "Budget",
    "Dataset",
    "DasSpec",
    "DatasetSpec",
    "DivergenceError",
    "EpochPlan",
    "EpochSnapshot",
    "LinearSoftmax",
    "MetricsRecord",
    "NoiseSpec",
    "OneHiddenMLP",
    "PolicyConfig",
    "PrunedClassifier",
    "ReferenceSpec",
    "ReferenceTrajectory",
    "RunConfig",
    "Sample",
    "TrainerSpec",
    "TrajectoryBank",
    "aggregate_runs",
    "alignment_scores",
    "apply_noise",
    "build_gap_table",
    "carve_reference",
    "config_from_dict",
    "cosine",
    "dynamic_random_plan",
    "evaluate_accuracy",
    "hard_vs_noisy_export",
    "infobatch_plan",
    "load_config",
    "load_csv",
    "make_blobs",
    "pearson",
    "retained_noise_ratio",
    "run_experiment",
    "run_single",
    "seta_plan",
    "static_random_select",
    "sweep",
]
