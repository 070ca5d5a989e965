"""Pulse-level simulator and training toolkit for Rydberg-array binary classifiers."""

__version__ = "0.1.0"

from .grid import C6, MIN_SPACING, AtomGrid, build_grid, interaction_matrix, min_pair_distance
from .pulse import (
    ChannelLimits,
    ClampWarning,
    PulseSchedule,
    PulseTiming,
    build_schedule,
    hold_value,
    sample,
)
from .hamiltonian import HamiltonianSpec, assemble, evaluate
from .simulator import (
    EvolutionConfig,
    NoiseSpec,
    evolve,
    evolve_trajectory,
    hard_label,
    perturb,
    predict,
    rydberg_probabilities,
    sample_shots,
)
from .data import (
    EncodedDataset,
    FeatureScaler,
    PCAModel,
    RawDataset,
    encode,
    fit_encoding,
    fit_pca,
    fit_scaler,
    load_csv,
    load_idx,
    make_blobs,
    train_test_split,
)
from .training import (
    AdamState,
    Metrics,
    ModelParameters,
    TrainConfig,
    TrainHistory,
    adam_step,
    batch_loss,
    bce_loss,
    evaluate_metrics,
    forward,
    grad_fd,
    grad_stochastic,
    init_params,
    predict_batch,
    realize,
    states_batch,
    train,
)
from .noise import (
    RobustnessReport,
    SweepResult,
    robustness_eval,
    sigma_sweep,
    spearman_exact_test,
    spearman_rank,
)
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .export import (
    AnalogProgram,
    ProgramValidationError,
    export_program,
    program_from_spec,
    program_to_dict,
    validate_program,
)

__all__ = [
    "C6", "MIN_SPACING", "AtomGrid", "build_grid", "interaction_matrix",
    "min_pair_distance", "ChannelLimits", "ClampWarning", "PulseSchedule",
    "PulseTiming", "build_schedule", "hold_value", "sample",
    "HamiltonianSpec", "assemble", "evaluate", "EvolutionConfig", "NoiseSpec",
    "evolve", "evolve_trajectory", "hard_label", "perturb", "predict",
    "rydberg_probabilities", "sample_shots",
    "EncodedDataset", "FeatureScaler", "PCAModel", "RawDataset", "encode",
    "fit_encoding", "fit_pca", "fit_scaler", "load_csv", "load_idx",
    "make_blobs", "train_test_split",
    "AdamState", "Metrics", "ModelParameters", "TrainConfig", "TrainHistory",
    "adam_step", "batch_loss", "bce_loss", "evaluate_metrics", "forward",
    "grad_fd", "grad_stochastic", "init_params", "predict_batch", "realize",
    "states_batch", "train",
    "RobustnessReport", "SweepResult", "robustness_eval", "sigma_sweep",
    "spearman_exact_test", "spearman_rank",
    "Checkpoint", "load_checkpoint", "save_checkpoint",
    "AnalogProgram", "ProgramValidationError", "export_program",
    "program_from_spec", "program_to_dict", "validate_program",
    "__version__",
]
