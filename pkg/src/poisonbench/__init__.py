"""Benchmark for incremental training-time data poisoning of image classifiers.

The package trains a small convolutional network from scratch on synthetic
texture images, interleaves poisoning rounds between training epochs (local
trigger patches or whole-image replacement, labels untouched), and measures
the attack's effectiveness and stealth: average loss change, average inference
probability, training time difference, and performance degradation.
"""

from .data import (
    Dataset,
    GenConfig,
    Instance,
    generate_dataset,
    generate_trigger_patch,
    load_dataset,
    load_patch,
    save_dataset,
    save_patch,
)
from .errors import (
    ConfigurationError,
    FormatError,
    PoisonbenchError,
    ShapeError,
    UsageError,
)
from .harness import (
    GridConfig,
    RunConfig,
    RunReport,
    build_run_id,
    default_trigger_patch,
    emit_plot_data,
    load_report_json,
    load_runs_csv,
    run_base,
    run_grid,
    run_poisoned,
    save_report_json,
    write_reports,
)
from .metrics import aip, alc, confusion_matrix, macro_fscore, pdm, ttd
from .nn import (
    ArchSpec,
    EpochRecord,
    Model,
    batch_loss,
    forward_probs,
    forward_probs_batch,
    init_model,
    predict,
    sgd_step,
    train_epoch,
)
from .poison import (
    GLOBAL_REPLACEMENT,
    LOCAL_PATCH,
    PatchArea,
    PoisonPlan,
    RoundSummary,
    apply_global_replacement,
    apply_local_patch,
    execute_round,
    plan_rounds,
    sample_patch_area,
    select_victims,
)

__all__ = [
    "ArchSpec", "ConfigurationError", "Dataset", "EpochRecord", "FormatError",
    "GLOBAL_REPLACEMENT", "GenConfig", "GridConfig", "Instance", "LOCAL_PATCH",
    "Model", "PatchArea", "PoisonPlan", "PoisonbenchError", "RoundSummary",
    "RunConfig", "RunReport", "ShapeError", "UsageError", "aip", "alc",
    "apply_global_replacement", "apply_local_patch", "batch_loss",
    "build_run_id", "confusion_matrix", "default_trigger_patch",
    "emit_plot_data", "execute_round", "forward_probs", "forward_probs_batch",
    "generate_dataset", "generate_trigger_patch", "init_model",
    "load_dataset", "load_patch", "load_report_json", "load_runs_csv",
    "macro_fscore", "pdm", "plan_rounds", "predict", "run_base", "run_grid",
    "run_poisoned", "sample_patch_area", "save_dataset", "save_patch",
    "save_report_json", "select_victims", "sgd_step", "train_epoch", "ttd",
    "write_reports",
]
