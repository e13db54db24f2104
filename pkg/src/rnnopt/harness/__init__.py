"""Training, evaluation, search and diagnostics built on the core modules."""

from .checks import DiagnosticTable, GradcheckReport, diagnose, gradcheck
from .config import ExperimentConfig, load_config, save_config
from .search import SearchError, SearchSpace, random_search
from .training import (
    EpochRecord,
    Metrics,
    Model,
    TaskData,
    TrainReport,
    build_model,
    evaluate,
    evaluate_model,
    load_task_data,
    make_metrics,
    model_from_checkpoint,
    save_model_checkpoint,
    train,
)

__all__ = [
    "DiagnosticTable", "EpochRecord", "ExperimentConfig", "GradcheckReport", "Metrics", "Model",
    "SearchError", "SearchSpace", "TaskData", "TrainReport", "build_model", "diagnose", "evaluate",
    "evaluate_model", "gradcheck", "load_config", "load_task_data", "make_metrics",
    "model_from_checkpoint", "random_search", "save_config", "save_model_checkpoint", "train",
]
