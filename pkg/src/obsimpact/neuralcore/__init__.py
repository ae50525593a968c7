from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .metrics import Metrics, VariableMetrics, compute_metrics, mean_r2
from .model import (
    KINDS,
    Batch,
    ForwardTrace,
    ModelConfig,
    ModelWeights,
    backward,
    forward,
    gcn_forward,
    init_encoder,
    init_head,
    init_weights,
    loss_reg,
    loss_ssl,
    pool_and_head,
    predict,
    project,
    single_batch,
)
from .samples import NodeTable, SampleSet, Standardizer
from .training import Adam, TrainingError, finetune, predict_samples, pretrain

__all__ = [
    "Adam",
    "Batch",
    "CheckpointError",
    "ForwardTrace",
    "KINDS",
    "Metrics",
    "ModelConfig",
    "ModelWeights",
    "NodeTable",
    "SampleSet",
    "Standardizer",
    "TrainingError",
    "VariableMetrics",
    "backward",
    "compute_metrics",
    "finetune",
    "forward",
    "gcn_forward",
    "init_encoder",
    "init_head",
    "init_weights",
    "load_checkpoint",
    "loss_reg",
    "loss_ssl",
    "mean_r2",
    "pool_and_head",
    "predict",
    "predict_samples",
    "pretrain",
    "project",
    "save_checkpoint",
    "single_batch",
]
