"""Focal-InfoNCE: a hardness-aware contrastive objective with exact
gradients, plus a desk-scale trainer for it."""
from .core_math import cosine, log_sum_exp, normalize_rows, similarity_matrix
from .data_io import (
    EmbeddingStore,
    RunConfig,
    StsPairSet,
    read_config,
    read_embeddings,
    read_pairs,
    write_embeddings,
)
from .metrics import EvalReport, alignment, evaluate_sts, spearman, uniformity
from .objective import (
    GradReport,
    LossConfig,
    LossKind,
    LossValue,
    contrastive_loss,
    effective_logit,
    finite_diff_gradient,
    focal_info_nce,
    grad_check,
    info_nce,
    loss_gradient,
)
from .synthetic import synth_anisotropic, synth_sts
from .trainer import (
    OptimizerConfig,
    ProjectionHead,
    TrainConfig,
    TrainTrace,
    dropout_views,
    forward,
    train,
    train_step,
)

__version__ = "0.1.0"
