"""Time- and event-aware contrastive pretraining for discrete-time survival models."""
from .autodiff import Tensor, backward
from .contrastive import ContrastiveConfig, MultiViewBatch, compute_weight_matrix, essl_loss, ssl_loss, tessl_loss
from .data import AugmentConfig, Dataset, Sample, generate_synthetic, load_csv, save_csv
from .metrics import EvalSet, brier_score, concordance_td, integrated_brier, kaplan_meier
from .pipeline import (
    Checkpoint,
    ExperimentConfig,
    MetricsReport,
    ablation_sweep,
    evaluate,
    export_embeddings,
    finetune,
    load_checkpoint,
    pretrain,
    run_experiment,
    save_checkpoint,
)

__version__ = "0.1.0"
