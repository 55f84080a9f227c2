"""Two-stream denoising diffusion for multichannel biosignals.

Decomposes recorded signals into subject-specific variance and
subject-invariant content via a pair of jointly trained noise-prediction
streams, with subject-conditioned generation, single-step denoising of raw
recordings, and cross-subject evaluation harnesses.
"""

from .schedule import NoiseSchedule, make_linear_schedule, q_sample, ancestral_step
from .windows import (EEGRecording, WindowStack, OverlapMap, stack_windows,
                      overlap_pairs, destack_average, generate_synthetic_dataset,
                      save_manifest, load_manifest)
from .denoiser import DenoiserParams, init_params, forward
from .classifier import (ClassifierParams, ArcMarginHead, init_classifier,
                         init_arc_head, extract_features, arc_logits, predict_subject)
from .losses import (LossWeights, LossReport, RawLosses, reverse_loss, orthogonal_loss,
                     arc_margin_loss, temporal_difference_loss, total_loss)
from .engine import (TrainConfig, TrainState, pretrain_classifier, train_step, train,
                     ancestral_sample, denoise_raw, save_checkpoint, load_checkpoint)
from .evaluation import (CorrMatrix, ClsTable, EvalConfig, subject_corr_matrix,
                         cross_subject_eval, export_embeddings, pca_project)

__version__ = "0.1.0"

__all__ = [
    "NoiseSchedule", "make_linear_schedule", "q_sample", "ancestral_step",
    "EEGRecording", "WindowStack", "OverlapMap", "stack_windows", "overlap_pairs",
    "destack_average", "generate_synthetic_dataset", "save_manifest", "load_manifest",
    "DenoiserParams", "init_params", "forward",
    "ClassifierParams", "ArcMarginHead", "init_classifier", "init_arc_head",
    "extract_features", "arc_logits", "predict_subject",
    "LossWeights", "LossReport", "RawLosses", "reverse_loss", "orthogonal_loss",
    "arc_margin_loss", "temporal_difference_loss", "total_loss",
    "TrainConfig", "TrainState", "pretrain_classifier", "train_step", "train",
    "ancestral_sample", "denoise_raw", "save_checkpoint", "load_checkpoint",
    "CorrMatrix", "ClsTable", "EvalConfig", "subject_corr_matrix",
    "cross_subject_eval", "export_embeddings", "pca_project",
]
