"""Coarse-to-fine contrastive domain adaptation on synthetic segmentation data."""

from ._core import (
    Checkpoint,
    Dataset,
    MemoryBank,
    adain_transfer,
    assign_pseudo_labels,
    channel_stats,
    class_centers,
    content_loss,
    contrastive_combined,
    cross_entropy,
    entropy_loss,
    evaluate,
    generate_dataset,
    gradient_suite,
    head_parameter_count,
    info_nce,
    load_checkpoint,
    matmul,
    pseudo_label_accuracy,
    segmentation_iou,
    softmax,
    style_loss,
    train,
)

__all__ = [
    "Checkpoint",
    "Dataset",
    "MemoryBank",
    "adain_transfer",
    "assign_pseudo_labels",
    "channel_stats",
    "class_centers",
    "content_loss",
    "contrastive_combined",
    "cross_entropy",
    "entropy_loss",
    "evaluate",
    "generate_dataset",
    "gradient_suite",
    "head_parameter_count",
    "info_nce",
    "load_checkpoint",
    "matmul",
    "pseudo_label_accuracy",
    "segmentation_iou",
    "softmax",
    "style_loss",
    "train",
]
