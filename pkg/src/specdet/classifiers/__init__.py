"""Five-classifier suite over gadget embeddings and counter features."""

from .base import (
    KINDS,
    Dataset,
    FeatureSchema,
    ModelArtifact,
    TrainConfig,
    default_params,
    load_model,
    predict_label,
    predict_score,
    predict_scores,
    save_model,
    train,
)

__all__ = [
    "KINDS",
    "Dataset",
    "FeatureSchema",
    "ModelArtifact",
    "TrainConfig",
    "default_params",
    "load_model",
    "predict_label",
    "predict_score",
    "predict_scores",
    "save_model",
    "train",
]
