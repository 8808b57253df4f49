"""Scene-text visual question answering with multimodal grid features and
a cell-pointer attention head, plus its full evaluation stack."""

from .data import (
    EmbeddingTable,
    FeatureProvider,
    OcrToken,
    QaExample,
    embed_word,
    filter_trainable,
    get_features,
    load_dataset,
    save_dataset,
)
from .grid import GridAssignment, build_gt_mask, build_text_grid, cells_for_box, fuse, ground_truth_match
from .metrics import (
    EnsembleInput,
    EvalReport,
    answer_recall,
    ensemble_select,
    levenshtein,
    nls,
    score_anls,
    vqa_accuracy,
)
from .model import (
    AttentionLayerParams,
    PointerModel,
    PredictionOutput,
    ProviderBundle,
    StackParams,
    attention_forward,
    bce_loss,
    fcn_forward,
    predict,
    predict_multiscale,
    stacked_forward,
)
from .question import QuestionEncoderParams, encode_question

__all__ = [
    "AttentionLayerParams",
    "EmbeddingTable",
    "EnsembleInput",
    "EvalReport",
    "FeatureProvider",
    "GridAssignment",
    "OcrToken",
    "PointerModel",
    "PredictionOutput",
    "ProviderBundle",
    "QaExample",
    "QuestionEncoderParams",
    "StackParams",
    "answer_recall",
    "attention_forward",
    "bce_loss",
    "build_gt_mask",
    "build_text_grid",
    "cells_for_box",
    "embed_word",
    "encode_question",
    "ensemble_select",
    "fcn_forward",
    "filter_trainable",
    "fuse",
    "get_features",
    "ground_truth_match",
    "levenshtein",
    "load_dataset",
    "nls",
    "predict",
    "predict_multiscale",
    "save_dataset",
    "score_anls",
    "stacked_forward",
    "vqa_accuracy",
]

__version__ = "0.1.0"
