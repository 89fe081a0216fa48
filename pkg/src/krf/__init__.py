"""Review-driven multi-label music style classification with knowledge-aware label correlations."""

from .correlation import (
    CorrelationMatrices,
    StyleCorrelation,
    build_correlation,
    cooccurrence_counts,
    integrate,
    normalize,
    threshold_filter,
)
from .data import DatasetSplits, SongSample, SyntheticConfig, generate_synthetic, load_dataset, save_dataset, split
from .estimator import KRFClassifier
from .kg import StyleGraph, bundled_graph, knowledge_matrix, parse_style_graph
from .metrics import EvalReport, f1_scores, hamming_loss, one_error
from .tensor import Tape, Tensor

__version__ = "0.1.0"

__all__ = [
    "CorrelationMatrices",
    "DatasetSplits",
    "EvalReport",
    "KRFClassifier",
    "SongSample",
    "StyleCorrelation",
    "StyleGraph",
    "SyntheticConfig",
    "Tape",
    "Tensor",
    "build_correlation",
    "bundled_graph",
    "cooccurrence_counts",
    "f1_scores",
    "generate_synthetic",
    "hamming_loss",
    "integrate",
    "knowledge_matrix",
    "load_dataset",
    "normalize",
    "one_error",
    "parse_style_graph",
    "save_dataset",
    "split",
    "threshold_filter",
]
