"""Statistical and knowledge label-correlation matrices."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DataError, ShapeError
from .kg import StyleGraph, knowledge_matrix

ABLATIONS = ("full", "no_stat", "no_knowledge", "han_only")


def _label_sets(samples):
    for pos, s in enumerate(samples):
        if hasattr(s, "labels"):
            yield getattr(s, "id", pos), s.labels
        else:
            yield pos, s


def cooccurrence_counts(samples: Iterable, styles: Sequence[str]) -> np.ndarray:
    """Pair co-occurrence counts over gold label sets.

    Off-diagonal ``A[i, j]`` counts samples holding both labels; the diagonal
    counts samples holding label ``i``.  ``samples`` are ``SongSample`` objects
    or plain label collections; only pass the training split.
    """
    index = {s: i for i, s in enumerate(styles)}
    n = len(styles)
    counts = np.zeros((n, n))
    for sid, labels in _label_sets(samples):
        try:
            ids = sorted({index[label] for label in labels})
        except KeyError as err:
            raise DataError(f"sample {sid!r}: unknown label {err.args[0]!r}") from None
        if ids:
            ids = np.asarray(ids)
            counts[np.ix_(ids, ids)] += 1.0
    return counts


def threshold_filter(A: np.ndarray, tau: float) -> np.ndarray:
    """Zero off-diagonal entries below ``tau``; the diagonal is kept as is."""
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    A = np.asarray(A, dtype=np.float64)
    out = np.where(A < tau, 0.0, A)
    np.fill_diagonal(out, np.diag(A))
    return out


def normalize(A: np.ndarray) -> np.ndarray:
    """Symmetric degree normalization ``D^-1/2 A D^-1/2``.

    Rows and columns with zero degree come out as zeros.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"normalize expects a square matrix, got {A.shape}")
    if np.any(A < 0):
        raise DataError("normalize: matrix has negative entries")
    deg = A.sum(axis=1)
    inv = np.zeros_like(deg)
    nz = deg > 0
    inv[nz] = 1.0 / np.sqrt(deg[nz])
    return inv[:, None] * A * inv[None, :]


def integrate(stat: np.ndarray, knowl: np.ndarray) -> np.ndarray:
    stat = np.asarray(stat, dtype=np.float64)
    knowl = np.asarray(knowl, dtype=np.float64)
    if stat.shape != knowl.shape or stat.ndim != 2 or stat.shape[0] != stat.shape[1]:
        raise ShapeError(f"integrate: expected two equal square matrices, got {stat.shape} and {knowl.shape}")
    return np.stack([stat, knowl])


def ablate(A_int: np.ndarray, ablation: str) -> np.ndarray:
    """Zero the slice an ablation removes (``no_stat`` -> slice 0, ``no_knowledge`` -> slice 1)."""
    if ablation not in ABLATIONS:
        raise ValueError(f"unknown ablation {ablation!r}; expected one of {ABLATIONS}")
    out = np.array(A_int, dtype=np.float64)
    if ablation == "no_stat":
        out[0] = 0.0
    elif ablation == "no_knowledge":
        out[1] = 0.0
    return out


@dataclass
class CorrelationMatrices:
    styles: list
    statistical_raw: np.ndarray
    statistical_filtered: np.ndarray
    knowledge: np.ndarray
    normalized_statistical: np.ndarray
    normalized_knowledge: np.ndarray
    integrated: np.ndarray
    tau: float

    def named(self):
        return {
            "statistical_raw": self.statistical_raw,
            "statistical_filtered": self.statistical_filtered,
            "knowledge": self.knowledge,
            "normalized_statistical": self.normalized_statistical,
            "normalized_knowledge": self.normalized_knowledge,
        }


def build_correlation(
    train_samples: Iterable,
    graph: StyleGraph,
    tau: float = 4,
    relation_scores=None,
    styles: Sequence[str] | None = None,
) -> CorrelationMatrices:
    """Full pipeline from training labels and style graph to the integrated tensor.

    The knowledge matrix gains unit self-loops before normalization so an
    isolated style keeps a self-connection.
    """
    styles = list(styles if styles is not None else graph.styles)
    raw = cooccurrence_counts(train_samples, styles)
    return correlation_from_counts(raw, graph, tau, relation_scores, styles)


def correlation_from_counts(raw, graph: StyleGraph, tau: float = 4, relation_scores=None,
                            styles: Sequence[str] | None = None) -> CorrelationMatrices:
    styles = list(styles if styles is not None else graph.styles)
    if list(graph.styles) != styles:
        graph = graph.reordered(styles)
    raw = np.asarray(raw, dtype=np.float64)
    filtered = threshold_filter(raw, tau)
    knowl = knowledge_matrix(graph, relation_scores)
    knowl_loops = knowl + np.eye(len(styles))
    ns = normalize(filtered)
    nk = normalize(knowl_loops)
    return CorrelationMatrices(
        styles=styles,
        statistical_raw=raw,
        statistical_filtered=filtered,
        knowledge=knowl,
        normalized_statistical=ns,
        normalized_knowledge=nk,
        integrated=integrate(ns, nk),
        tau=tau,
    )


class StyleCorrelation(TransformerMixin, BaseEstimator, auto_wrap_output_keys=None):
    """Estimator wrapper: ``fit`` on training label sets, ``transform`` returns the integrated tensor.

    ``transform`` ignores its input; the tensor depends only on the fitted
    labels and the graph.
    """

    def __init__(self, graph=None, tau=4, relation_scores=None, ablation="full"):
        self.graph = graph
        self.tau = tau
        self.relation_scores = relation_scores
        self.ablation = ablation

    def fit(self, y):
        if self.graph is None:
            raise ValueError("StyleCorrelation needs a style graph")
        self.matrices_ = build_correlation(y, self.graph, self.tau, self.relation_scores)
        self.styles_ = list(self.matrices_.styles)
        return self

    def transform(self, X=None):
        check_is_fitted(self, "matrices_")
        return ablate(self.matrices_.integrated, self.ablation)


def matrix_to_csv(M: np.ndarray, styles: Sequence[str], fmt: str = "repr") -> str:
    """CSV with a header row and first column of style names."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["style", *styles])
    for name, row in zip(styles, np.asarray(M)):
        w.writerow([name, *(repr(float(v)) if fmt == "repr" else format(v, fmt) for v in row)])
    return buf.getvalue()


def matrix_from_csv(text: str):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise DataError("empty matrix CSV")
    styles = rows[0][1:]
    names = [r[0] for r in rows[1:]]
    if names != styles:
        raise DataError("matrix CSV row labels do not match the header")
    M = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return styles, M
