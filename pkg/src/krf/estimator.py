"""scikit-learn style estimator for review-driven multi-label style classification."""

from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from . import model as M
from .correlation import ABLATIONS, ablate, build_correlation, correlation_from_counts
from .exceptions import DataError, NumericError
from .han import make_batch
from .kg import StyleGraph, parse_style_graph, parse_style_graph_text
from .metrics import EvalReport, evaluate, f1_scores
from .optim import Adam
from .tensor import Tape, sigmoid_array
from .text import Vocabulary, build_vocab, load_embeddings, tokenize
from .validation import check_songs, check_targets

logger = logging.getLogger(__name__)


def _resolve_graph(graph):
    if graph is None or isinstance(graph, StyleGraph):
        return graph
    return parse_style_graph(graph)


class KRFClassifier(ClassifierMixin, BaseEstimator):
    """Hierarchical-attention review encoder fused with GCN label representations.

    ``X`` is a sequence of songs, each a list of review strings (or a
    ``SongSample``).  ``y`` is a sequence of style-name collections, or a 0/1
    indicator matrix whose columns follow ``styles``.

    Parameters mirror the model and training configuration; ``graph`` is a
    :class:`StyleGraph` or a path to a graph file and fixes the label order.
    ``ablation`` is one of ``full``, ``no_stat``, ``no_knowledge``,
    ``han_only``.  ``embeddings`` optionally names a pretrained embedding file
    whose vocabulary sits next to it as ``<file>.vocab``.
    """

    def __init__(
        self,
        graph=None,
        styles=None,
        relation_scores=None,
        tau=4,
        ablation="full",
        word_dim=128,
        word_hidden=64,
        review_hidden=64,
        label_dim=128,
        gcn_hidden=512,
        label_out=128,
        leaky_slope=0.01,
        max_words=50,
        max_reviews=40,
        min_count=2,
        embeddings=None,
        learning_rate=0.001,
        epochs=20,
        batch_size=64,
        clip_norm=5.0,
        threshold=0.5,
        random_state=0,
        verbose=False,
    ):
        self.graph = graph
        self.styles = styles
        self.relation_scores = relation_scores
        self.tau = tau
        self.ablation = ablation
        self.word_dim = word_dim
        self.word_hidden = word_hidden
        self.review_hidden = review_hidden
        self.label_dim = label_dim
        self.gcn_hidden = gcn_hidden
        self.label_out = label_out
        self.leaky_slope = leaky_slope
        self.max_words = max_words
        self.max_reviews = max_reviews
        self.min_count = min_count
        self.embeddings = embeddings
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.clip_norm = clip_norm
        self.threshold = threshold
        self.random_state = random_state
        self.verbose = verbose

    # -- configuration helpers ---------------------------------------------

    def _model_config(self):
        return M.ModelConfig(
            word_dim=self.word_dim,
            word_hidden=self.word_hidden,
            review_hidden=self.review_hidden,
            label_dim=self.label_dim,
            gcn_hidden=self.gcn_hidden,
            label_out=self.label_out,
            leaky_slope=self.leaky_slope,
            max_words=self.max_words,
            max_reviews=self.max_reviews,
            ablation=self.ablation,
        )

    def _check_hyperparams(self):
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if int(self.epochs) < 1 or int(self.batch_size) < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")

    def _label_order(self, graph, y):
        if graph is not None:
            if self.styles is not None and sorted(self.styles) != sorted(graph.styles):
                raise DataError("styles do not match the graph's declared styles")
            return list(self.styles) if self.styles is not None else list(graph.styles)
        if self.styles is not None:
            return list(self.styles)
        if isinstance(y, np.ndarray):
            raise DataError("an indicator-matrix target needs `styles` or `graph` for column names")
        return sorted({lab for labels in y for lab in labels})

    # -- encoding -----------------------------------------------------------

    def _encode_song(self, reviews, vocab):
        out = []
        for text in reviews[: self.max_reviews]:
            ids = vocab.encode_tokens(tokenize(text)[: self.max_words])
            if ids:
                out.append(ids)
        return out

    def _encode(self, songs, ids, vocab):
        encoded = [self._encode_song(r, vocab) for r in songs]
        for sid, song in zip(ids, encoded):
            if not song:
                raise DataError(f"sample {sid!r} has no usable reviews")
        return encoded

    def _initial_embeddings(self, vocab, rng):
        table = rng.uniform(-0.05, 0.05, size=(len(vocab), self.word_dim))
        table[0] = 0.0
        if self.embeddings is None:
            return table
        path = Path(self.embeddings)
        pre = load_embeddings(path)
        pre_vocab = Vocabulary.load(Path(str(path) + ".vocab"))
        if pre.shape != (len(pre_vocab), self.word_dim):
            raise DataError(
                f"pretrained table {pre.shape} does not match its vocabulary ({len(pre_vocab)}) "
                f"and word_dim {self.word_dim}"
            )
        hits = 0
        for i, tok in enumerate(vocab.itos[2:], start=2):
            j = pre_vocab.stoi.get(tok)
            if j is not None:
                table[i] = pre[j]
                hits += 1
        logger.info("initialised %d/%d embedding rows from %s", hits, len(vocab) - 2, path)
        return table

    # -- fitting ------------------------------------------------------------

    def fit(self, X, y, X_val=None, y_val=None):
        """Train; with a validation set, keep the epoch with the best validation micro F1."""
        self._check_hyperparams()
        songs, ids = check_songs(X)
        graph = _resolve_graph(self.graph)
        styles = self._label_order(graph, y)
        if graph is None:
            graph = StyleGraph(styles, [])
        Y = check_targets(y, styles, n_samples=len(songs))
        label_sets = [[styles[j] for j in np.flatnonzero(row)] for row in Y]

        rng = np.random.default_rng(self.random_state)
        tokens = [tokenize(t) for r in songs for t in r]
        vocab = build_vocab(tokens, self.min_count)
        enc = self._encode(songs, ids, vocab)

        matrices = build_correlation(label_sets, graph, self.tau, self.relation_scores, styles=styles)
        A_int = ablate(matrices.integrated, self.ablation)
        config = self._model_config()
        params = M.init_params(config, len(vocab), len(styles), rng, self._initial_embeddings(vocab, rng))

        self.styles_ = styles
        self.classes_ = np.arange(len(styles))
        self.vocab_ = vocab
        self.graph_ = graph
        self.matrices_ = matrices
        self.A_int_ = A_int
        self.params_ = params

        val = None
        if X_val is not None:
            vsongs, vids = check_songs(X_val)
            val = (self._encode(vsongs, vids, vocab), check_targets(y_val, styles, n_samples=len(vsongs)))

        opt = Adam(lr=self.learning_rate, clip_norm=self.clip_norm)
        n = len(enc)
        history = []
        best_score, best_epoch, best_state = -math.inf, None, None
        for epoch in range(1, int(self.epochs) + 1):
            order = rng.permutation(n)
            total = 0.0
            for b, start in enumerate(range(0, n, int(self.batch_size))):
                sel = order[start : start + int(self.batch_size)]
                batch = make_batch([enc[i] for i in sel], ids=[ids[i] for i in sel])
                params.zero_grad()
                with Tape() as tape:
                    scores = M.forward(batch, params, A_int, self.leaky_slope)
                    batch_loss = M.loss(scores, Y[sel])
                value = batch_loss.item()
                if not np.isfinite(value):
                    raise NumericError(f"non-finite loss {value!r} at epoch {epoch}, batch {b}")
                tape.backward(batch_loss)
                opt.step(params.tensors)
                total += value * len(sel)
            row = {"epoch": epoch, "train_loss": total / n}
            if val is not None:
                rep = self._report_encoded(*val)
                row.update(
                    val_one_error=rep.one_error,
                    val_hamming_loss=rep.hamming_loss,
                    val_macro_f1=rep.macro_f1,
                    val_micro_f1=rep.micro_f1,
                )
                if rep.micro_f1 > best_score:
                    best_score, best_epoch, best_state = rep.micro_f1, epoch, params.state_dict()
            history.append(row)
            if self.verbose:
                logger.info("epoch %d %s", epoch, row)
        if best_state is not None:
            params.load_state_dict(best_state)
        self.best_epoch_ = best_epoch if best_epoch is not None else len(history)
        self.history_ = history
        return self

    # -- inference ----------------------------------------------------------

    def _scores_encoded(self, enc, chunk=256):
        out = []
        for start in range(0, len(enc), chunk):
            batch = make_batch(enc[start : start + chunk])
            out.append(M.forward(batch, self.params_, self.A_int_, self.leaky_slope).data)
        if not out:
            return np.zeros((0, len(self.styles_)))
        return np.concatenate(out, axis=0)

    def _report_encoded(self, enc, Y):
        scores = self._scores_encoded(enc)
        pred = M.decide_labels(sigmoid_array(scores), self.threshold)
        return evaluate(scores, pred, Y, self.styles_)

    def decision_function(self, X):
        """Raw fused scores (n_songs x n_styles)."""
        check_is_fitted(self, "params_")
        songs, ids = check_songs(X)
        return self._scores_encoded(self._encode(songs, ids, self.vocab_))

    def predict_proba(self, X):
        return sigmoid_array(self.decision_function(X))

    def predict(self, X):
        """0/1 indicator matrix: labels with probability above ``threshold``, else the top-1."""
        return M.decide_labels(self.predict_proba(X), self.threshold)

    def predict_label_sets(self, X):
        return [[self.styles_[j] for j in np.flatnonzero(row)] for row in self.predict(X)]

    def evaluate(self, X, y) -> EvalReport:
        check_is_fitted(self, "params_")
        songs, ids = check_songs(X)
        Y = check_targets(y, self.styles_, n_samples=len(songs))
        return self._report_encoded(self._encode(songs, ids, self.vocab_), Y)

    def score(self, X, y, sample_weight=None):
        """Micro F1 (overrides the subset accuracy ClassifierMixin would report)."""
        Y = check_targets(y, self.styles_, n_samples=len(X))
        _, micro, _ = f1_scores(self.predict(X), Y, len(self.styles_))
        return micro

    def label_representations(self):
        check_is_fitted(self, "params_")
        return M.label_representations(self.params_, self.A_int_, self.leaky_slope).data

    # -- persistence --------------------------------------------------------

    def save(self, path, extra=None):
        """Write a checkpoint holding weights, vocabulary, labels and the correlation tensor."""
        check_is_fitted(self, "params_")
        hyper = self.get_params()
        hyper["graph"] = self.graph_.to_text()
        hyper["embeddings"] = None if self.embeddings is None else str(self.embeddings)
        config = {
            "estimator": hyper,
            "styles": self.styles_,
            "vocab": self.vocab_.itos,
            "best_epoch": self.best_epoch_,
            "history": self.history_,
        }
        if extra:
            config.update(extra)
        tensors = self.params_.state_dict()
        tensors["const.A_integrated"] = self.A_int_
        tensors["const.statistical_raw"] = self.matrices_.statistical_raw
        M.save_checkpoint(path, tensors, config)

    @classmethod
    def load(cls, path):
        tensors, config = M.load_checkpoint(path)
        hyper = dict(config["estimator"])
        hyper["graph"] = parse_style_graph_text(hyper["graph"], str(path))
        est = cls(**hyper)
        styles = config["styles"]
        vocab = Vocabulary(config["vocab"][2:])
        A_int = tensors.pop("const.A_integrated")
        raw = tensors.pop("const.statistical_raw")
        rng = np.random.default_rng(0)
        params = M.init_params(est._model_config(), len(vocab), len(styles), rng)
        params.load_state_dict(tensors)
        est.styles_ = styles
        est.classes_ = np.arange(len(styles))
        est.vocab_ = vocab
        est.graph_ = hyper["graph"]
        est.matrices_ = correlation_from_counts(raw, est.graph_, est.tau, est.relation_scores, styles=styles)
        est.A_int_ = A_int
        est.params_ = params
        est.best_epoch_ = config.get("best_epoch")
        est.history_ = config.get("history", [])
        est.checkpoint_config_ = config
        return est
