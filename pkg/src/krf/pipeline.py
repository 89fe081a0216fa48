"""Run configuration and the train / evaluate / sweep steps shared by the CLI."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .data import DatasetSplits, load_dataset, split
from .estimator import KRFClassifier
from .exceptions import DataError
from .kg import StyleGraph, bundled_graph, parse_style_graph
from .metrics import EvalReport

BUNDLED_GRAPHS = ("styles8", "styles22")


@dataclass
class RunConfig:
    dataset: str | None = None
    kg: str | None = None
    embeddings: str | None = None
    checkpoint: str | None = None
    out: str | None = None
    tau: float = 4
    seed: int = 0
    epochs: int = 20
    lr: float = 0.001
    batch: int = 64
    ablation: str = "full"
    threshold: float = 0.5
    word_dim: int = 128
    word_hidden: int = 64
    review_hidden: int = 64
    label_dim: int = 128
    gcn_hidden: int = 512
    label_out: int = 128
    min_count: int = 2
    max_words: int = 50
    max_reviews: int = 40

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1 or self.batch < 1:
            raise ValueError("epochs and batch size must be >= 1")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def estimator(self, graph: StyleGraph, tau=None) -> KRFClassifier:
        return KRFClassifier(
            graph=graph,
            tau=self.tau if tau is None else tau,
            ablation=self.ablation,
            word_dim=self.word_dim,
            word_hidden=self.word_hidden,
            review_hidden=self.review_hidden,
            label_dim=self.label_dim,
            gcn_hidden=self.gcn_hidden,
            label_out=self.label_out,
            max_words=self.max_words,
            max_reviews=self.max_reviews,
            min_count=self.min_count,
            embeddings=self.embeddings,
            learning_rate=self.lr,
            epochs=self.epochs,
            batch_size=self.batch,
            threshold=self.threshold,
            random_state=self.seed,
        )


def resolve_graph(source: str) -> StyleGraph:
    """A graph file path, or the name of a bundled graph when no such file exists."""
    path = Path(source)
    if path.exists():
        return parse_style_graph(path)
    if source in BUNDLED_GRAPHS:
        return bundled_graph(source)
    raise DataError(f"style graph {source!r} not found (bundled graphs: {', '.join(BUNDLED_GRAPHS)})")


def load_splits(cfg: RunConfig, styles=None) -> DatasetSplits:
    if not cfg.dataset:
        raise DataError("no dataset given")
    return split(load_dataset(cfg.dataset, styles=styles), cfg.seed)


def train(cfg: RunConfig, graph: StyleGraph, splits: DatasetSplits, tau=None) -> KRFClassifier:
    est = cfg.estimator(graph, tau)
    return est.fit(splits.train, splits.train, X_val=splits.validation or None, y_val=splits.validation or None)


def evaluate(est: KRFClassifier, samples) -> EvalReport:
    if not samples:
        raise DataError("evaluation split is empty")
    return est.evaluate(samples, samples)


def history_csv(history) -> str:
    buf = io.StringIO()
    cols = ["epoch", "train_loss", "val_one_error", "val_hamming_loss", "val_macro_f1", "val_micro_f1"]
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for row in history:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


SWEEP_COLUMNS = ["tau", "best_epoch", "val_micro_f1", "one_error", "hamming_loss", "macro_f1", "micro_f1"]


def sweep_tau(cfg: RunConfig, graph: StyleGraph, splits: DatasetSplits, taus, evaluate_on="test"):
    """One model per tau, all with the same seed; rows are ordered by tau."""
    rows = []
    for tau in sorted(taus):
        est = train(cfg, graph, splits, tau=tau)
        rep = evaluate(est, splits.part(evaluate_on))
        best = est.history_[est.best_epoch_ - 1] if est.history_ else {}
        rows.append(
            {
                "tau": tau,
                "best_epoch": est.best_epoch_,
                "val_micro_f1": best.get("val_micro_f1", float("nan")),
                "one_error": rep.one_error,
                "hamming_loss": rep.hamming_loss,
                "macro_f1": rep.macro_f1,
                "micro_f1": rep.micro_f1,
            }
        )
    return rows


def rows_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def write_run_config(out_dir: Path, command: str, cfg: RunConfig, **extra):
    payload = {"command": command, **cfg.to_dict(), **extra}
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    (out_dir / f"{command}.run_config.json").write_text(text, encoding="utf-8")
