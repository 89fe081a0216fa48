"""Command-line interface: ``krf <command> [flags]`` (also ``python -m krf``)."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import pipeline as P
from .correlation import build_correlation, matrix_to_csv
from .data import SyntheticConfig, generate_synthetic, load_dataset, save_dataset
from .estimator import KRFClassifier
from .exceptions import DataError, KRFError, NumericError
from .gcn import label_similarity_heatmap
from .text import build_vocab, save_embeddings, tokenize, train_skipgram

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

ABLATION_FLAGS = {"full": "full", "no-stat": "no_stat", "no-knowledge": "no_knowledge", "han-only": "han_only"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _ablation(value):
    key = value.replace("_", "-")
    if key not in ABLATION_FLAGS:
        raise argparse.ArgumentTypeError(f"choose from {', '.join(ABLATION_FLAGS)}")
    return ABLATION_FLAGS[key]


def _taus(value):
    out = []
    for part in value.split(","):
        if "-" in part.strip()[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(float(part) if "." in part else int(part))
    if not out or min(out) < 0:
        raise argparse.ArgumentTypeError("expected non-negative values like 0-8 or 0,2,4")
    return sorted(set(out))


def _common(data=False, kg=False, train=False, checkpoint=False):
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--out", help="output directory (default: $KRF_OUT_DIR, else ./krf-out)")
    p.add_argument("--seed", type=int)
    if data:
        p.add_argument("--dataset", help="JSONL dataset file")
    if kg:
        p.add_argument("--kg", help="style graph file, or a bundled graph name (styles8, styles22)")
    if train:
        p.add_argument("--tau", type=float)
        p.add_argument("--epochs", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--batch", type=int)
        p.add_argument("--ablation", type=_ablation, help="full, no-stat, no-knowledge or han-only")
        p.add_argument("--threshold", type=float)
        p.add_argument("--embeddings", help="pretrained embedding file (vocabulary in <file>.vocab)")
        p.add_argument("--word-dim", type=int)
        p.add_argument("--word-hidden", type=int)
        p.add_argument("--review-hidden", type=int)
        p.add_argument("--label-dim", type=int)
        p.add_argument("--gcn-hidden", type=int)
        p.add_argument("--label-out", type=int)
        p.add_argument("--min-count", type=int)
        p.add_argument("--max-words", type=int)
        p.add_argument("--max-reviews", type=int)
    if checkpoint:
        p.add_argument("--checkpoint", help="model checkpoint file")
    return p


def build_parser():
    parser = _Parser(prog="krf", description="Knowledge-aware multi-label music style classification.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-synth", parents=[_common(kg=True)], help="write a planted synthetic corpus")
    g.add_argument("--n", type=int, default=2000)
    g.add_argument("--minority")
    g.add_argument("--signal-ratio", type=float)
    g.add_argument("--distractor-rate", type=float)
    g.add_argument("--rare-pair-noise", type=float)

    p = sub.add_parser("pretrain", parents=[_common(data=True)], help="skip-gram word embeddings")
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--min-count", type=int, default=2)

    sub.add_parser("matrices", parents=[_common(data=True, kg=True, train=True)],
                   help="export the correlation matrices of the training split")
    sub.add_parser("train", parents=[_common(data=True, kg=True, train=True, checkpoint=True)],
                   help="train a model, write checkpoint and epoch log")
    e = sub.add_parser("eval", parents=[_common(data=True, checkpoint=True)], help="evaluate a checkpoint")
    e.add_argument("--split", choices=["train", "validation", "test", "all"], default="test")
    pr = sub.add_parser("predict", parents=[_common(data=True, checkpoint=True)], help="predict style labels")
    pr.add_argument("--review", action="append", help="review text of a single song (repeatable)")
    pr.add_argument("--threshold", type=float)
    sub.add_parser("heatmap", parents=[_common(checkpoint=True)], help="label similarity heatmap CSV")
    s = sub.add_parser("sweep-tau", parents=[_common(data=True, kg=True, train=True)],
                       help="train one model per tau value")
    s.add_argument("--taus", type=_taus, default=list(range(9)), help="range like 0-8 or a list like 0,2,4")
    s.add_argument("--split", choices=["validation", "test"], default="test")
    return parser


# -- helpers ------------------------------------------------------------------


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get("KRF_OUT_DIR") or "krf-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require_file(value, flag):
    if not value:
        raise UsageError(f"{flag} is required")
    if not Path(value).is_file():
        raise DataError(f"{flag}: no such file: {value}")
    return value


def _run_config(args, base=None) -> P.RunConfig:
    """Flags override ``base`` (for example a checkpoint's stored config) which overrides defaults."""
    values = dict(base or {})
    for f in fields(P.RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    values["out"] = str(_out_dir(args))
    try:
        return P.RunConfig.from_dict(values)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _write(path: Path, text: str):
    path.write_text(text, encoding="utf-8")
    print(f"wrote {path}")


def _load_checkpoint(args):
    est = KRFClassifier.load(_require_file(args.checkpoint, "--checkpoint"))
    stored = est.checkpoint_config_.get("run_config", {})
    return est, stored


# -- commands -----------------------------------------------------------------


def cmd_gen_synth(args):
    if not args.kg:
        raise UsageError("--kg is required")
    graph = P.resolve_graph(args.kg)
    seed = 7 if args.seed is None else args.seed
    knobs = {k: getattr(args, k) for k in ("minority", "signal_ratio", "distractor_rate", "rare_pair_noise")
             if getattr(args, k) is not None}
    config = SyntheticConfig(n_samples=args.n, seed=seed, **knobs)
    corpus = generate_synthetic(graph.styles, graph, config)
    out = _out_dir(args)
    save_dataset(out / "dataset.jsonl", corpus.samples)
    print(f"wrote {out / 'dataset.jsonl'}")
    _write(out / "planted_pairs.csv", corpus.pair_table_csv())
    cfg = P.RunConfig(kg=args.kg, seed=seed, out=str(out))
    P.write_run_config(out, "gen-synth", cfg, synthetic={k: getattr(config, k) for k in
                       ("n_samples", "signal_ratio", "distractor_rate", "rare_pair_noise", "minority_rate")},
                       minority=corpus.minority, majority=corpus.majority)


def cmd_pretrain(args):
    _require_file(args.dataset, "--dataset")
    cfg = _run_config(args)
    splits = P.load_splits(cfg)
    sentences = [tokenize(t) for s in splits.train for t in s.reviews]
    vocab = build_vocab(sentences, args.min_count)
    encoded = [vocab.encode_tokens(s) for s in sentences]
    table = train_skipgram(encoded, len(vocab), dim=args.dim, window=args.window, negatives=args.negatives,
                           epochs=args.epochs, seed=cfg.seed)
    out = Path(cfg.out)
    save_embeddings(out / "embeddings.krfemb", table)
    vocab.save(out / "embeddings.krfemb.vocab")
    print(f"wrote {out / 'embeddings.krfemb'} ({len(vocab)} x {args.dim})")
    P.write_run_config(out, "pretrain", cfg, dim=args.dim, window=args.window, negatives=args.negatives,
                       pretrain_epochs=args.epochs, pretrain_min_count=args.min_count)


def cmd_matrices(args):
    _require_file(args.dataset, "--dataset")
    if not args.kg:
        raise UsageError("--kg is required")
    cfg = _run_config(args)
    graph = P.resolve_graph(cfg.kg)
    splits = P.load_splits(cfg, styles=graph.styles)
    m = build_correlation(splits.train, graph, cfg.tau)
    out = Path(cfg.out)
    for name, M in m.named().items():
        _write(out / f"{name}.csv", matrix_to_csv(M, m.styles))
    P.write_run_config(out, "matrices", cfg)


def _train_inputs(args):
    _require_file(args.dataset, "--dataset")
    if not args.kg:
        raise UsageError("--kg is required")
    if args.embeddings:
        _require_file(args.embeddings, "--embeddings")
    cfg = _run_config(args)
    graph = P.resolve_graph(cfg.kg)
    return cfg, graph, P.load_splits(cfg, styles=graph.styles)


def cmd_train(args):
    cfg, graph, splits = _train_inputs(args)
    out = Path(cfg.out)
    ckpt = Path(cfg.checkpoint or out / "model.krfckpt")
    cfg.checkpoint = str(ckpt)
    est = P.train(cfg, graph, splits)
    est.save(ckpt, extra={"run_config": cfg.to_dict()})
    print(f"wrote {ckpt}")
    _write(out / "epoch_log.csv", P.history_csv(est.history_))
    P.write_run_config(out, "train", cfg, best_epoch=est.best_epoch_)
    best = est.history_[est.best_epoch_ - 1]
    print(f"best epoch {est.best_epoch_}: validation micro F1 {best.get('val_micro_f1', float('nan')):.4f}")


def cmd_eval(args):
    est, stored = _load_checkpoint(args)
    cfg = _run_config(args, stored)
    _require_file(cfg.dataset, "--dataset")
    splits = P.load_splits(cfg)
    if sorted({lab for s in splits.train + splits.validation + splits.test for lab in s.labels}
              - set(est.styles_)):
        raise DataError("dataset uses styles the checkpoint does not know")
    samples = (splits.train + splits.validation + splits.test) if args.split == "all" else splits.part(args.split)
    rep = P.evaluate(est, samples)
    out = Path(cfg.out)
    _write(out / f"eval_{args.split}.json", rep.to_json(split=args.split, run_config=cfg.to_dict()) + "\n")
    print(rep.table())


def cmd_predict(args):
    est, stored = _load_checkpoint(args)
    if args.threshold is not None:
        est.threshold = args.threshold
    if args.review:
        probs = est.predict_proba([args.review])[0]
        labels = est.predict_label_sets([args.review])[0]
        print(json.dumps({"labels": labels, "probabilities": dict(zip(est.styles_, probs.round(6).tolist()))}))
        return
    cfg = _run_config(args, stored)
    _require_file(cfg.dataset, "--dataset")
    samples = load_dataset(cfg.dataset)
    probs = est.predict_proba(samples)
    sets = [[est.styles_[j] for j in np.flatnonzero(r)] for r in est.predict(samples)]
    lines = [json.dumps({"id": s.id, "labels": lab, "probabilities": dict(zip(est.styles_, p.tolist()))},
                        ensure_ascii=False) for s, lab, p in zip(samples, sets, probs)]
    out = Path(cfg.out)
    _write(out / "predictions.jsonl", "".join(line + "\n" for line in lines))
    P.write_run_config(out, "predict", cfg, threshold_used=est.threshold)


def cmd_heatmap(args):
    est, stored = _load_checkpoint(args)
    cfg = _run_config(args, stored)
    H = label_similarity_heatmap(est.label_representations())
    out = Path(cfg.out)
    _write(out / "heatmap.csv", matrix_to_csv(H, est.styles_))
    P.write_run_config(out, "heatmap", cfg)


def cmd_sweep_tau(args):
    cfg, graph, splits = _train_inputs(args)
    rows = P.sweep_tau(cfg, graph, splits, args.taus, evaluate_on=args.split)
    out = Path(cfg.out)
    _write(out / "tau_sweep.csv", P.rows_csv(rows, P.SWEEP_COLUMNS))
    P.write_run_config(out, "sweep-tau", cfg, taus=args.taus, split=args.split)
    for r in rows:
        print(f"tau {r['tau']:>4}  micro F1 {r['micro_f1']:.4f}")


COMMANDS = {
    "gen-synth": cmd_gen_synth,
    "pretrain": cmd_pretrain,
    "matrices": cmd_matrices,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "heatmap": cmd_heatmap,
    "sweep-tau": cmd_sweep_tau,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"krf {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"krf {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (KRFError, OSError) as exc:
        print(f"krf {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
