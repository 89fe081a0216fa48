"""KRF network: parameter registry, forward pass, loss, label decisions, checkpoints."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Mapping

import numpy as np

from . import tensor as T
from .correlation import ABLATIONS
from .exceptions import DataError, ShapeError
from .gcn import GcnParams, glorot, init_gcn, style_representations
from .han import EncodedBatch, HanParams, encode_batch, init_han
from .tensor import Tensor

CKPT_MAGIC = b"KRFCKPT"
CKPT_VERSION = 1


@dataclass
class ModelConfig:
    word_dim: int = 128
    word_hidden: int = 64
    review_hidden: int = 64
    label_dim: int = 128
    gcn_hidden: int = 512
    label_out: int = 128
    leaky_slope: float = 0.01
    max_words: int = 50
    max_reviews: int = 40
    ablation: str = "full"

    def __post_init__(self):
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}; expected one of {ABLATIONS}")
        for f in ("word_dim", "word_hidden", "review_hidden", "label_dim", "gcn_hidden", "label_out",
                  "max_words", "max_reviews"):
            if getattr(self, f) < 1:
                raise ValueError(f"{f} must be >= 1")

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


class ModelParams:
    """Every trainable tensor under a stable dotted name.

    ``han_only`` models carry a free label table ``labels.L`` instead of the
    ``gcn.*`` tensors.
    """

    def __init__(self, tensors: Mapping[str, Tensor], ablation="full"):
        self.tensors = dict(tensors)
        self.ablation = ablation
        ids = [id(t) for t in self.tensors.values()]
        if len(set(ids)) != len(ids):
            raise ValueError("a tensor is registered under more than one name")

    def __getitem__(self, name):
        return self.tensors[name]

    def __contains__(self, name):
        return name in self.tensors

    def __iter__(self):
        return iter(self.tensors)

    def __len__(self):
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def names(self):
        return list(self.tensors)

    @property
    def han(self) -> HanParams:
        return HanParams.from_named(self.tensors)

    @property
    def gcn(self) -> GcnParams | None:
        if "gcn.H0" not in self.tensors:
            return None
        return GcnParams(self.tensors["gcn.H0"], self.tensors["gcn.W1"], self.tensors["gcn.W2"])

    def state_dict(self):
        return {k: v.data.copy() for k, v in self.tensors.items()}

    def load_state_dict(self, state):
        missing = set(self.tensors) ^ set(state)
        if missing:
            raise DataError(f"state does not match parameters: {sorted(missing)}")
        for k, arr in state.items():
            if self.tensors[k].shape != arr.shape:
                raise ShapeError(f"{k}: expected {self.tensors[k].shape}, got {arr.shape}")
            self.tensors[k].data[...] = arr

    def zero_grad(self):
        for t in self.tensors.values():
            t.grad = None

    def n_values(self):
        return sum(t.size for t in self.tensors.values())


def init_params(config: ModelConfig, vocab_size: int, n_labels: int, rng: np.random.Generator,
                embeddings: np.ndarray | None = None) -> ModelParams:
    """Initialize all weights from ``rng`` in a fixed order."""
    if embeddings is None:
        emb = rng.uniform(-0.05, 0.05, size=(vocab_size, config.word_dim))
        emb[0] = 0.0
    else:
        emb = np.array(embeddings, dtype=np.float64)
        if emb.shape != (vocab_size, config.word_dim):
            raise ShapeError(f"embedding table {emb.shape} != ({vocab_size}, {config.word_dim})")
    han = init_han(rng, Tensor(emb, requires_grad=True), config.word_hidden, config.review_hidden)
    named = han.named()
    if config.ablation == "han_only":
        named["labels.L"] = Tensor(rng.uniform(-0.1, 0.1, size=(n_labels, config.label_out)), requires_grad=True)
    else:
        gcn = init_gcn(rng, n_labels, config.label_dim, config.gcn_hidden, config.label_out)
        named.update(gcn.named())
    named["fusion.W"] = Tensor(glorot(rng, han.output_dim, config.label_out), requires_grad=True)
    return ModelParams(named, config.ablation)


def label_representations(params: ModelParams, A_int, slope=0.01) -> Tensor:
    if params.ablation == "han_only":
        return params["labels.L"]
    return style_representations(A_int, params.gcn, slope)


def fuse(X: Tensor, W: Tensor, labels: Tensor) -> Tensor:
    """Scores ``ReLU(X) @ W @ labels.T`` (B x C)."""
    return T.relu(X) @ W @ labels.T


def forward(batch: EncodedBatch, params: ModelParams, A_int, slope=0.01) -> Tensor:
    X = encode_batch(batch, params.han)
    return fuse(X, params["fusion.W"], label_representations(params, A_int, slope))


def loss(scores: Tensor, gold) -> Tensor:
    """Batch mean of the summed per-label binary cross-entropy."""
    gold = np.asarray(gold, dtype=np.float64)
    if gold.shape != scores.shape:
        raise ShapeError(f"loss: scores {scores.shape} vs gold {gold.shape}")
    return T.tensor_sum(T.bce_with_logits(scores, gold)) * (1.0 / scores.shape[0])


def decide_labels(probs: np.ndarray, threshold=0.5) -> np.ndarray:
    """Indicator matrix of ``probs > threshold``; rows with no label get their top-1."""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    pred = probs > threshold
    empty = ~pred.any(axis=1)
    if np.any(empty):
        top = np.argmax(probs[empty], axis=1)
        pred[np.flatnonzero(empty), top] = True
    return pred.astype(np.int64)


@dataclass
class Prediction:
    scores: np.ndarray
    ranking: list
    labels: list


def predict_from_scores(scores: np.ndarray, threshold=0.5, styles=None) -> Prediction:
    """Ranking (best first, ties by lower index) and decided label set for one sample."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    ranking = [int(i) for i in np.argsort(-scores, kind="stable")]
    chosen = np.flatnonzero(decide_labels(T.sigmoid_array(scores), threshold)[0]).tolist()
    if styles is not None:
        return Prediction(scores, [styles[i] for i in ranking], [styles[i] for i in chosen])
    return Prediction(scores, ranking, chosen)


# -- checkpoints ------------------------------------------------------------


def _encode_config(config: Mapping) -> bytes:
    lines = []
    for key, val in config.items():
        if "=" in key or "\n" in key:
            raise ValueError(f"invalid config key {key!r}")
        lines.append(f"{key}={json.dumps(val, sort_keys=True, ensure_ascii=False)}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _decode_config(raw: bytes) -> dict:
    out = {}
    for line in raw.decode("utf-8").splitlines():
        if not line:
            continue
        key, _, val = line.partition("=")
        out[key] = json.loads(val)
    return out


def save_checkpoint(path, tensors: Mapping[str, np.ndarray], config: Mapping):
    """Write ``KRFCKPT`` | version | config block | tensor records (little-endian)."""
    cfg = _encode_config(config)
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", CKPT_VERSION))
        fh.write(struct.pack("<I", len(cfg)))
        fh.write(cfg)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            key = name.encode("utf-8")
            fh.write(struct.pack("<I", len(key)))
            fh.write(key)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path):
    """Return ``(tensors, config)`` from a checkpoint file."""
    raw = Path(path).read_bytes()
    if raw[: len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise DataError(f"{path}: not a KRF checkpoint (bad magic)")
    pos = len(CKPT_MAGIC)

    def u32():
        nonlocal pos
        (v,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        return v

    try:
        version = u32()
        if version != CKPT_VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version}")
        n = u32()
        config = _decode_config(raw[pos : pos + n])
        pos += n
        tensors = {}
        for _ in range(u32()):
            klen = u32()
            name = raw[pos : pos + klen].decode("utf-8")
            pos += klen
            rank = u32()
            shape = struct.unpack_from(f"<{rank}I", raw, pos)
            pos += 4 * rank
            count = int(np.prod(shape)) if rank else 1
            arr = np.frombuffer(raw, dtype="<f8", count=count, offset=pos).reshape(shape)
            pos += 8 * count
            tensors[name] = arr.astype(np.float64)
    except struct.error as err:
        raise DataError(f"{path}: truncated checkpoint") from err
    return tensors, config


def config_dict(cfg) -> dict:
    return asdict(cfg)
