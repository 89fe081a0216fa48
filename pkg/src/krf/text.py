"""Tokenization, vocabularies and word-embedding tables."""

from __future__ import annotations

import re
import struct
from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DataError

PAD, UNK = "<pad>", "<unk>"
PAD_ID, UNK_ID = 0, 1

_CJK = (
    "㐀-䶿一-鿿豈-﫿"
    "぀-ゟ゠-ヿ가-힯"
)
# one CJK character, or a run of letters/digits that contains no CJK
_TOKEN_RE = re.compile(rf"[{_CJK}]|(?:(?![{_CJK}])[^\W_])+")

EMB_MAGIC = b"KRFEMB"


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation; CJK splits per character.

    >>> tokenize("Post-Punk revival!")
    ['post', 'punk', 'revival']
    """
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    """Bijective token <-> index map with PAD at 0 and UNK at 1."""

    def __init__(self, tokens: Sequence[str] = (), min_count: int = 1):
        self.min_count = min_count
        self.itos = [PAD, UNK]
        self.stoi = {PAD: PAD_ID, UNK: UNK_ID}
        for tok in tokens:
            if tok in self.stoi:
                continue
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def encode(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def decode(self, idx: int) -> str:
        return self.itos[idx]

    def encode_tokens(self, tokens: Iterable[str]) -> list[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def save(self, path):
        Path(path).write_text("\n".join(self.itos) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if lines[:2] != [PAD, UNK]:
            raise DataError(f"{path}: vocabulary must start with {PAD} and {UNK}")
        if len(set(lines)) != len(lines):
            raise DataError(f"{path}: duplicate tokens in vocabulary")
        return cls(lines[2:])


def build_vocab(corpus: Iterable[Sequence[str]], min_count: int = 2) -> Vocabulary:
    """Vocabulary of tokens occurring at least ``min_count`` times.

    ``corpus`` yields token lists (one per review) from the training split.
    Token order is by descending frequency, ties alphabetical.
    """
    counts = Counter()
    n_docs = 0
    for tokens in corpus:
        n_docs += 1
        counts.update(tokens)
    if n_docs == 0:
        raise DataError("cannot build a vocabulary from an empty corpus")
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary(kept, min_count=min_count)


def random_embeddings(vocab_size: int, dim: int, rng: np.random.Generator, scale: float = 0.05):
    table = rng.uniform(-scale, scale, size=(vocab_size, dim))
    table[PAD_ID] = 0.0
    return table


def save_embeddings(path, table: np.ndarray):
    table = np.ascontiguousarray(table, dtype="<f8")
    n, d = table.shape
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(struct.pack("<II", n, d))
        fh.write(table.tobytes())


def load_embeddings(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    head = len(EMB_MAGIC)
    if raw[:head] != EMB_MAGIC:
        raise DataError(f"{path}: not an embedding file (bad magic)")
    n, d = struct.unpack_from("<II", raw, head)
    body = raw[head + 8 :]
    if len(body) != n * d * 8:
        raise DataError(f"{path}: expected {n}x{d} floats, found {len(body) // 8}")
    return np.frombuffer(body, dtype="<f8").reshape(n, d).astype(np.float64)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def train_skipgram(
    corpus: Sequence[Sequence[int]],
    vocab_size: int,
    dim: int = 128,
    window: int = 5,
    negatives: int = 5,
    epochs: int = 5,
    seed: int = 0,
    lr: float = 0.025,
    batch_size: int = 256,
    return_losses: bool = False,
):
    """Skip-gram with negative sampling over encoded sentences.

    Negatives are drawn from the unigram distribution raised to 0.75.
    Updates are minibatched SGD with linearly decaying learning rate.
    Returns the input-vector table (``vocab_size x dim``), plus the mean loss
    per epoch when ``return_losses`` is set.
    """
    if window < 1 or negatives < 1:
        raise ValueError("window and negatives must be >= 1")
    sents = [np.asarray(s, dtype=np.intp) for s in corpus]
    sents = [s[s != PAD_ID] for s in sents]
    centers, contexts = [], []
    for s in sents:
        n = len(s)
        for off in range(1, window + 1):
            if n > off:
                centers.append(s[:-off])
                contexts.append(s[off:])
                centers.append(s[off:])
                contexts.append(s[:-off])
    if not centers:
        raise DataError("corpus is smaller than one skip-gram window")
    centers = np.concatenate(centers)
    contexts = np.concatenate(contexts)

    rng = np.random.default_rng(seed)
    counts = np.bincount(np.concatenate(sents), minlength=vocab_size).astype(np.float64)
    counts[PAD_ID] = 0.0
    noise = counts**0.75
    noise /= noise.sum()
    cdf = np.cumsum(noise)

    w_in = (rng.random((vocab_size, dim)) - 0.5) / dim
    w_out = np.zeros((vocab_size, dim))
    w_in[PAD_ID] = 0.0

    n_pairs = len(centers)
    total_steps = epochs * ((n_pairs + batch_size - 1) // batch_size)
    step = 0
    losses = []
    for _ in range(epochs):
        order = rng.permutation(n_pairs)
        epoch_loss = 0.0
        for start in range(0, n_pairs, batch_size):
            sel = order[start : start + batch_size]
            c, o = centers[sel], contexts[sel]
            neg = np.searchsorted(cdf, rng.random((len(sel), negatives)), side="right")
            neg = np.minimum(neg, vocab_size - 1)
            alpha = lr * max(1e-4, 1.0 - step / total_steps)
            step += 1

            vc = w_in[c]  # (b, d)
            targets = np.concatenate([o[:, None], neg], axis=1)  # (b, 1+k)
            vo = w_out[targets]  # (b, 1+k, d)
            logits = np.einsum("bd,bkd->bk", vc, vo)
            labels = np.zeros_like(logits)
            labels[:, 0] = 1.0
            p = _sigmoid(logits)
            epoch_loss += float(
                np.sum(np.logaddexp(0.0, -logits[:, 0]))
                + np.sum(np.logaddexp(0.0, logits[:, 1:]))
            )
            g = p - labels  # d loss / d logits
            grad_vc = np.einsum("bk,bkd->bd", g, vo)
            grad_vo = g[:, :, None] * vc[:, None, :]
            np.add.at(w_out, targets.reshape(-1), -alpha * grad_vo.reshape(-1, dim))
            np.add.at(w_in, c, -alpha * grad_vc)
        losses.append(epoch_loss / n_pairs)
    w_in[PAD_ID] = 0.0
    if return_losses:
        return w_in, losses
    return w_in
