"""Hierarchical attention encoder: word-level then review-level Bi-GRU + attention.

All functions operate on padded batches.  A batch of songs is flattened to
``R`` reviews of at most ``J`` tokens (``word_ids``/``word_mask``); each song
then indexes its reviews through ``review_index`` (0 = padding, ``r + 1`` =
review ``r``).  Masked positions are excluded from attention by a -1e9 logit
offset and leave the GRU state untouched.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .exceptions import DataError, ShapeError
from .tensor import Tensor

MASK_LOGIT = -1e9


@dataclass
class GRUWeights:
    """Gate weights in column blocks ``[update | reset | candidate]``.

    ``W`` maps inputs (``d x 3h``); ``U`` is the recurrent map for the update
    and reset gates (``h x 2h``); ``U_h`` acts on ``reset * h`` for the
    candidate (``h x h``); ``b`` holds the three gate biases.
    """

    W: Tensor
    U: Tensor
    U_h: Tensor
    b: Tensor

    @property
    def hidden(self):
        return self.U_h.shape[0]

    def named(self, prefix):
        return {f"{prefix}.W": self.W, f"{prefix}.U": self.U, f"{prefix}.U_h": self.U_h, f"{prefix}.b": self.b}


@dataclass
class AttentionWeights:
    W: Tensor
    b: Tensor
    u: Tensor

    def named(self, prefix):
        return {f"{prefix}.W": self.W, f"{prefix}.b": self.b, f"{prefix}.u": self.u}


@dataclass
class HanParams:
    embedding: Tensor
    word_fwd: GRUWeights
    word_bwd: GRUWeights
    word_att: AttentionWeights
    review_fwd: GRUWeights
    review_bwd: GRUWeights
    review_att: AttentionWeights

    @property
    def output_dim(self):
        return 2 * self.review_fwd.hidden

    def named(self):
        out = {"han.embedding": self.embedding}
        out.update(self.word_fwd.named("han.word.fwd"))
        out.update(self.word_bwd.named("han.word.bwd"))
        out.update(self.word_att.named("han.word.att"))
        out.update(self.review_fwd.named("han.review.fwd"))
        out.update(self.review_bwd.named("han.review.bwd"))
        out.update(self.review_att.named("han.review.att"))
        return out

    @classmethod
    def from_named(cls, p):
        def gru(prefix):
            return GRUWeights(p[f"{prefix}.W"], p[f"{prefix}.U"], p[f"{prefix}.U_h"], p[f"{prefix}.b"])

        def att(prefix):
            return AttentionWeights(p[f"{prefix}.W"], p[f"{prefix}.b"], p[f"{prefix}.u"])

        return cls(
            p["han.embedding"],
            gru("han.word.fwd"),
            gru("han.word.bwd"),
            att("han.word.att"),
            gru("han.review.fwd"),
            gru("han.review.bwd"),
            att("han.review.att"),
        )


def _orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def init_gru(rng, in_dim, hidden, scale=0.08):
    W = rng.uniform(-scale, scale, size=(in_dim, 3 * hidden))
    U = np.concatenate([_orthogonal(rng, hidden), _orthogonal(rng, hidden)], axis=1)
    U_h = _orthogonal(rng, hidden)
    b = np.zeros(3 * hidden)
    return GRUWeights(*(Tensor(a, requires_grad=True) for a in (W, U, U_h, b)))


def init_attention(rng, dim, scale=0.08):
    W = rng.uniform(-scale, scale, size=(dim, dim))
    b = np.zeros(dim)
    u = rng.uniform(-scale, scale, size=dim)
    return AttentionWeights(*(Tensor(a, requires_grad=True) for a in (W, b, u)))


def init_han(rng, embedding, word_hidden=64, review_hidden=64):
    emb = embedding if isinstance(embedding, Tensor) else Tensor(embedding, requires_grad=True)
    d = emb.shape[1]
    return HanParams(
        emb,
        init_gru(rng, d, word_hidden),
        init_gru(rng, d, word_hidden),
        init_attention(rng, 2 * word_hidden),
        init_gru(rng, 2 * word_hidden, review_hidden),
        init_gru(rng, 2 * word_hidden, review_hidden),
        init_attention(rng, 2 * review_hidden),
    )


def _step(xzr, xh, h, w, m):
    H = w.hidden
    zr = T.sigmoid(xzr + h @ w.U)
    z = zr[:, :H]
    r = zr[:, H:]
    cand = T.tanh(xh + (r * h) @ w.U_h)
    gate = z if m is None else z * m
    return h + gate * (cand - h)


def gru_cell(x_t, h_prev, w: GRUWeights):
    """One GRU update on a batch of row vectors (1-D inputs are treated as a batch of one)."""
    x_t, h_prev = T.as_tensor(x_t), T.as_tensor(h_prev)
    single = x_t.ndim == 1
    if single:
        x_t = x_t.reshape(1, -1)
        h_prev = h_prev.reshape(1, -1)
    if x_t.shape[1] != w.W.shape[0] or h_prev.shape[1] != w.hidden or x_t.shape[0] != h_prev.shape[0]:
        raise ShapeError(
            f"gru_cell: input {x_t.shape} / state {h_prev.shape} do not fit weights {w.W.shape}, {w.U_h.shape}"
        )
    H = w.hidden
    xp = T.bias_add(x_t @ w.W, w.b)
    h = _step(xp[:, : 2 * H], xp[:, 2 * H :], h_prev, w, None)
    return h.reshape(-1) if single else h


def _sigm(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def gru_scan(xp: Tensor, mask: np.ndarray, U: Tensor, U_h: Tensor, reverse=False) -> Tensor:
    """Fused recurrence over precomputed input projections ``xp`` (N x T x 3h).

    Same arithmetic as repeated :func:`gru_cell` steps, recorded as a single
    tape entry with a hand-written backward-through-time.
    """
    N, steps, _ = xp.shape
    H = U_h.shape[0]
    X, Ud, Uhd = xp.data, U.data, U_h.data
    m = np.asarray(mask, dtype=np.float64)
    order = list(range(steps - 1, -1, -1)) if reverse else list(range(steps))
    out = np.empty((N, steps, H))
    cache = []
    h = np.zeros((N, H))
    for t in order:
        zr = _sigm(X[:, t, : 2 * H] + h @ Ud)
        z, r = zr[:, :H], zr[:, H:]
        rh = r * h
        c = np.tanh(X[:, t, 2 * H :] + rh @ Uhd)
        mz = m[:, t : t + 1] * z
        h_new = h + mz * (c - h)
        cache.append((h, zr, rh, c, mz))
        out[:, t] = h_new
        h = h_new

    def backward(g):
        dX = np.zeros_like(X)
        dU = np.zeros_like(Ud)
        dUh = np.zeros_like(Uhd)
        carry = np.zeros((N, H))
        for t, (h_prev, zr, rh, c, mz) in zip(reversed(order), reversed(cache)):
            dh = g[:, t] + carry
            r = zr[:, H:]
            mt = m[:, t : t + 1]
            dpre_c = dh * mz * (1.0 - c * c)
            dz = dh * mt * (c - h_prev)
            d_rh = dpre_c @ Uhd.T
            dr = d_rh * h_prev
            dzr = np.concatenate([dz, dr], axis=1) * zr * (1.0 - zr)
            dX[:, t, : 2 * H] = dzr
            dX[:, t, 2 * H :] = dpre_c
            dUh += rh.T @ dpre_c
            dU += h_prev.T @ dzr
            carry = dh * (1.0 - mz) + d_rh * r + dzr @ Ud.T
        return dX, dU, dUh

    return T.custom_op("gru_scan", out, (xp, U, U_h), backward)


def run_gru(xs: Tensor, mask: np.ndarray, w: GRUWeights, reverse=False, fused=True) -> Tensor:
    """Run a GRU over ``xs`` (N x T x d) and return all states (N x T x h).

    ``fused=False`` unrolls the recurrence into elementary tape ops instead of
    one :func:`gru_scan` record; both compute the same values.
    """
    N, steps, d = xs.shape
    H = w.hidden
    if d != w.W.shape[0]:
        raise ShapeError(f"run_gru: input dim {d} does not match weights {w.W.shape}")
    xp = T.bias_add(xs.reshape(N * steps, d) @ w.W, w.b).reshape(N, steps, 3 * H)
    if fused:
        return gru_scan(xp, mask, w.U, w.U_h, reverse)
    zr_steps = T.unstack(xp[:, :, : 2 * H], axis=1)
    h_steps = T.unstack(xp[:, :, 2 * H :], axis=1)
    full = bool(np.all(mask))
    h = Tensor(np.zeros((N, H)))
    outs = [None] * steps
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        m = None if full else Tensor(np.repeat(mask[:, t : t + 1], H, axis=1))
        h = _step(zr_steps[t], h_steps[t], h, w, m)
        outs[t] = h
    return T.stack(outs, axis=1)


def bigru(xs, mask, fwd: GRUWeights, bwd: GRUWeights, fused=True) -> Tensor:
    return T.concat(
        [run_gru(xs, mask, fwd, fused=fused), run_gru(xs, mask, bwd, reverse=True, fused=fused)], axis=2
    )


def attend(Hs: Tensor, mask: np.ndarray, att: AttentionWeights):
    """Additive attention pooling; returns (pooled N x D, weights N x T)."""
    N, steps, D = Hs.shape
    u = T.tanh(T.bias_add(Hs.reshape(N * steps, D) @ att.W, att.b))
    logits = (u @ att.u.reshape(D, 1)).reshape(N, steps)
    if not np.all(mask):
        logits = logits + Tensor(np.where(mask > 0, 0.0, MASK_LOGIT))
    alpha = T.softmax(logits, axis=1)
    pooled = T.matmul(alpha.reshape(N, 1, steps), Hs).reshape(N, D)
    return pooled, alpha


@dataclass
class EncodedBatch:
    word_ids: np.ndarray  # (R, J) int
    word_mask: np.ndarray  # (R, J) float
    review_index: np.ndarray  # (B, K) int, 0 = padding
    review_mask: np.ndarray  # (B, K) float

    @property
    def n_songs(self):
        return self.review_index.shape[0]


def make_batch(songs: Sequence[Sequence[Sequence[int]]], ids: Sequence | None = None) -> EncodedBatch:
    """Pad a list of songs (each a list of token-id lists) into an :class:`EncodedBatch`.

    Empty reviews are dropped; a song left with no reviews is an error.
    """
    reviews, per_song = [], []
    for pos, song in enumerate(songs):
        kept = [np.asarray(r, dtype=np.intp) for r in song if len(r) > 0]
        if not kept:
            sid = ids[pos] if ids is not None else pos
            raise DataError(f"sample {sid!r} has no usable reviews")
        per_song.append(list(range(len(reviews) + 1, len(reviews) + 1 + len(kept))))
        reviews.extend(kept)
    J = max(len(r) for r in reviews)
    K = max(len(s) for s in per_song)
    word_ids = np.zeros((len(reviews), J), dtype=np.intp)
    word_mask = np.zeros((len(reviews), J))
    for i, r in enumerate(reviews):
        word_ids[i, : len(r)] = r
        word_mask[i, : len(r)] = 1.0
    review_index = np.zeros((len(per_song), K), dtype=np.intp)
    review_mask = np.zeros((len(per_song), K))
    for i, s in enumerate(per_song):
        review_index[i, : len(s)] = s
        review_mask[i, : len(s)] = 1.0
    return EncodedBatch(word_ids, word_mask, review_index, review_mask)


def encode_batch(batch: EncodedBatch, params: HanParams, return_attention=False):
    """Song vectors (B x 2h_s) for a padded batch."""
    emb = T.take(params.embedding, batch.word_ids)
    Hw = bigru(emb, batch.word_mask, params.word_fwd, params.word_bwd)
    x_rev, alpha_w = attend(Hw, batch.word_mask, params.word_att)
    width = x_rev.shape[1]
    padded = T.concat([Tensor(np.zeros((1, width))), x_rev], axis=0)
    seq = T.take(padded, batch.review_index)
    Hs = bigru(seq, batch.review_mask, params.review_fwd, params.review_bwd)
    X, alpha_s = attend(Hs, batch.review_mask, params.review_att)
    if return_attention:
        return X, alpha_w.data, alpha_s.data
    return X


def encode_review(tokens: Sequence[int], params: HanParams):
    """Review vector ``x_i`` (length 2h_w) and its word-attention weights."""
    ids = np.asarray(tokens, dtype=np.intp)
    ids = ids[ids != 0]
    if ids.size == 0:
        raise DataError("review has no tokens after masking")
    emb = T.take(params.embedding, ids.reshape(1, -1))
    mask = np.ones((1, ids.size))
    Hw = bigru(emb, mask, params.word_fwd, params.word_bwd)
    x, alpha = attend(Hw, mask, params.word_att)
    return x.reshape(-1), alpha.data[0]


def encode_song(reviews: Sequence[Sequence[int]], params: HanParams, sample_id=None):
    """Song vector ``X`` (length 2h_s) plus word- and review-level attention weights."""
    cleaned = [[t for t in r if t != 0] for r in reviews]
    batch = make_batch([cleaned], ids=[sample_id if sample_id is not None else "<song>"])
    X, alpha_w, alpha_s = encode_batch(batch, params, return_attention=True)
    return X.reshape(-1), alpha_w, alpha_s[0]
