"""Two-layer GCN over the integrated correlation tensor, and the label-similarity heatmap."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .exceptions import ShapeError
from .tensor import Tensor


@dataclass
class GcnParams:
    H0: Tensor
    W1: Tensor
    W2: Tensor

    def named(self):
        return {"gcn.H0": self.H0, "gcn.W1": self.W1, "gcn.W2": self.W2}


def glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_gcn(rng, n_labels, label_dim=128, hidden=512, out_dim=128, h0_scale=0.1):
    return GcnParams(
        Tensor(rng.uniform(-h0_scale, h0_scale, size=(n_labels, label_dim)), requires_grad=True),
        Tensor(glorot(rng, label_dim, hidden), requires_grad=True),
        Tensor(glorot(rng, hidden, out_dim), requires_grad=True),
    )


def propagation_matrix(A_int) -> np.ndarray:
    """Sum of the statistical and knowledge slices (shared weights per layer)."""
    A = A_int.data if isinstance(A_int, Tensor) else np.asarray(A_int, dtype=np.float64)
    if A.ndim != 3 or A.shape[0] != 2 or A.shape[1] != A.shape[2]:
        raise ShapeError(f"integrated correlation tensor must be 2 x C x C, got {A.shape}")
    return A[0] + A[1]


def gcn_layer(A_int, H, W, slope=0.01) -> Tensor:
    """``LeakyReLU((A_int[0] + A_int[1]) @ H @ W)``."""
    A = propagation_matrix(A_int)
    H, W = T.as_tensor(H), T.as_tensor(W)
    if H.ndim != 2 or H.shape[0] != A.shape[0]:
        raise ShapeError(f"gcn_layer: features {H.shape} do not match {A.shape[0]} labels")
    if W.ndim != 2 or W.shape[0] != H.shape[1]:
        raise ShapeError(f"gcn_layer: weight {W.shape} does not match feature dim {H.shape[1]}")
    return T.leaky_relu(Tensor(A) @ H @ W, slope)


def style_representations(A_int, params: GcnParams, slope=0.01) -> Tensor:
    """Label representations ``H2`` (|C| x D2)."""
    return gcn_layer(A_int, gcn_layer(A_int, params.H0, params.W1, slope), params.W2, slope)


def label_similarity_heatmap(H2) -> np.ndarray:
    """Pairwise dot products of label rows, min-max scaled to [0, 1].

    When all similarities are equal every cell is 0.5.
    """
    H = H2.data if isinstance(H2, Tensor) else np.asarray(H2, dtype=np.float64)
    S = H @ H.T
    S = 0.5 * (S + S.T)
    lo, hi = S.min(), S.max()
    if hi == lo:
        return np.full_like(S, 0.5)
    return (S - lo) / (hi - lo)
