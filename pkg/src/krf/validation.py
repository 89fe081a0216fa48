"""Input checks for the estimator API."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .exceptions import DataError


def check_songs(X):
    """Normalize ``X`` to (list of review-string lists, list of ids).

    Accepts ``SongSample`` objects, lists of review strings, or bare strings
    (one review per song).
    """
    if isinstance(X, (str, bytes)):
        raise DataError("X must be a sequence of songs, not a single string")
    songs, ids = [], []
    for pos, item in enumerate(X):
        if hasattr(item, "reviews"):
            reviews, sid = list(item.reviews), getattr(item, "id", pos)
        elif isinstance(item, str):
            reviews, sid = [item], pos
        else:
            reviews, sid = list(item), pos
        if not reviews:
            raise DataError(f"sample {sid!r} has no reviews")
        if not all(isinstance(r, str) for r in reviews):
            raise DataError(f"sample {sid!r}: reviews must be strings")
        songs.append(reviews)
        ids.append(sid)
    if not songs:
        raise DataError("X is empty")
    return songs, ids


def check_targets(y, styles: Sequence[str], n_samples: int | None = None) -> np.ndarray:
    """0/1 indicator matrix (n_samples x n_styles) from label collections or an indicator array."""
    index = {s: i for i, s in enumerate(styles)}
    if isinstance(y, np.ndarray) and y.ndim == 2:
        if y.shape[1] != len(styles):
            raise DataError(f"y has {y.shape[1]} columns but there are {len(styles)} styles")
        if not np.isin(y, (0, 1)).all():
            raise DataError("indicator targets must be 0/1")
        Y = y.astype(np.int64)
    else:
        Y = np.zeros((len(y), len(styles)), dtype=np.int64)
        for i, labels in enumerate(y):
            if hasattr(labels, "labels"):
                labels = labels.labels
            if isinstance(labels, str):
                labels = [labels]
            for lab in labels:
                if lab not in index:
                    raise DataError(f"target {i}: unknown style {lab!r}")
                Y[i, index[lab]] = 1
    if n_samples is not None and len(Y) != n_samples:
        raise DataError(f"X has {n_samples} songs but y has {len(Y)} rows")
    if np.any(Y.sum(axis=1) == 0):
        raise DataError("every sample needs at least one gold style")
    return Y
