"""Song datasets: JSONL I/O, deterministic splits and a planted synthetic corpus."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .correlation import matrix_to_csv
from .exceptions import DataError
from .kg import StyleGraph


@dataclass(frozen=True)
class SongSample:
    id: str
    title: str
    reviews: tuple
    labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "reviews", tuple(self.reviews))
        object.__setattr__(self, "labels", tuple(self.labels))
        if not self.reviews:
            raise DataError(f"sample {self.id!r} has no reviews")
        if not self.labels:
            raise DataError(f"sample {self.id!r} has no labels")
        if len(set(self.labels)) != len(self.labels):
            raise DataError(f"sample {self.id!r} repeats a label")

    @property
    def label_set(self):
        return frozenset(self.labels)

    def to_record(self):
        return {"id": self.id, "title": self.title, "reviews": list(self.reviews), "labels": list(self.labels)}


@dataclass
class DatasetSplits:
    train: list
    validation: list
    test: list
    seed: int

    def __post_init__(self):
        ids = [s.id for part in (self.train, self.validation, self.test) for s in part]
        if len(set(ids)) != len(ids):
            raise DataError("splits overlap")

    def part(self, name):
        if name not in ("train", "validation", "test"):
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)


def _parse_record(obj, where, styles=None):
    if not isinstance(obj, dict):
        raise DataError(f"{where}: expected a JSON object")
    for key in ("id", "reviews", "labels"):
        if key not in obj:
            raise DataError(f"{where}: missing field {key!r}")
    sid, reviews, labels = obj["id"], obj["reviews"], obj["labels"]
    title = obj.get("title", "")
    if not isinstance(sid, str) or not sid:
        raise DataError(f"{where}: id must be a non-empty string")
    if not isinstance(title, str):
        raise DataError(f"{where}: title must be a string")
    if not isinstance(reviews, list) or not reviews or not all(isinstance(r, str) for r in reviews):
        raise DataError(f"{where}: reviews must be a non-empty list of strings")
    if not isinstance(labels, list) or not labels or not all(isinstance(lab, str) for lab in labels):
        raise DataError(f"{where}: labels must be a non-empty list of strings")
    if styles is not None:
        unknown = [lab for lab in labels if lab not in styles]
        if unknown:
            raise DataError(f"{where}: unknown label(s) {unknown}")
    try:
        return SongSample(sid, title, reviews, labels)
    except DataError as err:
        raise DataError(f"{where}: {err}") from None


def load_dataset(path, styles: Sequence[str] | None = None) -> list:
    """Read one JSON object per line (fields id/title/reviews/labels)."""
    style_set = set(styles) if styles is not None else None
    samples, seen = [], set()
    try:
        fh = open(path, encoding="utf-8")
    except OSError as err:
        raise DataError(f"cannot read dataset {path}: {err}") from err
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}: record at line {lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise DataError(f"{where}: invalid JSON ({err.msg})") from None
            sample = _parse_record(obj, where, style_set)
            if sample.id in seen:
                raise DataError(f"{where}: duplicate id {sample.id!r}")
            seen.add(sample.id)
            samples.append(sample)
    return samples


def save_dataset(path, samples: Sequence[SongSample]):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_record(), ensure_ascii=False) + "\n")


def infer_styles(samples) -> list:
    return sorted({lab for s in samples for lab in s.labels})


def split(samples: Sequence[SongSample], seed: int) -> DatasetSplits:
    """Shuffle by ``seed``; validation gets floor(21% N), test floor(9% N), train the rest."""
    n = len(samples)
    if n < 10:
        raise DataError(f"need at least 10 samples to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_val = (n * 21) // 100
    n_test = (n * 9) // 100
    n_train = n - n_val - n_test
    pick = [samples[i] for i in order]
    return DatasetSplits(pick[:n_train], pick[n_train : n_train + n_val], pick[n_train + n_val :], seed)


# -- planted synthetic corpus -----------------------------------------------

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


def _pseudo_words(rng, count, taken):
    words = []
    while len(words) < count:
        n_syll = int(rng.integers(2, 4))
        w = "".join(rng.choice(list(_CONSONANTS)) + rng.choice(list(_VOWELS)) for _ in range(n_syll))
        if w not in taken:
            taken.add(w)
            words.append(w)
    return words


@dataclass
class SyntheticConfig:
    n_samples: int = 2000
    seed: int = 7
    related_boost: float = 5.0
    size_probs: tuple = (0.5, 0.5)  # label-set sizes 2 and 3
    minority: str | None = None
    minority_rate: float = 0.015
    majority_boost: float = 2.5
    style_vocab: int = 8
    indicators: tuple = (3, 8)
    reviews: tuple = (2, 4)
    signal_ratio: float = 0.3
    distractor_rate: float = 0.0
    noise_vocab: int = 300
    rare_pair_noise: float = 0.0

    def validate(self, n_styles):
        if n_styles < 6:
            raise DataError(f"synthetic corpus needs >= 6 styles, got {n_styles}")
        if self.n_samples < 1:
            raise DataError("n_samples must be positive")
        if not 0 < self.signal_ratio <= 1:
            raise DataError("signal_ratio must lie in (0, 1]")
        if not 0 < self.minority_rate <= 0.02:
            raise DataError("minority_rate must lie in (0, 0.02]")
        if len(self.size_probs) != 2 or abs(sum(self.size_probs) - 1) > 1e-9 or min(self.size_probs) < 0:
            raise DataError("size_probs must be two non-negative weights summing to 1")
        lo, hi = self.indicators
        if not 1 <= lo <= hi:
            raise DataError("indicators must be an increasing (low, high) pair")
        lo, hi = self.reviews
        if not 1 <= lo <= hi:
            raise DataError("reviews must be an increasing (low, high) pair")
        if not 0 <= self.rare_pair_noise < 1 or not 0 <= self.distractor_rate < 1:
            raise DataError("noise rates must lie in [0, 1)")


@dataclass
class SyntheticCorpus:
    samples: list
    styles: list
    pair_table: np.ndarray  # expected co-occurrence probability per pair; diagonal = marginals
    marginals: np.ndarray
    minority: str
    majority: str
    style_words: dict = field(default_factory=dict)
    noise_words: list = field(default_factory=list)

    def pair_table_csv(self):
        return matrix_to_csv(self.pair_table, self.styles)


def _label_set_distribution(n, pop, weight, size_probs):
    subsets, probs = [], []
    for size, p_size in zip((2, 3), size_probs):
        combos = list(itertools.combinations(range(n), size))
        w = np.array(
            [np.prod([pop[i] for i in c]) * np.prod([weight[i, j] for i, j in itertools.combinations(c, 2)])
             for c in combos]
        )
        subsets += combos
        probs.append(p_size * w / w.sum())
    return subsets, np.concatenate(probs)


def _pair_table(n, subsets, probs):
    table = np.zeros((n, n))
    for c, p in zip(subsets, probs):
        idx = np.asarray(c)
        table[np.ix_(idx, idx)] += p
    return table


def generate_synthetic(styles: Sequence[str], kg: StyleGraph, config: SyntheticConfig | None = None,
                       **overrides) -> SyntheticCorpus:
    """Planted multi-label corpus whose label correlations follow ``kg``.

    Label sets have 2 or 3 labels drawn from an explicit distribution where
    each kg-related pair multiplies the set weight by ``related_boost``.  One
    kg-linked minority style is tuned to ``minority_rate`` and its linked
    neighbour is boosted into the majority.  Every gold label plants 3-8
    indicator tokens from its own pseudo-word vocabulary; shared noise fills
    the rest at ``signal_ratio``.  ``rare_pair_noise`` replaces that fraction
    of label sets with a uniformly drawn unrelated pair.
    """
    cfg = config or SyntheticConfig()
    if overrides:
        cfg = SyntheticConfig(**{**cfg.__dict__, **overrides})
    styles = list(styles)
    n = len(styles)
    cfg.validate(n)
    if not kg.edges:
        raise DataError("synthetic corpus needs a knowledge graph with at least one edge")
    unknown = set(kg.styles) ^ set(styles)
    if unknown:
        raise DataError(f"graph and style list disagree on {sorted(unknown)}")
    index = {s: i for i, s in enumerate(styles)}
    rng = np.random.default_rng(cfg.seed)

    weight = np.ones((n, n))
    for e in kg.edges:
        i, j = index[e.a], index[e.b]
        weight[i, j] = weight[j, i] = cfg.related_boost

    if cfg.minority is None:
        linked = [s for s in reversed(styles) if kg.neighbors(s)]
        minority = linked[0]
    else:
        minority = cfg.minority
        if minority not in index:
            raise DataError(f"minority style {minority!r} is not in the style list")
        if not kg.neighbors(minority):
            raise DataError(f"minority style {minority!r} has no knowledge-graph relation")
    majority = kg.neighbors(minority)[0][0]
    m, M = index[minority], index[majority]

    pop = np.ones(n)
    pop[M] = cfg.majority_boost

    def marginal(pm):
        pop[m] = pm
        subsets, probs = _label_set_distribution(n, pop, weight, cfg.size_probs)
        return subsets, probs, _pair_table(n, subsets, probs)

    # the minority marginal is monotone in its popularity weight
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if marginal(mid)[2][m, m] < cfg.minority_rate:
            lo = mid
        else:
            hi = mid
    subsets, probs, table = marginal(lo)

    unrelated = [(i, j) for i, j in itertools.combinations(range(n), 2) if weight[i, j] == 1.0]
    noise_mass = cfg.rare_pair_noise
    if noise_mass > 0 and unrelated:
        noise_table = np.zeros((n, n))
        for i, j in unrelated:
            idx = np.asarray((i, j))
            noise_table[np.ix_(idx, idx)] += 1.0 / len(unrelated)
        table = (1 - noise_mass) * table + noise_mass * noise_table

    taken = set()
    style_words = {s: _pseudo_words(rng, cfg.style_vocab, taken) for s in styles}
    noise_words = _pseudo_words(rng, cfg.noise_vocab, taken)

    samples = []
    for k in range(cfg.n_samples):
        if noise_mass > 0 and unrelated and rng.random() < noise_mass:
            chosen = unrelated[int(rng.integers(len(unrelated)))]
        else:
            chosen = subsets[int(rng.choice(len(subsets), p=probs))]
        labels = [styles[i] for i in chosen]
        signal = []
        for lab in labels:
            count = int(rng.integers(cfg.indicators[0], cfg.indicators[1] + 1))
            signal += [style_words[lab][int(i)] for i in rng.integers(0, cfg.style_vocab, size=count)]
        n_noise = int(round(len(signal) * (1.0 - cfg.signal_ratio) / cfg.signal_ratio))
        noise = []
        others = [s for s in styles if s not in labels]
        for _ in range(n_noise):
            if cfg.distractor_rate > 0 and rng.random() < cfg.distractor_rate:
                src = style_words[others[int(rng.integers(len(others)))]]
                noise.append(src[int(rng.integers(len(src)))])
            else:
                noise.append(noise_words[int(rng.integers(len(noise_words)))])
        tokens = signal + noise
        order = rng.permutation(len(tokens))
        tokens = [tokens[i] for i in order]
        n_rev = int(rng.integers(cfg.reviews[0], cfg.reviews[1] + 1))
        n_rev = min(n_rev, len(tokens))
        cuts = np.sort(rng.choice(np.arange(1, len(tokens)), size=n_rev - 1, replace=False)) if n_rev > 1 else []
        pieces = np.split(np.asarray(tokens, dtype=object), cuts)
        reviews = [" ".join(p) for p in pieces]
        samples.append(SongSample(f"s{k:05d}", f"synthetic song {k}", reviews, labels))

    return SyntheticCorpus(
        samples=samples,
        styles=styles,
        pair_table=table,
        marginals=np.diag(table).copy(),
        minority=minority,
        majority=majority,
        style_words=style_words,
        noise_words=noise_words,
    )
