"""Typed music-style graph: file parser and knowledge correlation matrix.

Graph files are UTF-8 text with two blocks::

    # comment
    styles:
    rock
    folk
    folk_rock
    edges:
    folk_rock rock fusion
    folk_rock folk fusion

Relations are ``super_subordinate`` (parent first), ``coordinate`` and
``fusion``.  Edges are stored undirected; the declared order is kept only for
display.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .exceptions import DataError, GraphParseError

RELATIONS = ("super_subordinate", "coordinate", "fusion")
DEFAULT_SCORES = {"fusion": 1.0, "super_subordinate": 2.0, "coordinate": 3.0}


@dataclass(frozen=True)
class Edge:
    a: str
    b: str
    relation: str


@dataclass
class StyleGraph:
    styles: list
    edges: list = field(default_factory=list)

    def __post_init__(self):
        self.styles = list(self.styles)
        if len(set(self.styles)) != len(self.styles):
            raise DataError("duplicate style names in graph")
        known = set(self.styles)
        seen = set()
        for e in self.edges:
            if e.relation not in RELATIONS:
                raise DataError(f"unknown relation {e.relation!r}")
            for s in (e.a, e.b):
                if s not in known:
                    raise DataError(f"edge names unknown style {s!r}")
            if e.a == e.b:
                raise DataError(f"self-edge on {e.a!r}")
            pair = frozenset((e.a, e.b))
            if pair in seen:
                raise DataError(f"duplicate relation for pair {e.a!r}/{e.b!r}")
            seen.add(pair)

    @property
    def index(self):
        return {s: i for i, s in enumerate(self.styles)}

    def neighbors(self, style):
        out = []
        for e in self.edges:
            if e.a == style:
                out.append((e.b, e.relation))
            elif e.b == style:
                out.append((e.a, e.relation))
        return out

    def related(self, a, b):
        return any({e.a, e.b} == {a, b} for e in self.edges)

    def reordered(self, styles: Sequence[str]) -> "StyleGraph":
        """Same edges with a different label order (must be a permutation)."""
        if sorted(styles) != sorted(self.styles):
            raise DataError("reordering must be a permutation of the declared styles")
        return StyleGraph(list(styles), list(self.edges))

    def to_text(self):
        lines = ["styles:", *self.styles, "edges:"]
        lines += [f"{e.a} {e.b} {e.relation}" for e in self.edges]
        return "\n".join(lines) + "\n"


def parse_style_graph_text(text: str, source: str = "<graph>") -> StyleGraph:
    styles, edges = [], []
    index = {}
    seen_pairs = {}
    block = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line in ("styles:", "edges:"):
            if line == "edges:" and block is None:
                raise GraphParseError("edges: block before styles: block", lineno)
            if line == "styles:" and block is not None:
                raise GraphParseError("styles: block declared twice", lineno)
            block = line[:-1]
            continue
        if block is None:
            raise GraphParseError(f"content before a block header: {line!r}", lineno)
        if block == "styles":
            if " " in line or "\t" in line:
                raise GraphParseError(f"style names cannot contain whitespace: {line!r}", lineno)
            if line in index:
                raise GraphParseError(f"style {line!r} declared twice", lineno)
            index[line] = len(styles)
            styles.append(line)
            continue
        parts = line.split()
        if len(parts) != 3:
            raise GraphParseError(f"expected '<style_a> <style_b> <relation>', got {line!r}", lineno)
        a, b, rel = parts
        if rel not in RELATIONS:
            raise GraphParseError(f"unknown relation {rel!r}", lineno)
        for s in (a, b):
            if s not in index:
                raise GraphParseError(f"undeclared style {s!r}", lineno)
        if a == b:
            raise GraphParseError(f"self-edge on {a!r}", lineno)
        pair = frozenset((a, b))
        if pair in seen_pairs:
            raise GraphParseError(
                f"pair {a!r}/{b!r} already related at line {seen_pairs[pair]}", lineno
            )
        seen_pairs[pair] = lineno
        edges.append(Edge(a, b, rel))
    if not styles:
        raise GraphParseError(f"{source}: no styles declared")
    return StyleGraph(styles, edges)


def parse_style_graph(path) -> StyleGraph:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise DataError(f"cannot read style graph {path}: {err}") from err
    return parse_style_graph_text(text, str(path))


def bundled_graph(name: str = "styles8") -> StyleGraph:
    """Load one of the graphs shipped with the package (``styles8`` or ``styles22``)."""
    res = resources.files("krf") / "graphs" / f"{name}.graph"
    if not res.is_file():
        raise DataError(f"no bundled graph named {name!r}")
    return parse_style_graph_text(res.read_text(encoding="utf-8"), f"{name}.graph")


def check_scores(scores: Mapping[str, float] | None) -> dict:
    merged = dict(DEFAULT_SCORES)
    if scores:
        for rel, val in scores.items():
            if rel not in RELATIONS:
                raise ValueError(f"unknown relation {rel!r} in relation scores")
            merged[rel] = float(val)
    for rel, val in merged.items():
        if not val > 0:
            raise ValueError(f"relation score for {rel} must be positive, got {val}")
    return merged


def knowledge_matrix(graph: StyleGraph, scores: Mapping[str, float] | None = None) -> np.ndarray:
    """|C|x|C| matrix with the relation score at every related pair, zero elsewhere.

    The diagonal is zero; self-loops are added later during normalization.
    """
    s = check_scores(scores)
    idx = graph.index
    n = len(graph.styles)
    out = np.zeros((n, n))
    for e in graph.edges:
        i, j = idx[e.a], idx[e.b]
        out[i, j] = out[j, i] = s[e.relation]
    return out
