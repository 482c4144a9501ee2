"""Auxiliary label-similarity matrices from an is-a hierarchy or hit counts."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

SYNONYM_DIRECTIVE = "@syn"


class SimilarityError(ValueError):
    pass


@dataclass
class HierarchyGraph:
    """Undirected is-a graph. ``synonyms`` maps label strings to node names."""

    nodes: set = field(default_factory=set)
    adjacency: dict = field(default_factory=dict)
    synonyms: dict = field(default_factory=dict)

    @classmethod
    def from_edges(cls, edges, synonyms=None):
        g = cls()
        for a, b in edges:
            g.add_edge(a, b)
        g.synonyms.update(synonyms or {})
        return g

    def add_edge(self, child, parent):
        for v in (child, parent):
            if v not in self.nodes:
                self.nodes.add(v)
                self.adjacency[v] = set()
        if child != parent:
            self.adjacency[child].add(parent)
            self.adjacency[parent].add(child)

    def resolve(self, label):
        node = self.synonyms.get(label, label)
        if node not in self.nodes:
            raise SimilarityError(f"label {label!r} does not resolve to a hierarchy node")
        return node

    def distances_from(self, source):
        dist = {source: 0}
        queue = deque([source])
        while queue:
            v = queue.popleft()
            for w in self.adjacency[v]:
                if w not in dist:
                    dist[w] = dist[v] + 1
                    queue.append(w)
        return dist


@dataclass
class HitCounts:
    single: dict = field(default_factory=dict)
    pair: dict = field(default_factory=dict)

    def pair_count(self, a, b):
        return self.pair.get(frozenset((a, b)), 0.0)

    def set_pair(self, a, b, count):
        if count < 0:
            raise SimilarityError(f"negative pair count for ({a!r}, {b!r})")
        self.pair[frozenset((a, b))] = float(count)


def _names(labels):
    return list(labels.names) if hasattr(labels, "names") else list(labels)


def wordnet_similarity(graph: HierarchyGraph, labels) -> np.ndarray:
    """``R_ij = 1 / (shortest path length + 1)`` over the undirected hierarchy."""
    names = _names(labels)
    nodes = [graph.resolve(nm) for nm in names]
    L = len(names)
    R = np.eye(L)
    for i in range(L):
        dist = graph.distances_from(nodes[i])
        for j in range(i + 1, L):
            if nodes[j] not in dist:
                raise SimilarityError(
                    f"labels {names[i]!r} and {names[j]!r} are disconnected in the hierarchy"
                )
            R[i, j] = R[j, i] = 1.0 / (dist[nodes[j]] + 1.0)
    return R


def cooccurrence_similarity(counts: HitCounts, labels) -> np.ndarray:
    """Dice coefficient ``HC(i,j) / (HC(i) + HC(j))`` with a unit diagonal."""
    names = _names(labels)
    for nm in names:
        c = counts.single.get(nm)
        if c is None or c <= 0:
            raise SimilarityError(f"missing or zero single hit count for label {nm!r}")
    L = len(names)
    R = np.eye(L)
    for i in range(L):
        for j in range(i + 1, L):
            hc = counts.pair_count(names[i], names[j])
            R[i, j] = R[j, i] = hc / (counts.single[names[i]] + counts.single[names[j]])
    return R


def _content_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].rstrip("\r\n")
            if line.strip():
                yield lineno, line


def read_hierarchy(path) -> HierarchyGraph:
    """Parse ``child<TAB>parent`` lines; ``@syn<TAB>label<TAB>node`` adds a synonym."""
    g = HierarchyGraph()
    for lineno, line in _content_lines(path):
        parts = [p.strip() for p in line.split("\t")]
        if parts[0] == SYNONYM_DIRECTIVE:
            if len(parts) != 3:
                raise SimilarityError(f"{path}:{lineno}: synonym line needs label and node")
            g.synonyms[parts[1]] = parts[2]
        elif len(parts) == 2 and all(parts):
            g.add_edge(parts[0], parts[1])
        else:
            raise SimilarityError(f"{path}:{lineno}: expected 'child<TAB>parent'")
    return g


def read_hit_counts(path) -> HitCounts:
    counts = HitCounts()
    for lineno, line in _content_lines(path):
        parts = [p.strip() for p in line.split("\t")]
        try:
            value = float(parts[-1])
        except ValueError:
            raise SimilarityError(f"{path}:{lineno}: count is not a number") from None
        if value < 0:
            raise SimilarityError(f"{path}:{lineno}: negative count")
        if len(parts) == 2:
            counts.single[parts[0]] = value
        elif len(parts) == 3:
            counts.set_pair(parts[0], parts[1], value)
        else:
            raise SimilarityError(f"{path}:{lineno}: expected 2 or 3 tab-separated fields")
    return counts
