"""Functional redundancy graph over operators and its single-linkage clustering."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from spectral_frg import __version__
from spectral_frg.errors import (
    ConfigurationError,
    ContainerParseError,
    EmptyInputError,
    OperatorLookupError,
    ParameterError,
)
from spectral_frg.spectral_core import HALF_PI, SpectralSignature, embedding_distance

GRAPH_FORMAT = "spectral-frg/redundancy-graph"
CLUSTER_FORMAT = "spectral-frg/cluster-assignment"


@dataclass(frozen=True)
class RedundancyGraph:
    node_names: tuple[str, ...]
    distances: np.ndarray
    embedding_method: str = "spectral"

    def __post_init__(self):
        d = np.asarray(self.distances, dtype=np.float64)
        n = len(self.node_names)
        if d.shape != (n, n):
            raise ParameterError(f"distance matrix shape {d.shape} for {n} nodes")
        d.setflags(write=False)
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "node_names", tuple(self.node_names))

    def __len__(self) -> int:
        return len(self.node_names)

    def index(self, name: str) -> int:
        try:
            return self.node_names.index(name)
        except ValueError:
            raise OperatorLookupError(f"node {name!r} not in graph") from None

    def nearest_distance(self, i: int) -> float:
        """Distance from node ``i`` to its closest other node (pi/2 if alone)."""
        if len(self) < 2:
            return HALF_PI
        row = np.delete(self.distances[i], i)
        return float(row.min())

    def to_dict(self) -> dict:
        iu = np.triu_indices(len(self), k=1)
        return {
            "format": GRAPH_FORMAT,
            "tool_version": __version__,
            "embedding_method": self.embedding_method,
            "node_names": list(self.node_names),
            "distances_upper": [float(x) for x in self.distances[iu]],
        }

    @classmethod
    def from_dict(cls, doc) -> "RedundancyGraph":
        try:
            names = list(doc["node_names"])
            upper = np.asarray(doc["distances_upper"], dtype=np.float64)
            method = doc["embedding_method"]
        except (KeyError, TypeError):
            raise ConfigurationError(
                "graph document needs node_names, distances_upper, embedding_method"
            ) from None
        n = len(names)
        if upper.shape != (n * (n - 1) // 2,):
            raise ConfigurationError(
                f"graph document has {upper.size} distances for {n} nodes"
            )
        d = np.zeros((n, n))
        iu = np.triu_indices(n, k=1)
        d[iu] = upper
        d.T[iu] = upper
        return cls(tuple(names), d, method)


def build_frg(
    embeddings: Sequence,
    names: Sequence[str] | None = None,
    embedding_method: str | None = None,
) -> RedundancyGraph:
    """Complete graph with Fubini-Study edge weights.

    ``embeddings`` holds either spectral signatures or unit feature vectors;
    node order follows the input order.
    """
    n = len(embeddings)
    if n == 0:
        raise EmptyInputError("cannot build a redundancy graph over zero operators")
    if names is None:
        names = [getattr(e, "source_name", "") or f"op{i}" for i, e in enumerate(embeddings)]
    if len(names) != n:
        raise ParameterError(f"{len(names)} names for {n} embeddings")
    if embedding_method is None:
        embedding_method = (
            "spectral" if isinstance(embeddings[0], SpectralSignature) else "random_feature"
        )
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = embedding_distance(embeddings[i], embeddings[j])
    return RedundancyGraph(tuple(names), d, embedding_method)


@dataclass(frozen=True)
class ClusterAssignment:
    labels: dict[str, int]
    threshold_eps: float

    @property
    def n_clusters(self) -> int:
        return len(set(self.labels.values()))

    def members(self, cluster_id: int) -> list[str]:
        return [n for n, c in self.labels.items() if c == cluster_id]

    def to_dict(self) -> dict:
        return {
            "format": CLUSTER_FORMAT,
            "tool_version": __version__,
            "threshold_eps": self.threshold_eps,
            "labels": dict(self.labels),
        }


def cluster(g: RedundancyGraph, eps: float = 0.1) -> ClusterAssignment:
    """Single-linkage agglomeration of nodes joined by edges of weight <= eps.

    Edges are processed in increasing weight, ties by the lexicographically
    smallest ``(i, j)`` node-index pair. Cluster ids are assigned in order of
    each cluster's smallest node index.
    """
    if eps < 0:
        raise ParameterError(f"eps must be non-negative, got {eps}")
    n = len(g)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    iu, ju = np.triu_indices(n, k=1)
    w = g.distances[iu, ju]
    order = np.lexsort((ju, iu, w))
    for k in order:
        if w[k] > eps:
            break
        ri, rj = find(int(iu[k])), find(int(ju[k]))
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    ids: dict[int, int] = {}
    labels = {}
    for i, name in enumerate(g.node_names):
        root = find(i)
        labels[name] = ids.setdefault(root, len(ids))
    return ClusterAssignment(labels, float(eps))


def cluster_representative(g: RedundancyGraph, assignment: ClusterAssignment, cluster_id: int) -> str:
    """Medoid of the cluster; ties go to the smallest node index."""
    idx = [g.index(n) for n in assignment.members(cluster_id)]
    if not idx:
        raise OperatorLookupError(f"unknown cluster id {cluster_id}")
    idx.sort()
    sub = g.distances[np.ix_(idx, idx)]
    sums = sub.sum(axis=1)
    return g.node_names[idx[int(np.argmin(sums))]]


def representatives(g: RedundancyGraph, assignment: ClusterAssignment) -> dict[int, str]:
    return {c: cluster_representative(g, assignment, c) for c in range(assignment.n_clusters)}


def save_graph(g: RedundancyGraph, path) -> None:
    Path(path).write_text(json.dumps(g.to_dict(), sort_keys=True) + "\n")


def load_graph(path) -> RedundancyGraph:
    try:
        return RedundancyGraph.from_dict(json.loads(Path(path).read_text()))
    except json.JSONDecodeError as exc:
        raise ContainerParseError(f"{path}: malformed graph document: {exc.msg}", exc.pos) from None
