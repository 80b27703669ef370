"""Graph storage, ingestion, statistics, and synthetic generators.

Graphs are undirected, stored in compressed sparse row form (an offset array
plus a flat neighbor array).  Construction symmetrizes, deduplicates, and
drops self-loops; after that the structure is immutable and safe to share
across threads.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

log = logging.getLogger(__name__)

# Identity features for a graph this large would be a dense n x n matrix;
# past this size the caller must supply features explicitly.
IDENTITY_FEATURE_LIMIT = 20000


@dataclass
class Graph:
    """Undirected graph in CSR form with optional features and labels.

    Attributes
    ----------
    num_nodes : int
        Number of nodes; ids are contiguous integers 0..num_nodes-1.
    indptr : np.ndarray
        int64 array of length num_nodes+1; node v's neighbors live in
        neighbors[indptr[v]:indptr[v+1]].
    neighbors : np.ndarray
        int32 array of neighbor ids, sorted within each node's slice,
        no duplicates, no self-loops.
    features : np.ndarray or None
        float64 matrix (num_nodes, F); finite everywhere.
    labels : np.ndarray or None
        int64 array (num_nodes,); -1 marks an unlabeled node.
    node_ids : list of str
        Original identifier for each contiguous id.
    label_names : list of str
        Original label token for each class id.
    """

    num_nodes: int
    indptr: np.ndarray
    neighbors: np.ndarray
    features: np.ndarray | None = None
    labels: np.ndarray | None = None
    node_ids: list[str] = field(default_factory=list)
    label_names: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.node_ids:
            self.node_ids = [str(i) for i in range(self.num_nodes)]

    @property
    def num_edges(self) -> int:
        return len(self.neighbors) // 2

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors_of(self, v: int) -> np.ndarray:
        return self.neighbors[self.indptr[v]:self.indptr[v + 1]]

    def has_edge(self, u: int, v: int) -> bool:
        row = self.neighbors_of(u)
        i = np.searchsorted(row, v)
        return i < len(row) and row[i] == v

    def edge_array(self) -> np.ndarray:
        """All edges once as an (E, 2) int64 array with u < v, sorted."""
        u = np.repeat(np.arange(self.num_nodes, dtype=np.int64), self.degrees)
        v = self.neighbors.astype(np.int64)
        keep = u < v
        return np.stack([u[keep], v[keep]], axis=1)


def build_graph(num_nodes: int,
                edges: np.ndarray,
                features: np.ndarray | None = None,
                labels: np.ndarray | None = None,
                node_ids: list[str] | None = None,
                label_names: list[str] | None = None) -> tuple[Graph, int]:
    """Assemble a Graph from an (E, 2) edge array.

    Symmetrizes, deduplicates, and drops self-loops.  Returns the graph and
    the number of self-loops dropped.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= num_nodes):
        raise ValueError("edge endpoint out of range")
    self_loops = int(np.count_nonzero(edges[:, 0] == edges[:, 1]))
    edges = edges[edges[:, 0] != edges[:, 1]]
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    canon = np.unique(np.stack([lo, hi], axis=1), axis=0) if len(lo) else np.empty((0, 2), np.int64)

    both_u = np.concatenate([canon[:, 0], canon[:, 1]])
    both_v = np.concatenate([canon[:, 1], canon[:, 0]])
    order = np.lexsort((both_v, both_u))
    both_u, both_v = both_u[order], both_v[order]
    indptr = np.zeros(num_nodes + 1, dtype=np.int64)
    np.add.at(indptr, both_u + 1, 1)
    indptr = np.cumsum(indptr)
    g = Graph(num_nodes=num_nodes,
              indptr=indptr,
              neighbors=both_v.astype(np.int32),
              features=features,
              labels=labels,
              node_ids=node_ids or [],
              label_names=label_names or [])
    return g, self_loops


def _lines(source: str | Path | Iterable[str]) -> Iterator[tuple[int, str]]:
    """Yield (line number, stripped content), skipping blanks and # comments."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            yield from _lines(list(fh))
        return
    for i, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield i, line


def load_graph(edge_source: str | Path | Iterable[str],
               feature_source: str | Path | Iterable[str] | None = None,
               label_source: str | Path | Iterable[str] | None = None) -> Graph:
    """Read a graph from edge/feature/label line streams.

    Edge lines hold two whitespace-separated node identifiers.  Node ids are
    assigned contiguously in first-seen order.  Duplicate edges collapse,
    self-loops are dropped with a warning count, and edges are undirected.

    Feature lines hold "<id> <f1> ... <fF>"; every node must get exactly F
    finite values.  Label lines hold "<id> <label-token>".  Without a feature
    source, identity features are used (graphs of at most
    IDENTITY_FEATURE_LIMIT nodes only).
    """
    id_map: dict[str, int] = {}
    node_ids: list[str] = []

    def intern(token: str) -> int:
        if token not in id_map:
            id_map[token] = len(node_ids)
            node_ids.append(token)
        return id_map[token]

    raw_edges = []
    for lineno, line in _lines(edge_source):
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"edge line {lineno}: expected two node identifiers, got {line!r}")
        raw_edges.append((intern(parts[0]), intern(parts[1])))
    if not raw_edges:
        raise ValueError("graph has zero edges")

    n = len(node_ids)
    features: np.ndarray | None = None
    if feature_source is not None:
        features = np.zeros((n, 0), dtype=np.float64)
        seen = np.zeros(n, dtype=bool)
        width = -1
        for lineno, line in _lines(feature_source):
            parts = line.split()
            if parts[0] not in id_map:
                raise ValueError(f"feature line {lineno}: unknown node {parts[0]!r}")
            vals = [float(p) for p in parts[1:]]
            if width == -1:
                width = len(vals)
                if width == 0:
                    raise ValueError(f"feature line {lineno}: no feature values")
                features = np.zeros((n, width), dtype=np.float64)
            elif len(vals) != width:
                raise ValueError(f"feature line {lineno}: expected {width} values, got {len(vals)}")
            v = id_map[parts[0]]
            features[v] = vals
            seen[v] = True
        if not seen.all():
            missing = node_ids[int(np.flatnonzero(~seen)[0])]
            raise ValueError(f"feature row missing for node {missing!r}")
        if not np.isfinite(features).all():
            raise ValueError("non-finite feature value")
    else:
        if n > IDENTITY_FEATURE_LIMIT:
            raise ValueError(
                f"graph has {n} nodes; identity features are capped at "
                f"{IDENTITY_FEATURE_LIMIT}, supply a feature source")
        features = np.eye(n, dtype=np.float64)

    labels: np.ndarray | None = None
    label_names: list[str] = []
    if label_source is not None:
        labels = np.full(n, -1, dtype=np.int64)
        class_map: dict[str, int] = {}
        for lineno, line in _lines(label_source):
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"label line {lineno}: expected '<id> <label>', got {line!r}")
            if parts[0] not in id_map:
                raise ValueError(f"label line {lineno}: unknown node {parts[0]!r}")
            if parts[1] not in class_map:
                class_map[parts[1]] = len(label_names)
                label_names.append(parts[1])
            labels[id_map[parts[0]]] = class_map[parts[1]]

    g, dropped = build_graph(n, np.array(raw_edges, dtype=np.int64),
                             features=features, labels=labels,
                             node_ids=node_ids, label_names=label_names)
    if dropped:
        log.warning("dropped %d self-loop(s)", dropped)
    if g.num_edges == 0:
        raise ValueError("graph has zero edges")
    return g


def save_edges(g: Graph, path: str | Path) -> None:
    """Write the canonical edge list: one "a b" line per edge, tokens ordered
    lexicographically within the line, lines sorted lexicographically.

    load_graph followed by save_edges round-trips the file byte for byte.
    """
    lines = []
    for u, v in g.edge_array():
        a, b = g.node_ids[u], g.node_ids[v]
        if b < a:
            a, b = b, a
        lines.append(f"{a} {b}\n")
    lines.sort()
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(lines)


def save_features(g: Graph, path: str | Path) -> None:
    if g.features is None:
        raise ValueError("graph has no features")
    with open(path, "w", encoding="utf-8") as fh:
        for v in range(g.num_nodes):
            vals = " ".join(f"{x:.17g}" for x in g.features[v])
            fh.write(f"{g.node_ids[v]} {vals}\n")


def save_labels(g: Graph, path: str | Path) -> None:
    if g.labels is None:
        raise ValueError("graph has no labels")
    with open(path, "w", encoding="utf-8") as fh:
        for v in range(g.num_nodes):
            if g.labels[v] >= 0:
                name = g.label_names[g.labels[v]] if g.label_names else str(g.labels[v])
                fh.write(f"{g.node_ids[v]} {name}\n")


@dataclass
class DegreeStats:
    avg_degree: float
    max_degree: int
    clustering_coefficient: float


def triangles_through_node(g: Graph, v: int) -> int:
    """Number of edges among v's neighbors (= triangles containing v)."""
    nbrs = g.neighbors_of(v)
    count = 0
    for a in nbrs:
        count += len(np.intersect1d(g.neighbors_of(int(a)), nbrs, assume_unique=True))
    return count // 2


def local_clustering(g: Graph, v: int) -> float:
    d = int(g.degrees[v])
    if d < 2:
        return 0.0
    return triangles_through_node(g, v) / (d * (d - 1) / 2)


def degree_stats(g: Graph) -> DegreeStats:
    """Average degree, maximum degree, and mean local clustering coefficient.

    Nodes of degree below 2 contribute zero to the clustering mean.
    """
    if g.num_edges == 0:
        raise ValueError("degree_stats requires at least one edge")
    degs = g.degrees
    c = sum(local_clustering(g, v) for v in range(g.num_nodes)) / g.num_nodes
    return DegreeStats(avg_degree=2 * g.num_edges / g.num_nodes,
                       max_degree=int(degs.max()),
                       clustering_coefficient=c)


def expected_ego_edges(d: float, d_max: float, c: float) -> float:
    """Estimated edge count of a random node's ego-network on a graph with
    average degree d, maximum degree d_max, and clustering coefficient c.

    Computed as (1 - c/2) d + c d / (2 (d - 2)) * (d_max^((d-2)/(d-1)) - 1).
    The estimate is singular at average degree 2 and meaningless below it.
    """
    if d <= 2:
        raise ValueError(f"average degree must exceed 2 (the estimate is singular at d=2); got {d}")
    if d_max < d:
        raise ValueError("maximum degree cannot be below the average degree")
    if not 0 <= c <= 1:
        raise ValueError("clustering coefficient must lie in [0, 1]")
    return (1 - c / 2) * d + (c * d) / (2 * (d - 2)) * (d_max ** ((d - 2) / (d - 1)) - 1)


def _er_features(n: int, feature_dim: int | None, seed: int) -> np.ndarray:
    if feature_dim is None:
        if n > IDENTITY_FEATURE_LIMIT:
            raise ValueError(
                f"identity features are capped at {IDENTITY_FEATURE_LIMIT} nodes; "
                "pass feature_dim for larger graphs")
        return np.eye(n, dtype=np.float64)
    rng = np.random.default_rng([seed, 1])
    return rng.uniform(size=(n, feature_dim))


def generate_er(n: int, p: float, seed: int, feature_dim: int | None = None) -> Graph:
    """Erdos-Renyi G(n, p), deterministic per seed.

    Pairs are sampled with geometric skips over the n(n-1)/2 pair indices,
    so the cost is proportional to the edge count, never quadratic.
    """
    if n < 2:
        raise ValueError("need at least 2 nodes")
    if not 0 < p < 1:
        raise ValueError("edge probability must lie strictly in (0, 1)")
    rng = np.random.default_rng([seed, 0])
    total = n * (n - 1) // 2
    chunk = max(1024, int(total * p * 1.2) + 16)
    hits = []
    cur = -1
    while cur < total:
        steps = rng.geometric(p, size=chunk).astype(np.int64)
        pos = cur + np.cumsum(steps)
        hits.append(pos[pos < total])
        if pos[-1] >= total:
            break
        cur = int(pos[-1])
    g_idx = np.concatenate(hits) if hits else np.empty(0, np.int64)

    # invert the triangular index: pair g -> (v, w) with w < v
    v = np.floor((1 + np.sqrt(1 + 8 * g_idx.astype(np.float64))) / 2).astype(np.int64)
    v = np.where(v * (v - 1) // 2 > g_idx, v - 1, v)
    v = np.where(v * (v + 1) // 2 <= g_idx, v + 1, v)
    w = g_idx - v * (v - 1) // 2

    edges = np.stack([w, v], axis=1)
    graph, _ = build_graph(n, edges, features=_er_features(n, feature_dim, seed))
    return graph


def generate_triad_circle(n: int) -> Graph:
    """Circle of n nodes where each circle node carries two triads.

    Even positions get closed triads (center v, peripherals a and b, with the
    a-b edge present); odd positions get open triads (no a-b edge).  Every
    triad also has 4 pendant nodes hanging off peripheral a.  Circle nodes
    are labeled 0 (closed) or 1 (open); the 12n auxiliary nodes are
    unlabeled.  Features are constant all-ones rows so any class separation
    must come from structure.
    """
    if n < 4 or n % 2 != 0:
        raise ValueError("circle size must be even and at least 4")
    edges = []
    for i in range(n):
        edges.append((i, (i + 1) % n))
    for i in range(n):
        closed = i % 2 == 0
        for t in range(2):
            base = n + i * 12 + t * 6
            a, b = base, base + 1
            edges.append((i, a))
            edges.append((i, b))
            if closed:
                edges.append((a, b))
            for j in range(4):
                edges.append((a, base + 2 + j))
    total = 13 * n
    labels = np.full(total, -1, dtype=np.int64)
    labels[np.arange(0, n, 2)] = 0
    labels[np.arange(1, n, 2)] = 1
    features = np.ones((total, 8), dtype=np.float64)
    g, _ = build_graph(total, np.array(edges, dtype=np.int64),
                       features=features, labels=labels,
                       label_names=["0", "1"])
    return g
