"""Random walk sampling, first-visit anonymization, pattern registry,
empirical pattern distributions, receptive radii, and the sampling of
training material (walk triples and skip-gram context pairs).
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import backend
from .alias import AliasSampler
from .graph import Graph

log = logging.getLogger(__name__)

# pattern keys pack one 4-bit value per position into a uint64
MAX_WALK_LENGTH = 16
MAX_ENUMERATION_LENGTH = 10


def anonymize(walk: Sequence[int]) -> tuple[int, ...]:
    """First-visit encoding of a node sequence.

    Position t receives the number of distinct nodes seen up to and
    including the first occurrence of walk[t], so walks that traverse
    isomorphic trajectories collapse onto the same pattern.
    """
    if len(walk) == 0:
        raise ValueError("cannot anonymize an empty walk")
    order: dict[int, int] = {}
    steps = []
    for node in walk:
        if node not in order:
            order[node] = len(order) + 1
        steps.append(order[node])
    return tuple(steps)


def anonymize_batch(walks: np.ndarray) -> np.ndarray:
    """Packed pattern keys for a batch of walks, rows in lockstep.

    Matches the keys emitted by the sampling kernels: 4 bits per position
    holding (step - 1).
    """
    rows, l = walks.shape
    if l > MAX_WALK_LENGTH:
        raise ValueError(f"walk length {l} exceeds the packed-key limit {MAX_WALK_LENGTH}")
    keys = np.zeros(rows, dtype=np.uint64)
    seen = np.full((rows, l), -1, dtype=np.int64)
    seen[:, 0] = walks[:, 0]
    cnt = np.ones(rows, dtype=np.int64)
    for t in range(1, l):
        cur = walks[:, t].astype(np.int64)
        eq = seen[:, :t] == cur[:, None]
        found = eq.any(axis=1)
        first = eq.argmax(axis=1)
        step = np.where(found, first + 1, cnt + 1)
        fresh = np.flatnonzero(~found)
        seen[fresh, cnt[fresh]] = cur[fresh]
        cnt[fresh] += 1
        keys |= (step.astype(np.uint64) - np.uint64(1)) << np.uint64(4 * t)
    return keys


def pattern_key(steps: Sequence[int]) -> int:
    if len(steps) > MAX_WALK_LENGTH:
        raise ValueError(f"pattern longer than {MAX_WALK_LENGTH}")
    key = 0
    for t, s in enumerate(steps):
        key |= (s - 1) << (4 * t)
    return key


def key_to_steps(key: int, l: int) -> tuple[int, ...]:
    return tuple(((int(key) >> (4 * t)) & 0xF) + 1 for t in range(l))


def enumerate_patterns(l: int) -> list[tuple[int, ...]]:
    """All first-visit patterns of length l realizable on simple graphs,
    in lexicographic order.

    Valid patterns start at 1, never exceed one past the running maximum,
    and never repeat consecutively (consecutive walk nodes are adjacent,
    hence distinct).  Exponential in l, so guarded as a test oracle.
    """
    if l < 1:
        raise ValueError("length must be positive")
    if l > MAX_ENUMERATION_LENGTH:
        raise ValueError(f"enumeration is capped at length {MAX_ENUMERATION_LENGTH}")
    out: list[tuple[int, ...]] = []

    def grow(prefix: list[int], high: int) -> None:
        if len(prefix) == l:
            out.append(tuple(prefix))
            return
        for nxt in range(1, high + 2):
            if nxt == prefix[-1]:
                continue
            prefix.append(nxt)
            grow(prefix, max(high, nxt))
            prefix.pop()

    if l == 1:
        return [(1,)]
    grow([1], 1)
    return out


def receptive_radius(steps: Sequence[int]) -> int:
    """Walk prefix length that counts as neighborhood: floor(2l / max(steps)),
    clamped to the walk length.

    Walks that revisit few distinct nodes stay local and earn a longer
    radius; walks that shoot far away are truncated early.
    """
    l = len(steps)
    return min(l, 2 * l // max(steps))


@dataclass(frozen=True)
class AnonPattern:
    steps: tuple[int, ...]
    pattern_id: int
    radius: int


class PatternRegistry:
    """Bidirectional map between pattern steps and dense integer ids,
    assigned in first-seen corpus order."""

    def __init__(self) -> None:
        self.patterns: list[AnonPattern] = []
        self._ids: dict[tuple[int, ...], int] = {}

    def __len__(self) -> int:
        return len(self.patterns)

    def __getitem__(self, pattern_id: int) -> AnonPattern:
        return self.patterns[pattern_id]

    def id_of(self, steps: Sequence[int]) -> int | None:
        return self._ids.get(tuple(steps))

    def add(self, steps: Sequence[int]) -> int:
        steps = tuple(steps)
        pid = self._ids.get(steps)
        if pid is None:
            pid = len(self.patterns)
            self._ids[steps] = pid
            self.patterns.append(AnonPattern(steps=steps, pattern_id=pid,
                                             radius=receptive_radius(steps)))
        return pid

    @property
    def radii(self) -> np.ndarray:
        return np.array([p.radius for p in self.patterns], dtype=np.int64)

    @classmethod
    def from_keys(cls, keys: np.ndarray, l: int) -> tuple["PatternRegistry", np.ndarray]:
        """Build a registry from packed keys; returns (registry, pattern ids)
        with ids in first-seen order over the key sequence."""
        reg = cls()
        uniq, first_idx, inverse = np.unique(keys, return_index=True, return_inverse=True)
        order = np.argsort(first_idx, kind="stable")
        rank = np.empty(len(uniq), dtype=np.int64)
        rank[order] = np.arange(len(uniq), dtype=np.int64)
        for key in uniq[order]:
            reg.add(key_to_steps(int(key), l))
        return reg, rank[inverse].astype(np.int32)


@dataclass
class WalkCorpus:
    """gamma walks of l nodes per non-isolated node, with their patterns and
    the per-node / graph-level empirical pattern distributions."""

    gamma: int
    l: int
    num_nodes: int
    sources: np.ndarray
    walks: np.ndarray
    pattern_ids: np.ndarray
    registry: PatternRegistry
    node_row: np.ndarray = field(repr=False)
    dist_indptr: np.ndarray = field(repr=False)
    dist_pids: np.ndarray = field(repr=False)
    dist_probs: np.ndarray = field(repr=False)
    graph_dist: np.ndarray = field(repr=False)

    def walk_rows(self, v: int) -> slice:
        start = self.node_row[v]
        if start < 0:
            return slice(0, 0)
        return slice(int(start), int(start) + self.gamma)

    def node_dist(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        """(pattern ids, probabilities) observed at node v."""
        s, e = int(self.dist_indptr[v]), int(self.dist_indptr[v + 1])
        return self.dist_pids[s:e], self.dist_probs[s:e]


def _build_distributions(num_nodes: int, sources: np.ndarray, gamma: int,
                         pattern_ids: np.ndarray, registry_size: int):
    n_src = len(sources)
    src_index = np.repeat(np.arange(n_src, dtype=np.int64), gamma)
    combo = src_index * registry_size + pattern_ids.astype(np.int64)
    uniq, counts = np.unique(combo, return_counts=True)
    row_src = (uniq // registry_size).astype(np.int64)
    pids = (uniq % registry_size).astype(np.int32)
    probs = counts.astype(np.float64) / gamma

    per_node = np.zeros(num_nodes, dtype=np.int64)
    per_node[sources] = np.bincount(row_src, minlength=n_src)
    indptr = np.zeros(num_nodes + 1, dtype=np.int64)
    indptr[1:] = np.cumsum(per_node)

    graph_dist = np.bincount(pattern_ids, minlength=registry_size).astype(np.float64)
    graph_dist /= gamma * num_nodes
    return indptr, pids, probs, graph_dist


def sample_walks(g: Graph,
                 sampler: AliasSampler | None = None,
                 gamma: int = 100,
                 l: int = 8,
                 seed: int = 0,
                 threads: int = 1) -> WalkCorpus:
    """Sample gamma uniform random walks of l nodes from every non-isolated
    node; anonymize each walk and assemble the pattern distributions.

    Deterministic for a fixed seed regardless of thread count: every walk's
    randomness is a pure function of (seed, source node, walk index).
    """
    if l < 2:
        raise ValueError("walk length must be at least 2")
    if l > MAX_WALK_LENGTH:
        raise ValueError(f"walk length is capped at {MAX_WALK_LENGTH}")
    if gamma < 1:
        raise ValueError("gamma must be positive")
    if sampler is None:
        sampler = AliasSampler.from_graph(g)

    degs = g.degrees
    sources = np.flatnonzero(degs > 0).astype(np.int64)
    isolated = g.num_nodes - len(sources)
    if isolated:
        log.warning("%d isolated node(s) receive no walks", isolated)

    kern = backend.kernels.sample_walks_kernel
    if threads <= 1 or len(sources) < 2 * threads:
        walks, keys = kern(g.indptr, g.neighbors, sampler.prob, sampler.alias,
                           sources, gamma, l, seed)
    else:
        walks = np.empty((len(sources) * gamma, l), dtype=np.int32)
        keys = np.empty(len(sources) * gamma, dtype=np.uint64)
        bounds = np.linspace(0, len(sources), threads + 1, dtype=np.int64)

        def work(a: int, b: int) -> None:
            w, k = kern(g.indptr, g.neighbors, sampler.prob, sampler.alias,
                        sources[a:b], gamma, l, seed)
            walks[a * gamma:b * gamma] = w
            keys[a * gamma:b * gamma] = k

        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(work, int(a), int(b))
                       for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
            for f in futures:
                f.result()

    registry, pattern_ids = PatternRegistry.from_keys(keys, l)
    node_row = np.full(g.num_nodes, -1, dtype=np.int64)
    node_row[sources] = np.arange(len(sources), dtype=np.int64) * gamma
    indptr, pids, probs, graph_dist = _build_distributions(
        g.num_nodes, sources, gamma, pattern_ids, len(registry))
    return WalkCorpus(gamma=gamma, l=l, num_nodes=g.num_nodes, sources=sources,
                      walks=walks, pattern_ids=pattern_ids, registry=registry,
                      node_row=node_row, dist_indptr=indptr, dist_pids=pids,
                      dist_probs=probs, graph_dist=graph_dist)


def sample_walk_triples(corpus: WalkCorpus,
                        per_node: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Sample per-node pattern triples (v, j, k, n) where patterns j and k
    are over-represented at v relative to the graph mean and n is
    under-represented.

    Nodes whose over- or under-represented set is empty contribute nothing.
    Returns an (M, 4) int64 array of rows [v, j, k, n].
    """
    if len(corpus.registry) == 0:
        raise ValueError("corpus has no pattern distributions")
    registry_size = len(corpus.registry)
    rows = []
    for v in range(corpus.num_nodes):
        pids, probs = corpus.node_dist(v)
        if len(pids) == 0:
            continue
        gvals = corpus.graph_dist[pids]
        over = pids[probs > gvals]
        if len(over) == 0:
            continue
        # patterns that cannot serve as under-represented: observed with
        # probability at or above the graph mean
        blocked = set(int(p) for p in pids[probs >= gvals])
        if registry_size - len(blocked) == 0:
            continue
        for _ in range(per_node):
            j = int(over[rng.integers(len(over))])
            k = int(over[rng.integers(len(over))])
            while True:
                n = int(rng.integers(registry_size))
                if n not in blocked:
                    break
            rows.append((v, j, k, n))
    if not rows:
        return np.empty((0, 4), dtype=np.int64)
    return np.array(rows, dtype=np.int64)


def context_pairs(corpus: WalkCorpus, window: int) -> Iterator[tuple[int, int]]:
    """Skip-gram pairs: for every walk and position t, (w[t], w[u]) for all
    u != t within the window; pairs with identical endpoints are dropped."""
    l = corpus.l
    for row in range(corpus.walks.shape[0]):
        w = corpus.walks[row]
        for t in range(l):
            for u in range(max(0, t - window), min(l - 1, t + window) + 1):
                if u != t and w[t] != w[u]:
                    yield int(w[t]), int(w[u])


def context_pair_arrays(walks: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized context pairs for a block of walks.

    Emits the same multiset of (center, context) pairs as context_pairs,
    grouped by offset instead of by position.
    """
    l = walks.shape[1]
    centers = []
    contexts = []
    for d in range(1, min(window, l - 1) + 1):
        a = walks[:, :l - d].ravel()
        b = walks[:, d:].ravel()
        centers.append(a)
        contexts.append(b)
        centers.append(b)
        contexts.append(a)
    c = np.concatenate(centers).astype(np.int64)
    x = np.concatenate(contexts).astype(np.int64)
    keep = c != x
    return c[keep], x[keep]


def pattern_edges(steps: Sequence[int]) -> set[tuple[int, int]]:
    """Edge set of the graph a pattern traces over its first-visit indices."""
    edges = set()
    for a, b in zip(steps[:-1], steps[1:]):
        edges.add((min(a, b), max(a, b)))
    return edges


def pattern_has_triangle(steps: Sequence[int]) -> bool:
    edges = pattern_edges(steps)
    nodes = sorted({i for e in edges for i in e})
    for i, a in enumerate(nodes):
        for b in nodes[i + 1:]:
            if (a, b) not in edges:
                continue
            for c in nodes:
                if c > b and (a, c) in edges and (b, c) in edges:
                    return True
    return False


def save_corpus(corpus: WalkCorpus, g: Graph, path: str | Path) -> None:
    """One line per walk: "<source-id> <node ids...> | <pattern steps...>"."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in range(corpus.walks.shape[0]):
            w = corpus.walks[row]
            src = g.node_ids[int(w[0])]
            ids = " ".join(g.node_ids[int(x)] for x in w)
            steps = " ".join(str(s) for s in corpus.registry[int(corpus.pattern_ids[row])].steps)
            fh.write(f"{src} {ids} | {steps}\n")


def load_corpus(g: Graph, path: str | Path) -> WalkCorpus:
    """Reload a dumped corpus, revalidating patterns against the walks."""
    id_map = {tok: i for i, tok in enumerate(g.node_ids)}
    walk_rows = []
    step_rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                left, right = line.split("|")
                toks = left.split()
                src, ids = toks[0], toks[1:]
                steps = tuple(int(s) for s in right.split())
            except ValueError as exc:
                raise ValueError(f"corpus line {lineno}: malformed walk") from exc
            if not ids or ids[0] != src:
                raise ValueError(f"corpus line {lineno}: walk does not start at its source")
            walk_rows.append([id_map[t] for t in ids])
            step_rows.append(steps)
    if not walk_rows:
        raise ValueError("corpus file holds no walks")
    walks = np.array(walk_rows, dtype=np.int32)
    l = walks.shape[1]
    keys = anonymize_batch(walks)
    for row, steps in enumerate(step_rows):
        if pattern_key(steps) != int(keys[row]):
            raise ValueError(f"corpus line {row + 1}: stored pattern disagrees with the walk")

    srcs = walks[:, 0].astype(np.int64)
    uniq_src, first, counts = np.unique(srcs, return_index=True, return_counts=True)
    if len(set(counts)) != 1:
        raise ValueError("corpus is not uniform: unequal walk counts per source")
    gamma = int(counts[0])
    order = np.argsort(first, kind="stable")
    sources = uniq_src[order]
    if not np.array_equal(np.sort(sources), sources):
        raise ValueError("corpus is not in source-major order")

    registry, pattern_ids = PatternRegistry.from_keys(keys, l)
    node_row = np.full(g.num_nodes, -1, dtype=np.int64)
    node_row[sources] = np.arange(len(sources), dtype=np.int64) * gamma
    indptr, pids, probs, graph_dist = _build_distributions(
        g.num_nodes, sources, gamma, pattern_ids, len(registry))
    return WalkCorpus(gamma=gamma, l=l, num_nodes=g.num_nodes, sources=sources,
                      walks=walks, pattern_ids=pattern_ids, registry=registry,
                      node_row=node_row, dist_indptr=indptr, dist_pids=pids,
                      dist_probs=probs, graph_dist=graph_dist)
