"""Alias-method tables for O(1) discrete sampling.

Two uses: uniform neighbor selection during walk sampling (tables laid out
flat along the graph's CSR neighbor array) and the degree^0.75 unigram
distribution for negative sampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph


@dataclass
class AliasTable:
    """Alias table over k outcomes: draw idx uniform, keep it with
    probability prob[idx], else take alias[idx]."""

    prob: np.ndarray
    alias: np.ndarray

    def __len__(self) -> int:
        return len(self.prob)

    def draw(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray | int:
        k = len(self.prob)
        idx = rng.integers(0, k, size=size)
        coin = rng.random(size=size)
        return np.where(coin < self.prob[idx], idx, self.alias[idx])


def build_alias(weights: np.ndarray) -> AliasTable:
    """Vose construction; deterministic for a given weight vector."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or len(w) == 0:
        raise ValueError("weights must be a non-empty vector")
    if (w < 0).any() or not np.isfinite(w).all():
        raise ValueError("weights must be finite and non-negative")
    total = w.sum()
    if total <= 0:
        raise ValueError("weights must not all be zero")
    k = len(w)
    scaled = w * (k / total)
    prob = np.ones(k, dtype=np.float64)
    alias = np.arange(k, dtype=np.int64)
    small = [i for i in range(k) if scaled[i] < 1.0]
    large = [i for i in range(k) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        g = large.pop()
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] -= 1.0 - scaled[s]
        (small if scaled[g] < 1.0 else large).append(g)
    # leftovers are 1 up to rounding
    return AliasTable(prob=prob, alias=alias)


@dataclass
class AliasSampler:
    """Per-node alias tables for uniform neighbor draws, flat along CSR.

    For node v the table occupies slots indptr[v]:indptr[v+1]; alias entries
    are local indices within that slice.  Uniform weights make the tables
    trivially prob=1, but the layout lets weighted walk variants drop in
    without touching the sampling kernels.
    """

    indptr: np.ndarray
    neighbors: np.ndarray
    prob: np.ndarray
    alias: np.ndarray

    @classmethod
    def from_graph(cls, g: Graph) -> "AliasSampler":
        m = len(g.neighbors)
        prob = np.ones(m, dtype=np.float64)
        local = np.arange(m, dtype=np.int64) - np.repeat(g.indptr[:-1], g.degrees)
        return cls(indptr=g.indptr, neighbors=g.neighbors, prob=prob, alias=local)

    def sample_neighbor(self, v: int, rng: np.random.Generator) -> int:
        start, end = int(self.indptr[v]), int(self.indptr[v + 1])
        deg = end - start
        if deg == 0:
            raise ValueError(f"node {v} is isolated; it has no neighbors to sample")
        idx = int(rng.integers(0, deg))
        if rng.random() >= self.prob[start + idx]:
            idx = int(self.alias[start + idx])
        return int(self.neighbors[start + idx])


def unigram_table(g: Graph, power: float = 0.75) -> AliasTable:
    """Alias table over nodes with probability proportional to degree^power.

    Isolated nodes get weight 0 and are never drawn.
    """
    weights = g.degrees.astype(np.float64) ** power
    weights[g.degrees == 0] = 0.0
    return build_alias(weights)
