"""Pure-Python compute kernels: walk sampling and segment aggregation.

Fallback for environments where the compiled extension is unavailable.
Walks are advanced in lockstep across the whole batch with vectorized numpy
operations, consuming exactly the same counter-based random stream as the
compiled kernel, so both backends produce bit-identical output.  The
aggregation kernels accumulate in the same order as their compiled
counterparts for the same reason.
"""

from __future__ import annotations

import numpy as np

from .rng import draw_np, stream_base_np

NAME = "python"


def sample_walks_kernel(indptr: np.ndarray,
                        neighbors: np.ndarray,
                        prob: np.ndarray,
                        alias: np.ndarray,
                        sources: np.ndarray,
                        gamma: int,
                        l: int,
                        seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Sample gamma walks of l nodes from each source.

    Returns (walks, keys): walks is an int32 matrix of node ids, one row per
    walk (source-major order); keys packs each walk's first-visit pattern
    into a uint64, 4 bits per position (value step-1), so l must be <= 16.
    Every source must have degree >= 1.
    """
    sources = np.asarray(sources, dtype=np.int64)
    n_src = len(sources)
    rows = n_src * gamma
    walks = np.empty((rows, l), dtype=np.int32)
    keys = np.zeros(rows, dtype=np.uint64)
    if rows == 0:
        return walks, keys

    cur = np.repeat(sources, gamma)
    walk_idx = np.tile(np.arange(gamma, dtype=np.uint64), n_src)
    bases = stream_base_np(seed, cur.astype(np.uint64), walk_idx)

    walks[:, 0] = cur
    seen = np.full((rows, l), -1, dtype=np.int64)
    seen[:, 0] = cur
    cnt = np.ones(rows, dtype=np.int64)

    for t in range(1, l):
        start = indptr[cur]
        deg = indptr[cur + 1] - start
        r = draw_np(bases, t)
        idx = (r & np.uint64(0xFFFFFFFF)).astype(np.int64) % deg
        coin = (r >> np.uint64(32)).astype(np.float64) / 4294967296.0
        slot = start + idx
        loc = np.where(coin < prob[slot], idx, alias[slot])
        cur = neighbors[start + loc].astype(np.int64)
        walks[:, t] = cur

        eq = seen[:, :t] == cur[:, None]
        found = eq.any(axis=1)
        first = eq.argmax(axis=1)
        step = np.where(found, first + 1, cnt + 1)
        fresh = np.flatnonzero(~found)
        seen[fresh, cnt[fresh]] = cur[fresh]
        cnt[fresh] += 1
        keys |= (step.astype(np.uint64) - np.uint64(1)) << np.uint64(4 * t)

    return walks, keys


def seg_wsum(h: np.ndarray, idx: np.ndarray, w: np.ndarray,
             indptr: np.ndarray) -> np.ndarray:
    """out[t] = sum over entries e in [indptr[t], indptr[t+1]) of
    w[e] * h[idx[e]].  Entries accumulate in order within each segment."""
    out = np.zeros((len(indptr) - 1, h.shape[1]))
    nonempty = indptr[:-1] < indptr[1:]
    if nonempty.any():
        vals = h[idx] * w[:, None]
        out[nonempty] = np.add.reduceat(vals, indptr[:-1][nonempty], axis=0)
    return out


def seg_wsum_back(g: np.ndarray, idx: np.ndarray, w: np.ndarray,
                  indptr: np.ndarray, n_rows: int) -> np.ndarray:
    """Adjoint of seg_wsum for h: grad[idx[e]] += w[e] * g[segment(e)],
    accumulating in entry order per target row."""
    grad = np.zeros((n_rows, g.shape[1]))
    if len(idx):
        contrib = np.repeat(g, np.diff(indptr), axis=0) * w[:, None]
        order = np.argsort(idx, kind="stable")
        sorted_idx = idx[order]
        starts = np.concatenate([[0], np.flatnonzero(np.diff(sorted_idx)) + 1])
        grad[sorted_idx[starts]] = np.add.reduceat(contrib[order], starts, axis=0)
    return grad
