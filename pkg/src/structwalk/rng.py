"""Counter-based random number generation for walk sampling.

The walk kernels need a RNG that is reproducible regardless of backend
(compiled or pure Python), thread schedule, and call order.  A counter-based
generator gives that for free: the t-th draw of the stream for walk g out of
node v is a pure function of (seed, v, g, t).  This module implements
splitmix64 both as plain Python integers (mirrored by the compiled kernel)
and as vectorized numpy uint64 operations, and tests assert they agree
bit for bit.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """splitmix64 finalizer on a 64-bit integer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def stream_base(seed: int, node: int, walk: int) -> int:
    """Base counter for the (node, walk) stream under a given seed.

    The +1 offsets keep node 0 / walk 0 from collapsing onto the raw seed.
    """
    h = mix64((seed + GOLDEN * (node + 1)) & MASK64)
    return mix64((h + GOLDEN * (walk + 1)) & MASK64)


def draw(base: int, t: int) -> int:
    """t-th 64-bit draw of the stream anchored at `base`."""
    return mix64((base + GOLDEN * (t + 1)) & MASK64)


def mix64_np(z: np.ndarray) -> np.ndarray:
    """Vectorized splitmix64 finalizer over a uint64 array."""
    z = z.astype(np.uint64, copy=True)
    with np.errstate(over="ignore"):
        z ^= z >> np.uint64(30)
        z *= np.uint64(_MIX1)
        z ^= z >> np.uint64(27)
        z *= np.uint64(_MIX2)
        z ^= z >> np.uint64(31)
    return z


def stream_base_np(seed: int, nodes: np.ndarray, walk: int | np.ndarray) -> np.ndarray:
    """Vectorized stream_base; `walk` may be a scalar or an array of indices."""
    nodes = nodes.astype(np.uint64, copy=False)
    walk = np.asarray(walk, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = mix64_np(np.uint64(seed) + np.uint64(GOLDEN) * (nodes + np.uint64(1)))
        return mix64_np(h + np.uint64(GOLDEN) * (walk + np.uint64(1)))


def draw_np(bases: np.ndarray, t: int) -> np.ndarray:
    """Vectorized draw: t-th value of each stream in `bases`."""
    with np.errstate(over="ignore"):
        return mix64_np(bases + np.uint64(GOLDEN) * np.uint64(t + 1))


def split_draw(value: int) -> tuple[int, float]:
    """Split one 64-bit draw into (low 32 bits, uniform [0,1) from high 32)."""
    lo = value & 0xFFFFFFFF
    hi = value >> 32
    return lo, hi / 4294967296.0
