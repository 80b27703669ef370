"""Walk-pattern message passing.

A node's neighborhood is read off its sampled random walks. Each walk's
anonymized pattern decides three things: how far along the walk neighbors
are taken (receptive radius), how much the whole walk counts (softmax
attention over the node's sampled walks), and which feature channels pass
through (sigmoid gate per channel). Layer k combines the node's own vector
with the gated, attention-weighted mean over all (walk, position) pairs:

    a_i = mean_{w, p <= r_w} lambda_w * (q_w (*) h_prev[w_p])
    h_i = ReLU(U h_prev[i] + V a_i)        (hidden layers)
    h_i =      U h_prev[i] + V a_i         (output layer)

The output layer is linear so embedding dot products can take either sign.
Under the skip-gram objective that trains these embeddings, an everywhere
non-negative output is a trap: every pairwise dot is >= 0, so each negative
sample repels at least as hard as a positive pair attracts (sigmoid of a
non-negative number is >= 1/2), and with several negatives per pair the only
stationary point is the all-zero embedding, which a final ReLU then makes
absorbing. Keeping the last layer linear removes the trap without touching
the hidden-layer nonlinearity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import Graph
from .tape import (Tensor, _sigmoid, add, gather_rows, matmul, mul, relu,
                   reshape, scatter_rows, segment_sum, segment_weighted_sum,
                   sigmoid, softmax_rows, transpose)
from .walks import WalkCorpus

__all__ = [
    "ModelParams", "NeighborhoodSample", "init_params", "attention_coeffs",
    "amplification_gate", "sample_neighborhood", "aggregate_layer", "forward",
    "embed_all", "save_checkpoint", "load_checkpoint",
]


@dataclass
class ModelParams:
    """Trainable state.

    walk_table holds one pattern embedding per registered pattern plus a
    trailing fallback row for patterns outside the registry (possible when
    a corpus resampled with another seed meets a checkpoint). Per layer k:
    U multiplies the node's own previous vector, V the aggregated
    neighborhood, P and b score a pattern for attention, Q and r gate the
    previous layer's channels.
    """

    dims: list[int]                 # [feature_dim, hidden..., output_dim]
    pattern_dim: int
    walk_table: Tensor              # (registry_size + 1, pattern_dim)
    U: list[Tensor] = field(default_factory=list)   # (dims[k], dims[k-1])
    V: list[Tensor] = field(default_factory=list)   # (dims[k], dims[k-1])
    P: list[Tensor] = field(default_factory=list)   # (1, pattern_dim)
    b: list[Tensor] = field(default_factory=list)   # (1, 1)
    Q: list[Tensor] = field(default_factory=list)   # (dims[k-1], pattern_dim)
    r: list[Tensor] = field(default_factory=list)   # (1, dims[k-1])

    @property
    def num_layers(self) -> int:
        return len(self.U)

    @property
    def unknown_row(self) -> int:
        return self.walk_table.data.shape[0] - 1

    def all_tensors(self) -> list[Tensor]:
        """Flat parameter list in a fixed order (walk_table, then per layer
        U, V, P, b, Q, r)."""
        out = [self.walk_table]
        for k in range(self.num_layers):
            out.extend([self.U[k], self.V[k], self.P[k], self.b[k],
                        self.Q[k], self.r[k]])
        return out

    def group_names(self) -> list[str]:
        names = ["walk_table"]
        for k in range(1, self.num_layers + 1):
            names.extend([f"U{k}", f"V{k}", f"P{k}", f"b{k}", f"Q{k}", f"r{k}"])
        return names


@dataclass
class NeighborhoodSample:
    """One node's sampled walks at one layer: per walk its pattern id, its
    receptive radius, and the node slice that falls inside the radius."""

    pattern_ids: np.ndarray         # (s,)
    radii: np.ndarray               # (s,)
    nodes: list[np.ndarray]         # per walk, positions p = 1..r_w (or 2..r_w)


def _glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def init_params(dims, registry_size: int, seed: int,
                pattern_dim: int = 30) -> ModelParams:
    """Fresh parameters: uniform +-sqrt(6/(fan_in+fan_out)) weights, walk
    table entries normal with standard deviation 0.1, zero biases.
    Deterministic per seed."""
    dims = [int(d) for d in dims]
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ValueError(f"invalid layer dims {dims}")
    if registry_size < 0:
        raise ValueError("registry_size must be >= 0")
    rng = np.random.default_rng(seed)
    table = rng.normal(0.0, 0.1, size=(registry_size + 1, pattern_dim))
    params = ModelParams(dims=dims, pattern_dim=pattern_dim,
                         walk_table=Tensor(table, requires_grad=True))
    for k in range(1, len(dims)):
        d_out, d_in = dims[k], dims[k - 1]
        params.U.append(Tensor(_glorot(rng, d_out, d_in), requires_grad=True))
        params.V.append(Tensor(_glorot(rng, d_out, d_in), requires_grad=True))
        params.P.append(Tensor(_glorot(rng, 1, pattern_dim), requires_grad=True))
        params.b.append(Tensor(np.zeros((1, 1)), requires_grad=True))
        params.Q.append(Tensor(_glorot(rng, d_in, pattern_dim), requires_grad=True))
        params.r.append(Tensor(np.zeros((1, d_in)), requires_grad=True))
    return params


def _table_rows(pattern_ids: np.ndarray, params: ModelParams) -> np.ndarray:
    """Map pattern ids onto walk-table rows, folding ids the table has never
    seen onto the shared fallback row."""
    ids = np.asarray(pattern_ids, dtype=np.int64)
    out_of_range = (ids < 0) | (ids >= params.unknown_row)
    return np.where(out_of_range, params.unknown_row, ids)


def attention_coeffs(layer: int, pattern_ids, params: ModelParams) -> np.ndarray:
    """Per-walk attention weights: softmax over the node's sampled walks of
    the scalar score P . u_pattern + b. Reference (single node) path."""
    ids = np.atleast_1d(np.asarray(pattern_ids, dtype=np.int64))
    if ids.size == 0:
        raise ValueError("attention over an empty walk sample")
    u = params.walk_table.data[_table_rows(ids, params)]
    scores = u @ params.P[layer - 1].data.T + params.b[layer - 1].data
    scores = scores.reshape(1, -1)
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return (e / e.sum(axis=1, keepdims=True)).ravel()


def amplification_gate(layer: int, pattern_id: int,
                       params: ModelParams) -> np.ndarray:
    """Per-channel gate for one walk pattern: sigmoid(Q . u_pattern + r).
    Every entry lies strictly in (0, 1). Reference (single walk) path."""
    row = int(_table_rows(np.array([pattern_id]), params)[0])
    u = params.walk_table.data[row]
    pre = params.Q[layer - 1].data @ u + params.r[layer - 1].data.ravel()
    return _sigmoid(pre.reshape(1, -1)).ravel()


def sample_neighborhood(corpus: WalkCorpus, v: int, s: int,
                        rng: np.random.Generator,
                        fixed_radius: int | None = None,
                        include_source: bool = True) -> NeighborhoodSample:
    """Draw s walks uniformly with replacement from v's stored walks and
    slice each down to its receptive radius."""
    start = corpus.node_row[v]
    if start < 0:
        return NeighborhoodSample(pattern_ids=np.empty(0, dtype=np.int64),
                                  radii=np.empty(0, dtype=np.int64), nodes=[])
    rows = start + rng.integers(0, corpus.gamma, size=s)
    pids = corpus.pattern_ids[rows].astype(np.int64)
    first = 1 if not include_source else 0
    if fixed_radius is None:
        radii = corpus.registry.radii[pids]
    else:
        clamped = min(max(int(fixed_radius), 1 + first), corpus.l)
        radii = np.full(s, clamped, dtype=np.int64)
    nodes = [corpus.walks[row, first:rad].astype(np.int64)
             for row, rad in zip(rows, radii)]
    return NeighborhoodSample(pattern_ids=pids, radii=radii, nodes=nodes)


def aggregate_layer(v: int, h_prev: dict, sample: NeighborhoodSample,
                    layer: int, params: ModelParams,
                    use_attention: bool = True,
                    use_amplification: bool = True) -> np.ndarray:
    """One node, one layer, straight from the definitions: the flat mean of
    lambda_w * (q_w (*) h_prev[w_p]) over all (walk, position) pairs, then
    U h_prev[v] + V a through a ReLU on hidden layers (the top layer stays
    linear; see the module docstring). Loops on purpose; the batched path in
    forward is checked against this."""
    if v not in h_prev:
        raise KeyError(f"h_prev is missing node {v}")
    d_in = params.U[layer - 1].data.shape[1]
    acc = np.zeros(d_in)
    total = 0
    if len(sample.nodes) > 0:
        if use_attention:
            lam = attention_coeffs(layer, sample.pattern_ids, params)
        else:
            lam = np.full(len(sample.nodes), 1.0 / len(sample.nodes))
        for i, walk_nodes in enumerate(sample.nodes):
            if use_amplification:
                q = amplification_gate(layer, int(sample.pattern_ids[i]), params)
            else:
                q = np.ones(d_in)
            for node in walk_nodes:
                if int(node) not in h_prev:
                    raise KeyError(f"h_prev is missing node {int(node)}")
                acc += lam[i] * (q * h_prev[int(node)])
                total += 1
    a = acc / total if total else acc
    pre = params.U[layer - 1].data @ h_prev[v] + params.V[layer - 1].data @ a
    return np.maximum(pre, 0.0) if layer < params.num_layers else pre


@dataclass
class _RadiusIndex:
    """Per corpus row, the distinct in-radius nodes with their visit counts.

    Static for a given (include_source, fixed_radius) because each stored
    walk's radius is fixed by its pattern, so it is built once per corpus and
    reused every iteration. pos_counts keeps the raw position count per row
    (the flat-mean denominator), which exceeds len(nodes) whenever a walk
    revisits a node inside its radius.
    """

    indptr: np.ndarray              # (rows + 1,)
    nodes: np.ndarray               # distinct in-radius nodes, row-major
    counts: np.ndarray              # float64 visit counts aligned with nodes
    pos_counts: np.ndarray          # (rows,) in-radius positions per row


def _expand_ranges(indptr: np.ndarray, sel: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Concatenated index ranges indptr[sel[i]]:indptr[sel[i]+1]."""
    lens = indptr[sel + 1] - indptr[sel]
    total = int(lens.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64), lens
    starts = np.cumsum(lens) - lens
    idx = (np.arange(total, dtype=np.int64) - np.repeat(starts, lens)
           + np.repeat(indptr[sel], lens))
    return idx, lens


def _radius_index(corpus: WalkCorpus, include_source: bool,
                  fixed_radius: int | None) -> _RadiusIndex:
    first = 0 if include_source else 1
    key = ("idx", first, -1 if fixed_radius is None else int(fixed_radius))
    cache = getattr(corpus, "_forward_cache", None)
    if cache is None:
        cache = {}
        corpus._forward_cache = cache
    hit = cache.get(key)
    if hit is not None:
        return hit
    if fixed_radius is None:
        radii = corpus.registry.radii[corpus.pattern_ids]
    else:
        # keep at least one in-radius position per walk
        clamped = min(max(int(fixed_radius), 1 + first), corpus.l)
        radii = np.full(corpus.walks.shape[0], clamped, dtype=np.int64)
    lens = radii - first
    n_rows = corpus.walks.shape[0]
    starts = np.repeat(np.cumsum(lens) - lens, lens)
    cols = first + np.arange(lens.sum(), dtype=np.int64) - starts
    rows_rep = np.repeat(np.arange(n_rows, dtype=np.int64), lens)
    visited = corpus.walks[rows_rep, cols].astype(np.int64)
    # fold repeat visits within a row into one weighted entry
    packed = rows_rep * corpus.num_nodes + visited
    uniq, counts = np.unique(packed, return_counts=True)
    u_rows = uniq // corpus.num_nodes
    indptr = np.concatenate(([0], np.cumsum(np.bincount(
        u_rows, minlength=n_rows)))).astype(np.int64)
    index = _RadiusIndex(indptr=indptr, nodes=(uniq % corpus.num_nodes),
                         counts=counts.astype(np.float64),
                         pos_counts=lens.astype(np.int64))
    cache[key] = index
    return index


def _base_sums(corpus: WalkCorpus, g: Graph, index: _RadiusIndex,
               key_extra: tuple) -> np.ndarray:
    """Per corpus row, sum of feature rows over the in-radius positions.
    Constant during training (layer 0 is the feature table), so the bottom
    layer never touches the tape for its walk sums."""
    key = ("base",) + key_extra
    cache = corpus._forward_cache
    hit = cache.get(key)
    if hit is not None and hit[0] is g.features:
        return hit[1]
    n_rows = len(index.pos_counts)
    sums = np.zeros((n_rows, g.features.shape[1]))
    rows_rep = np.repeat(np.arange(n_rows, dtype=np.int64),
                         np.diff(index.indptr))
    np.add.at(sums, rows_rep, index.counts[:, None] * g.features[index.nodes])
    cache[key] = (g.features, sums)
    return sums


@dataclass
class _LayerPlan:
    layer: int
    active: np.ndarray              # nodes produced at this layer (sorted)
    walked: np.ndarray              # subset of active with stored walks
    rows: np.ndarray                # sampled corpus rows, (n_walked * s,)
    pattern_ids: np.ndarray         # patterns of those rows
    visit_idx: np.ndarray           # ranges into index.nodes/counts
    visit_lens: np.ndarray          # distinct in-radius nodes per sample


def _plan_layers(batch: np.ndarray, corpus: WalkCorpus, num_layers: int,
                 s: int, rng: np.random.Generator,
                 index: _RadiusIndex) -> tuple[list[_LayerPlan], np.ndarray]:
    """Sample the computation tree top-down. Returns per-layer plans
    (outermost first) and the sorted base node set whose features seed
    h^(0)."""
    plans: list[_LayerPlan] = []
    active = np.unique(batch)
    for layer in range(num_layers, 0, -1):
        walked = active[corpus.node_row[active] >= 0]
        if len(walked) > 0:
            if s >= corpus.gamma:
                # complete sample: every stored walk exactly once, no rng
                offsets = np.broadcast_to(
                    np.arange(corpus.gamma, dtype=np.int64),
                    (len(walked), corpus.gamma))
            else:
                offsets = rng.integers(0, corpus.gamma, size=(len(walked), s))
            rows = (corpus.node_row[walked][:, None] + offsets).ravel()
            pids = corpus.pattern_ids[rows].astype(np.int64)
            visit_idx, visit_lens = _expand_ranges(index.indptr, rows)
            frontier = np.union1d(active, index.nodes[visit_idx])
        else:
            rows = np.empty(0, dtype=np.int64)
            pids = np.empty(0, dtype=np.int64)
            visit_idx = np.empty(0, dtype=np.int64)
            visit_lens = np.empty(0, dtype=np.int64)
            frontier = active
        plans.append(_LayerPlan(layer=layer, active=active, walked=walked,
                                rows=rows, pattern_ids=pids,
                                visit_idx=visit_idx, visit_lens=visit_lens))
        active = frontier
    return plans, active


def forward(batch, g: Graph, corpus: WalkCorpus, params: ModelParams,
            s: int = 20, rng: np.random.Generator | None = None, *,
            include_source_in_mean: bool = True,
            use_attention: bool = True,
            use_amplification: bool = True,
            fixed_radius: int | None = None,
            stats: dict | None = None) -> Tensor:
    """Batched multi-layer pass. Output row i is the top-layer vector of
    batch[i]. Deterministic given the rng state. Runs inside a Tape when
    gradients are wanted, outside one for inference.

    s below gamma draws that many walks per node with replacement (the
    cheap stochastic estimate used in training); s >= gamma reads every
    stored walk exactly once, making the per-walk mean exact.

    Ablation switches: use_attention=False replaces lambda with a uniform
    weight, use_amplification=False fixes q at all-ones, fixed_radius
    overrides the per-pattern radius.
    """
    if g.features is None:
        raise ValueError("graph has no node features to seed layer 0")
    batch = np.asarray(batch, dtype=np.int64)
    if batch.ndim != 1 or batch.size == 0:
        raise ValueError("batch must be a non-empty 1-D node list")
    if rng is None:
        rng = np.random.default_rng()
    s = min(s, corpus.gamma)
    K = params.num_layers
    first = 0 if include_source_in_mean else 1
    index = _radius_index(corpus, include_source_in_mean, fixed_radius)
    plans, base = _plan_layers(batch, corpus, K, s, rng, index)

    cur_nodes = base
    h = Tensor(g.features[base])
    for plan in reversed(plans):
        k = plan.layer
        n_act, n_wal = len(plan.active), len(plan.walked)
        d_in = params.U[k - 1].data.shape[1]
        if n_wal > 0:
            if k == 1:
                # layer 0 is the constant feature table: walk sums are
                # position-free and precomputed, so nothing lands on the tape
                s0 = _base_sums(corpus, g, index,
                                (first, -1 if fixed_radius is None
                                 else int(fixed_radius)))
                summed = Tensor(s0[plan.rows])              # (n_wal*s, d_in)
            else:
                pos = np.searchsorted(cur_nodes,
                                      index.nodes[plan.visit_idx])
                walk_indptr = np.concatenate(([0],
                                              np.cumsum(plan.visit_lens)))
                summed = segment_weighted_sum(
                    h, pos, index.counts[plan.visit_idx], walk_indptr)
            # scores and gates depend only on the pattern, so compute them
            # once per distinct table row and expand by gather
            table_idx = _table_rows(plan.pattern_ids, params)
            uniq_rows, inv = np.unique(table_idx, return_inverse=True)
            u = gather_rows(params.walk_table, uniq_rows)
            if use_attention:
                score = gather_rows(
                    add(matmul(u, transpose(params.P[k - 1])),
                        params.b[k - 1]), inv)
                lam2d = softmax_rows(reshape(score, n_wal, s))
                row_err = np.abs(lam2d.data.sum(axis=1) - 1.0).max()
                assert row_err <= 1e-9, \
                    f"attention rows off normalization by {row_err:.3e}"
                lam = reshape(lam2d, n_wal * s, 1)
            else:
                row_err = 0.0
                lam = Tensor(np.full((n_wal * s, 1), 1.0 / s))
            if use_amplification:
                q = gather_rows(
                    sigmoid(add(matmul(u, transpose(params.Q[k - 1])),
                                params.r[k - 1])), inv)
                weighted = mul(mul(summed, q), lam)
                gate_lo = float(q.data.min())
                gate_hi = float(q.data.max())
            else:
                weighted = mul(summed, lam)
                gate_lo, gate_hi = None, None
            node_indptr = np.arange(0, (n_wal + 1) * s, s, dtype=np.int64)
            per_node = segment_sum(weighted, node_indptr)   # (n_wal, d_in)
            counts = index.pos_counts[plan.rows].reshape(n_wal, s).sum(axis=1)
            scale = Tensor((1.0 / counts).reshape(n_wal, 1))
            a_walked = mul(per_node, scale)
            if n_wal < n_act:
                place = np.searchsorted(plan.active, plan.walked)
                a_act = scatter_rows(a_walked, place, n_act)
            else:
                a_act = a_walked
            if stats is not None:
                stats["attention_row_err"] = max(
                    stats.get("attention_row_err", 0.0), float(row_err))
                if gate_lo is not None:
                    stats["gate_min"] = min(stats.get("gate_min", 1.0), gate_lo)
                    stats["gate_max"] = max(stats.get("gate_max", 0.0), gate_hi)
                radii = index.pos_counts[plan.rows] + first
                stats["radius_min"] = min(stats.get("radius_min", corpus.l),
                                          int(radii.min()))
                stats["radius_max"] = max(stats.get("radius_max", 0),
                                          int(radii.max()))
        else:
            a_act = Tensor(np.zeros((n_act, d_in)))
        h_self = gather_rows(h, np.searchsorted(cur_nodes, plan.active))
        pre = add(matmul(h_self, transpose(params.U[k - 1])),
                  matmul(a_act, transpose(params.V[k - 1])))
        h = relu(pre) if k < K else pre
        cur_nodes = plan.active
    return gather_rows(h, np.searchsorted(cur_nodes, batch))


def embed_all(g: Graph, corpus: WalkCorpus, params: ModelParams,
              s: int | None = None, seed: int = 0, batch_size: int = 1024,
              **forward_flags) -> np.ndarray:
    """Embed every node, in fixed-size batches with one rng stream per
    batch so the result is independent of batch_size boundaries only in
    distribution, and bit-reproducible for a given (seed, batch_size).

    By default the readout is exact: every stored walk enters the mean
    once (s=gamma), so no walk-sampling noise reaches the embeddings.
    Pass a smaller s for the training-style stochastic estimate."""
    if s is None:
        s = corpus.gamma
    out = np.empty((g.num_nodes, params.dims[-1]))
    for i, start in enumerate(range(0, g.num_nodes, batch_size)):
        nodes = np.arange(start, min(start + batch_size, g.num_nodes))
        rng = np.random.default_rng([seed, 5, i])
        out[nodes] = forward(nodes, g, corpus, params, s, rng,
                             **forward_flags).data
    return out


_CHECKPOINT_MAGIC = "structwalk-checkpoint 1"


def save_checkpoint(path, params: ModelParams, corpus_meta: dict | None = None,
                    registry=None) -> None:
    """Sectioned text dump: dims, pattern registry (id order), every tensor
    with its shape and full-precision values. Reloading reproduces
    embeddings bit-exactly."""
    lines = [_CHECKPOINT_MAGIC]
    lines.append("dims " + " ".join(str(d) for d in params.dims))
    lines.append(f"pattern_dim {params.pattern_dim}")
    for key, val in sorted((corpus_meta or {}).items()):
        lines.append(f"meta {key} {val}")
    if registry is not None:
        lines.append(f"[registry {len(registry)}]")
        for pat in registry.patterns:
            lines.append(" ".join(str(x) for x in pat.steps))
    else:
        lines.append("[registry 0]")
    for name, t in zip(params.group_names(), params.all_tensors()):
        rows, cols = t.data.shape
        lines.append(f"[tensor {name} {rows} {cols}]")
        for row in t.data:
            lines.append(" ".join("%.17g" % x for x in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path):
    """Inverse of save_checkpoint. Returns (params, registry, meta)."""
    from .walks import PatternRegistry

    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a recognized checkpoint file")
    dims: list[int] = []
    pattern_dim = 0
    meta: dict[str, str] = {}
    registry = PatternRegistry()
    tensors: dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        line = lines[i]
        if line.startswith("dims "):
            dims = [int(x) for x in line.split()[1:]]
            i += 1
        elif line.startswith("pattern_dim "):
            pattern_dim = int(line.split()[1])
            i += 1
        elif line.startswith("meta "):
            _, key, val = line.split(" ", 2)
            meta[key] = val
            i += 1
        elif line.startswith("[registry "):
            count = int(line[len("[registry "):-1])
            for j in range(count):
                registry.add([int(x) for x in lines[i + 1 + j].split()])
            i += 1 + count
        elif line.startswith("[tensor "):
            name, rows, cols = line[len("[tensor "):-1].split()
            rows, cols = int(rows), int(cols)
            block = lines[i + 1:i + 1 + rows]
            data = np.array([[float(x) for x in row.split()] for row in block])
            if data.shape != (rows, cols):
                raise ValueError(f"{path}: tensor {name} shape mismatch")
            tensors[name] = data
            i += 1 + rows
        else:
            raise ValueError(f"{path}: unrecognized checkpoint line {i + 1}")
    if not dims or pattern_dim < 1:
        raise ValueError(f"{path}: missing dims or pattern_dim")
    params = ModelParams(dims=dims, pattern_dim=pattern_dim,
                         walk_table=Tensor(tensors["walk_table"],
                                           requires_grad=True))
    if params.walk_table.data.shape != (len(registry) + 1, pattern_dim):
        raise ValueError(f"{path}: walk_table does not match the registry")
    for k in range(1, len(dims)):
        for group, store in (("U", params.U), ("V", params.V),
                             ("P", params.P), ("b", params.b),
                             ("Q", params.Q), ("r", params.r)):
            key = f"{group}{k}"
            if key not in tensors:
                raise ValueError(f"{path}: missing tensor {key}")
            store.append(Tensor(tensors[key], requires_grad=True))
    return params, registry, meta
