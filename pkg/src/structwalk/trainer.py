"""Joint training: skip-gram node proximity plus a pattern-proximity term.

L = L_node + mu * L_walk, minimized with Adam over minibatches of context
pairs (with degree^0.75 negatives) and per-node pattern triples. Stops when
the 10-iteration moving average of the total loss has not improved for
`patience` consecutive iterations.

Every random choice is drawn from its own counter-keyed stream
([seed, purpose, index]), so withholding one ingredient (say the walk
triples) leaves the others' draws untouched.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .alias import unigram_table
from .graph import Graph, generate_er
from .model import ModelParams, _table_rows, embed_all, forward, init_params
from .tape import (Tape, Tensor, add, backward, dot_rows, finite_diff_check,
                   gather_rows, log_sigmoid, neg, scalar_mul, sum_all)
from .walks import (WalkCorpus, context_pair_arrays, sample_walk_triples,
                    sample_walks)

log = logging.getLogger(__name__)

__all__ = ["TrainConfig", "AdamState", "TrainResult", "walk_loss", "node_loss",
           "negative_sample", "adam_step", "train", "save_history",
           "gradcheck_model"]

_PAIR_CHUNK_WALKS = 4096


@dataclass
class TrainConfig:
    gamma: int = 100
    l: int = 8
    window: int = 5
    neg_k: int = 8
    s: int = 20
    mu: float = 0.1
    pattern_dim: int = 30
    hidden: int = 100
    out_dim: int = 32
    K: int = 2
    lr: float = 0.005
    batch_size: int = 256          # context pairs per iteration
    triples_per_node: int = 5
    max_iters: int = 500
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        positive = ["gamma", "l", "window", "neg_k", "s", "pattern_dim",
                    "hidden", "out_dim", "K", "batch_size", "triples_per_node",
                    "max_iters"]
        for name in positive:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.mu < 0:
            raise ValueError("mu must be non-negative")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")

    def layer_dims(self, feature_dim: int) -> list[int]:
        return [feature_dim] + [self.hidden] * (self.K - 1) + [self.out_dim]


@dataclass
class AdamState:
    """First/second moment accumulators, one pair per parameter tensor."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[Tensor]) -> "AdamState":
        state = cls()
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
        return state


@dataclass
class TrainResult:
    params: ModelParams
    embeddings: np.ndarray          # |V| x out_dim
    history: np.ndarray             # (iters, 4): iter, node, walk, total
    stats: dict
    iterations: int
    stopped_early: bool


def walk_loss(triples: np.ndarray, params: ModelParams) -> Tensor:
    """Mean over triples (v, j, k, n) of -log sigma(u_j . u_k - u_j . u_n):
    pattern j should sit closer to fellow over-represented pattern k than to
    under-represented n. Empty triple set scores 0 with a warning."""
    triples = np.asarray(triples)
    if triples.size == 0:
        log.warning("no walk triples in batch; walk loss is 0")
        return Tensor(np.zeros((1, 1)))
    uj = gather_rows(params.walk_table, _table_rows(triples[:, 1], params))
    uk = gather_rows(params.walk_table, _table_rows(triples[:, 2], params))
    un = gather_rows(params.walk_table, _table_rows(triples[:, 3], params))
    margin = add(dot_rows(uj, uk), neg(dot_rows(uj, un)))
    return scalar_mul(sum_all(log_sigmoid(margin)), -1.0 / len(triples))


def node_loss(pairs: np.ndarray, negatives: np.ndarray, h: Tensor,
              printed_form: bool = False) -> Tensor:
    """Mean over pairs (i, j) with per-pair negatives n_1..n_k of
    -[log sigma(h_i . h_j) + sum_n log sigma(-h_i . h_n)].

    pairs is (B, 2) and negatives (B, k); both index rows of h.

    printed_form=True instead subtracts sum_n log sigma(+h_i . h_n), for
    documentation only: that variant is unbounded below (pushing every
    h_i . h_n to -inf sends it to -inf) and is never used in training.
    """
    pairs = np.asarray(pairs)
    negatives = np.asarray(negatives)
    if pairs.ndim != 2 or pairs.shape[1] != 2 or len(pairs) == 0:
        raise ValueError("pairs must be a non-empty (B, 2) array")
    if negatives.ndim != 2 or len(negatives) != len(pairs):
        raise ValueError("negatives must be (B, k) aligned with pairs")
    B, k = negatives.shape
    hi = gather_rows(h, pairs[:, 0])
    hj = gather_rows(h, pairs[:, 1])
    pos = log_sigmoid(dot_rows(hi, hj))
    hi_rep = gather_rows(h, np.repeat(pairs[:, 0], k))
    hn = gather_rows(h, negatives.ravel())
    raw = dot_rows(hi_rep, hn)
    if printed_form:
        neg_total = scalar_mul(sum_all(log_sigmoid(raw)), -1.0)
    else:
        neg_total = sum_all(log_sigmoid(neg(raw)))
    return scalar_mul(add(sum_all(pos), neg_total), -1.0 / B)


def negative_sample(g: Graph, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw nodes i.i.d. proportional to degree^0.75 (isolated nodes are
    never drawn)."""
    return np.asarray(unigram_table(g).draw(rng, size=count), dtype=np.int64)


def adam_step(params: list[Tensor], state: AdamState, lr: float) -> None:
    """One Adam update with bias correction; resets gradients afterwards.
    Parameters with no gradient this step see only moment decay."""
    if len(state.m) != len(params):
        raise ValueError("optimizer state does not match the parameter list")
    state.step += 1
    t = state.step
    for i, p in enumerate(params):
        if state.m[i].shape != p.data.shape:
            raise ValueError(f"moment shape {state.m[i].shape} does not match "
                             f"parameter shape {p.data.shape}")
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.isfinite(g).all():
            bad = int(np.count_nonzero(~np.isfinite(g)))
            raise FloatingPointError(
                f"non-finite gradient for parameter {i} "
                f"({bad} bad entries, step {t})")
        state.m[i] = state.beta1 * state.m[i] + (1 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1 - state.beta2) * g * g
        m_hat = state.m[i] / (1 - state.beta1 ** t)
        v_hat = state.v[i] / (1 - state.beta2 ** t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
        p.grad = None


def _pair_stream(corpus: WalkCorpus, window: int, batch_size: int, seed: int):
    """Endless stream of (B, 2) pair batches: walks shuffled per epoch, pairs
    built and shuffled in chunks, tail pairs shorter than a batch dropped at
    epoch end."""
    epoch = 0
    while True:
        rng = np.random.default_rng([seed, 1, epoch])
        order = rng.permutation(corpus.walks.shape[0])
        buf: list[np.ndarray] = []
        buffered = 0
        for start in range(0, len(order), _PAIR_CHUNK_WALKS):
            rows = corpus.walks[order[start:start + _PAIR_CHUNK_WALKS]]
            centers, contexts = context_pair_arrays(rows, window)
            perm = rng.permutation(len(centers))
            chunk = np.column_stack((centers[perm], contexts[perm]))
            buf.append(chunk)
            buffered += len(chunk)
            if buffered >= batch_size:
                pairs = np.concatenate(buf)
                full = (len(pairs) // batch_size) * batch_size
                for i in range(0, full, batch_size):
                    yield pairs[i:i + batch_size]
                buf = [pairs[full:]]
                buffered = len(pairs) - full
        epoch += 1


class _TriplePool:
    """Cycles through per-node triple pools, resampling a fresh pool (its own
    rng stream) whenever the current one is exhausted."""

    def __init__(self, corpus: WalkCorpus, per_node: int, seed: int):
        self.corpus = corpus
        self.per_node = per_node
        self.seed = seed
        self.pool_idx = -1
        self.pool = np.empty((0, 4), dtype=np.int64)
        self.cursor = 0
        self.empty = False
        self._refill()

    def _refill(self):
        self.pool_idx += 1
        rng = np.random.default_rng([self.seed, 3, self.pool_idx])
        self.pool = sample_walk_triples(self.corpus, self.per_node, rng)
        self.cursor = 0
        if len(self.pool) == 0:
            self.empty = True

    def take(self, want: int) -> np.ndarray:
        if self.empty:
            return self.pool
        want = min(want, len(self.pool))
        if self.cursor + want > len(self.pool):
            head = self.pool[self.cursor:]
            self._refill()
            if self.empty:
                return head
            rest = self.take(want - len(head))
            return np.concatenate((head, rest))
        out = self.pool[self.cursor:self.cursor + want]
        self.cursor += want
        return out


def train(g: Graph, corpus: WalkCorpus, config: TrainConfig, *,
          use_walk_loss: bool = True, collect_stats: bool = False,
          include_source_in_mean: bool = True, use_attention: bool = True,
          use_amplification: bool = True,
          fixed_radius: int | None = None) -> TrainResult:
    """Minibatch training loop. Deterministic end to end for a fixed config.

    use_walk_loss=False withholds the pattern triples entirely (their loss
    column reads 0); because every sampling purpose has its own rng stream,
    this changes nothing else about the run.
    """
    if g.features is None:
        raise ValueError("graph has no node features")
    if corpus.gamma != config.gamma or corpus.l != config.l:
        raise ValueError(
            f"corpus was sampled with gamma={corpus.gamma}, l={corpus.l}; "
            f"config expects gamma={config.gamma}, l={config.l}")
    params = init_params(config.layer_dims(g.features.shape[1]),
                         len(corpus.registry), config.seed,
                         pattern_dim=config.pattern_dim)
    tensors = params.all_tensors()
    state = AdamState.for_params(tensors)
    noise = unigram_table(g)
    pair_batches = _pair_stream(corpus, config.window, config.batch_size,
                                config.seed)
    triple_pool = (_TriplePool(corpus, config.triples_per_node, config.seed)
                   if use_walk_loss else None)
    forward_flags = dict(include_source_in_mean=include_source_in_mean,
                         use_attention=use_attention,
                         use_amplification=use_amplification,
                         fixed_radius=fixed_radius)
    stats: dict = {}
    history = []
    best_ma = np.inf
    stale = 0
    totals: list[float] = []
    stopped_early = False
    it = 0
    while it < config.max_iters:
        it += 1
        pairs = next(pair_batches)
        rng_neg = np.random.default_rng([config.seed, 2, it])
        negs = noise.draw(rng_neg, size=(len(pairs) * config.neg_k)) \
            .reshape(len(pairs), config.neg_k).astype(np.int64)
        triples = triple_pool.take(config.batch_size) if use_walk_loss \
            else np.empty((0, 4), dtype=np.int64)
        nodes = np.unique(np.concatenate((pairs.ravel(), negs.ravel())))
        pair_idx = np.searchsorted(nodes, pairs)
        neg_idx = np.searchsorted(nodes, negs)
        rng_fwd = np.random.default_rng([config.seed, 4, it])
        tape = None
        try:
            with Tape() as tape:
                h = forward(nodes, g, corpus, params, config.s, rng_fwd,
                            stats=stats if collect_stats else None,
                            **forward_flags)
                l_node = node_loss(pair_idx, neg_idx, h)
                if use_walk_loss:
                    l_walk = walk_loss(triples, params)
                    total = add(l_node, scalar_mul(l_walk, config.mu))
                else:
                    l_walk = Tensor(np.zeros((1, 1)))
                    total = l_node
                backward(tape, total)
        except FloatingPointError as exc:
            raise FloatingPointError(
                f"training diverged at iteration {it}: {exc}") from exc
        finally:
            # break record->tensor cycles now instead of waiting for gc
            if tape is not None:
                tape.clear()
        node_val, walk_val = l_node.item(), l_walk.item()
        total_val = total.item()
        if not np.isfinite(total_val):
            raise FloatingPointError(f"loss is not finite at iteration {it}")
        adam_step(tensors, state, config.lr)
        history.append((it, node_val, walk_val, total_val))
        totals.append(total_val)
        if len(totals) >= 10:
            ma = float(np.mean(totals[-10:]))
            if ma < best_ma:
                best_ma = ma
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    stopped_early = True
                    break
    embeddings = embed_all(g, corpus, params, seed=config.seed,
                           **forward_flags)
    return TrainResult(params=params, embeddings=embeddings,
                       history=np.array(history), stats=stats,
                       iterations=it, stopped_early=stopped_early)


def save_history(path, history: np.ndarray) -> None:
    """Loss history CSV: iter,node_loss,walk_loss,total."""
    with open(path, "w") as fh:
        fh.write("iter,node_loss,walk_loss,total\n")
        for row in history:
            fh.write("%d,%.17g,%.17g,%.17g\n"
                     % (int(row[0]), row[1], row[2], row[3]))


def load_history(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "iter,node_loss,walk_loss,total":
            raise ValueError(f"{path}: unrecognized history header")
        rows = [[float(x) for x in line.split(",")] for line in fh
                if line.strip()]
    return np.array(rows).reshape(-1, 4)


def gradcheck_model(n: int = 30, seed: int = 0, eps: float = 1e-4,
                    coords_per_tensor: int = 120) -> dict:
    """Audit the reverse-mode gradient of the full objective numerically.

    Builds a small sparse random graph, freezes one minibatch (context
    pairs, negatives, pattern triples), and compares the tape gradient of
    L_node + mu * L_walk with central finite differences one parameter
    group at a time.  Returns {group name: max relative error}.

    The aggregation plan inside forward() is itself random, so the closure
    reseeds that stream per call; determinism is enforced by the checker.

    eps=1e-4 rather than the checker's 1e-5 default: the loss is O(1), so
    central differences carry ~1e-11 of cancellation noise at eps=1e-5,
    which swamps the relative comparison on gate-path coordinates whose
    true gradient is ~1e-8 (the numeric value converges to the analytic
    one as eps grows, so those are noise, not gradient error).
    """
    g = generate_er(n, 0.2, seed=seed)
    config = TrainConfig(gamma=20, l=6, window=3, neg_k=4, s=5,
                         pattern_dim=8, hidden=16, out_dim=8, K=2,
                         batch_size=32, triples_per_node=2, seed=seed)
    corpus = sample_walks(g, gamma=config.gamma, l=config.l, seed=seed)
    params = init_params(config.layer_dims(g.features.shape[1]),
                         len(corpus.registry), seed,
                         pattern_dim=config.pattern_dim)
    pairs = next(_pair_stream(corpus, config.window, config.batch_size, seed))
    noise = unigram_table(g)
    rng_neg = np.random.default_rng([seed, 2, 1])
    negs = noise.draw(rng_neg, size=(len(pairs) * config.neg_k)) \
        .reshape(len(pairs), config.neg_k).astype(np.int64)
    triples = _TriplePool(corpus, config.triples_per_node, seed) \
        .take(config.batch_size)
    nodes = np.unique(np.concatenate((pairs.ravel(), negs.ravel())))
    pair_idx = np.searchsorted(nodes, pairs)
    neg_idx = np.searchsorted(nodes, negs)

    def objective(_checked) -> Tensor:
        rng_fwd = np.random.default_rng([seed, 4, 1])
        h = forward(nodes, g, corpus, params, config.s, rng_fwd)
        l_node = node_loss(pair_idx, neg_idx, h)
        return add(l_node, scalar_mul(walk_loss(triples, params), config.mu))

    groups: dict[str, list[Tensor]] = {"walk_table": [params.walk_table]}
    for name in ("U", "V", "P", "b", "Q", "r"):
        groups[name] = list(getattr(params, name))
    return {name: finite_diff_check(objective, tensors, eps=eps,
                                    coords_per_tensor=coords_per_tensor,
                                    seed=seed)
            for name, tensors in groups.items()}
