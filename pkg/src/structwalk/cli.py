"""Command-line entry point wiring the pipeline end to end.

Subcommands: synth (er | triad-circle), walks, train, eval-classify,
eval-linkpred, project, gradcheck, bench-scaling. Every command that takes
--seed is byte-for-byte reproducible; every command that writes artifacts
also writes the resolved configuration next to them. Train-style options
may come from a config file of "key = value" lines, with explicit flags
taking precedence and unknown keys rejected.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import fields as dataclass_fields
from pathlib import Path

import numpy as np

from . import backend
from .evaluate import classify, link_prediction_eval, pca_2d
from .graph import (Graph, generate_er, generate_triad_circle, load_graph,
                    save_edges, save_features, save_labels)
from .model import save_checkpoint
from .trainer import TrainConfig, gradcheck_model, save_history, train
from .walks import sample_walks, save_corpus

__all__ = ["run", "main", "save_embeddings", "load_embeddings"]

_TRAIN_KEYS = {f.name: f.type for f in dataclass_fields(TrainConfig)}
_EXTRA_KEYS = {"edges": str, "features": str, "labels": str, "out": str,
               "frac": float, "test_frac": float, "repeats": int,
               "threads": int, "backend": str, "n": int, "p": float,
               "feature_dim": int, "kind": str, "iters": int, "np": float}


def _parse_value(key: str, raw: str):
    want = _TRAIN_KEYS.get(key) or _EXTRA_KEYS.get(key)
    if want in (int, "int"):
        return int(raw)
    if want in (float, "float"):
        return float(raw)
    return raw


def read_config_file(path: str) -> dict:
    """One "key = value" per line; blank lines and # comments ignored;
    unknown keys are an error."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, _, raw = body.partition("=")
            key = key.strip()
            raw = raw.strip()
            if key not in _TRAIN_KEYS and key not in _EXTRA_KEYS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                out[key] = _parse_value(key, raw)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad value for "
                                 f"{key}: {exc}") from exc
    return out


def _resolve_train_config(args, file_cfg: dict) -> TrainConfig:
    """Flag > config file > TrainConfig default, per field."""
    kwargs = {}
    for name in _TRAIN_KEYS:
        flag_val = getattr(args, name, None)
        if flag_val is not None:
            kwargs[name] = flag_val
        elif name in file_cfg:
            kwargs[name] = file_cfg[name]
    return TrainConfig(**kwargs)


def _write_resolved(out_dir: Path, entries: dict) -> None:
    lines = [f"{k} = {entries[k]}\n" for k in sorted(entries)]
    (out_dir / "config.resolved").write_text("".join(lines),
                                             encoding="utf-8")


def _config_entries(cfg: TrainConfig, **extra) -> dict:
    entries = {name: getattr(cfg, name) for name in _TRAIN_KEYS}
    entries.update({k: v for k, v in extra.items() if v is not None})
    return entries


def save_embeddings(path, emb: np.ndarray, node_ids) -> None:
    """Text format consumable by third-party tools: header "|V| dim", then
    one "<id> <v1> ... <vdim>" line per node, full float64 precision."""
    emb = np.asarray(emb)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{emb.shape[0]} {emb.shape[1]}\n")
        for i in range(emb.shape[0]):
            vals = " ".join(f"{x:.17g}" for x in emb[i])
            fh.write(f"{node_ids[i]} {vals}\n")


def load_embeddings(path) -> tuple:
    """(node id list, (|V|, dim) float64 matrix) from save_embeddings text."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: malformed embedding header")
        n, dim = int(header[0]), int(header[1])
        ids, rows = [], []
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise ValueError(f"{path}: row for {parts[0]} has "
                                 f"{len(parts) - 1} values, expected {dim}")
            ids.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    if len(ids) != n:
        raise ValueError(f"{path}: header promises {n} rows, found {len(ids)}")
    return ids, np.array(rows, dtype=np.float64)


def _load_label_map(path) -> dict:
    """id -> label token from a "<id> <label>" file."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if len(parts) >= 2:
                out[parts[0]] = parts[1]
    return out


def _apply_backend(name: str | None) -> str:
    if name and name != "auto":
        backend.set_backend(name)
    return backend.backend_name()


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args) -> int:
    out = _out_dir(args)
    if args.kind == "er":
        g = generate_er(args.n, args.p, seed=args.seed,
                        feature_dim=args.feature_dim)
    else:
        g = generate_triad_circle(args.n)
    save_edges(g, out / "edges.txt")
    save_features(g, out / "features.txt")
    if g.labels is not None and (g.labels >= 0).any():
        save_labels(g, out / "labels.txt")
    entries = {"kind": args.kind, "n": args.n, "seed": args.seed,
               "threads": args.threads}
    if args.kind == "er":
        entries["p"] = args.p
        if args.feature_dim is not None:
            entries["feature_dim"] = args.feature_dim
    _write_resolved(out, entries)
    print(f"wrote {g.num_nodes} nodes / {g.num_edges} edges to {out}")
    return 0


def cmd_walks(args) -> int:
    out = _out_dir(args)
    g = load_graph(args.edges, args.features, None)
    corpus = sample_walks(g, gamma=args.gamma, l=args.l, seed=args.seed)
    save_corpus(corpus, g, out / "corpus.txt")
    with open(out / "node_dists.txt", "w", encoding="utf-8") as fh:
        for v in range(g.num_nodes):
            pids, probs = corpus.node_dist(v)
            cells = " ".join(f"{int(p)}:{q:.17g}" for p, q in zip(pids, probs))
            fh.write(f"{g.node_ids[v]} {cells}\n".rstrip() + "\n")
    with open(out / "graph_dist.txt", "w", encoding="utf-8") as fh:
        for pid, prob in enumerate(corpus.graph_dist):
            if prob > 0:
                fh.write(f"{pid} {prob:.17g}\n")
    _write_resolved(out, {"edges": args.edges, "gamma": args.gamma,
                          "l": args.l, "seed": args.seed,
                          "threads": args.threads})
    print(f"sampled {len(corpus.walks)} walks "
          f"({len(corpus.registry)} distinct patterns) to {out}")
    return 0


def cmd_train(args) -> int:
    out = _out_dir(args)
    file_cfg = read_config_file(args.config) if args.config else {}
    cfg = _resolve_train_config(args, file_cfg)
    chosen = _apply_backend(args.backend)
    g = load_graph(args.edges, args.features, args.labels)
    corpus = sample_walks(g, gamma=cfg.gamma, l=cfg.l, seed=cfg.seed)
    result = train(g, corpus, cfg,
                   use_walk_loss=not args.withhold_triples)
    save_embeddings(out / "embeddings.txt", result.embeddings, g.node_ids)
    save_history(out / "loss.csv", result.history)
    save_checkpoint(out / "checkpoint.txt", result.params,
                    corpus_meta={"gamma": cfg.gamma, "l": cfg.l,
                                 "seed": cfg.seed},
                    registry=corpus.registry)
    _write_resolved(out, _config_entries(
        cfg, edges=args.edges, features=args.features, labels=args.labels,
        threads=args.threads, backend=chosen,
        withhold_triples=int(args.withhold_triples)))
    print(f"trained {result.iterations} iterations "
          f"(final loss {result.history[-1, 3]:.6f}), wrote {out}")
    return 0


def cmd_eval_classify(args) -> int:
    ids, emb = load_embeddings(args.embeddings)
    label_map = _load_label_map(args.labels)
    keep, labels = [], []
    tokens = sorted(set(label_map.values()))
    token_id = {t: i for i, t in enumerate(tokens)}
    for row, node in enumerate(ids):
        if node in label_map:
            keep.append(row)
            labels.append(token_id[label_map[node]])
    if not keep:
        print("error: no labeled node has an embedding", file=sys.stderr)
        return 1
    report = classify(emb[keep], np.array(labels), test_frac=args.test_frac,
                      repeats=args.repeats, seed=args.seed)
    print(report.table())
    if args.out:
        out = _out_dir(args)
        (out / "classify.csv").write_text(
            "\n".join(report.csv_lines()) + "\n", encoding="utf-8")
        _write_resolved(out, {"embeddings": args.embeddings,
                              "labels": args.labels,
                              "test_frac": args.test_frac,
                              "repeats": args.repeats, "seed": args.seed,
                              "threads": args.threads})
    return 0


def cmd_eval_linkpred(args) -> int:
    file_cfg = read_config_file(args.config) if args.config else {}
    cfg = _resolve_train_config(args, file_cfg)
    chosen = _apply_backend(args.backend)
    g = load_graph(args.edges, args.features, None)

    def embed_fn(reduced: Graph) -> np.ndarray:
        corpus = sample_walks(reduced, gamma=cfg.gamma, l=cfg.l,
                              seed=cfg.seed)
        result = train(reduced, corpus, cfg)
        return result.embeddings

    report = link_prediction_eval(g, embed_fn, frac=args.frac, seed=args.seed)
    print(report.table())
    if args.out:
        out = _out_dir(args)
        (out / "linkpred.csv").write_text(
            "\n".join(report.csv_lines()) + "\n", encoding="utf-8")
        _write_resolved(out, _config_entries(
            cfg, edges=args.edges, features=args.features, frac=args.frac,
            threads=args.threads, backend=chosen))
    return 0


def cmd_project(args) -> int:
    ids, emb = load_embeddings(args.embeddings)
    coords = pca_2d(emb)
    label_map = _load_label_map(args.labels) if args.labels else {}
    out = _out_dir(args)
    with open(out / "pca.csv", "w", encoding="utf-8") as fh:
        fh.write("node_id,x,y,label\n")
        for i, node in enumerate(ids):
            fh.write("%s,%.17g,%.17g,%s\n"
                     % (node, coords[i, 0], coords[i, 1],
                        label_map.get(node, "")))
    _write_resolved(out, {"embeddings": args.embeddings,
                          "labels": args.labels or "",
                          "threads": args.threads})
    print(f"wrote {out / 'pca.csv'}")
    return 0


def cmd_gradcheck(args) -> int:
    errors = gradcheck_model(n=args.n, seed=args.seed)
    worst = max(errors.values())
    width = max(len(k) for k in errors)
    for name in sorted(errors):
        print("%-*s  %.3e" % (width, name, errors[name]))
    print("max relative error %.3e (tolerance 1e-04)" % worst)
    return 0 if worst < 1e-4 else 1


def cmd_bench_scaling(args) -> int:
    out = _out_dir(args)
    chosen = _apply_backend(args.backend)
    sizes = [int(s) for s in args.sizes.split(",") if s]
    if args.include_100k:
        sizes.append(100000)
    rows = []
    for n in sizes:
        # fixed feature width so per-size cost differences are graph-driven
        g = generate_er(n, args.avg_degree / n, seed=args.seed,
                        feature_dim=args.feature_dim)
        t0 = time.perf_counter()
        corpus = sample_walks(g, gamma=args.gamma, l=args.l, seed=args.seed)
        pre = time.perf_counter() - t0
        cfg = TrainConfig(gamma=args.gamma, l=args.l, seed=args.seed,
                          max_iters=args.iters, patience=args.iters)
        t0 = time.perf_counter()
        train(g, corpus, cfg)
        tr = time.perf_counter() - t0
        rows.append((n, pre, tr))
        print(f"n={n}: preprocess {pre:.2f}s train {tr:.2f}s")
    with open(out / "scaling.csv", "w", encoding="utf-8") as fh:
        fh.write("n,preprocess_s,train_s,log10_n,log10_preprocess_s,"
                 "log10_train_s\n")
        for n, pre, tr in rows:
            fh.write("%d,%.6f,%.6f,%.6f,%.6f,%.6f\n"
                     % (n, pre, tr, np.log10(n), np.log10(pre), np.log10(tr)))
    logs = np.log10([[n, pre] for n, pre, _ in rows])
    slope = np.polyfit(logs[:, 0], logs[:, 1], 1)[0]
    print("least-squares slope of log(preprocess) vs log(n): %.3f" % slope)
    _write_resolved(out, {"iters": args.iters, "gamma": args.gamma,
                          "l": args.l, "seed": args.seed,
                          "avg_degree": args.avg_degree,
                          "feature_dim": args.feature_dim,
                          "threads": args.threads, "backend": chosen})
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker threads; every backend is deterministic at "
                        "any setting, --threads 1 is the strictest mode")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--backend", choices=["auto", "compiled", "python"],
                   default="auto", help="compute kernel selection")
    for name in _TRAIN_KEYS:
        flag = "--" + name.replace("_", "-")
        kind = int if _TRAIN_KEYS[name] in (int, "int") else float
        p.add_argument(flag, type=kind, default=None,
                       help=f"training option {name}")


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="structwalk",
        description="walk-pattern graph embeddings: synthesize graphs, "
                    "sample walks, train, evaluate, project")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic graph")
    p.add_argument("kind", choices=["er", "triad-circle"])
    p.add_argument("--n", type=int, required=True, help="node count")
    p.add_argument("--p", type=float, default=0.05,
                   help="er edge probability")
    p.add_argument("--feature-dim", type=int, default=None,
                   help="er feature width (default: identity or noise)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", required=True, help="output directory")
    _add_common(p)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("walks", help="sample walks and pattern distributions")
    p.add_argument("--edges", required=True)
    p.add_argument("--features", default=None)
    p.add_argument("--gamma", type=int, default=100)
    p.add_argument("--l", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_walks)

    p = sub.add_parser("train", help="train embeddings on a graph")
    p.add_argument("--edges", required=True)
    p.add_argument("--features", default=None)
    p.add_argument("--labels", default=None)
    p.add_argument("--withhold-triples", action="store_true",
                   help="train without the pattern-proximity loss")
    p.add_argument("-o", "--out", required=True)
    _add_train_flags(p)
    _add_common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval-classify", help="classify stored embeddings")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--test-frac", type=float, default=0.2)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", default=None)
    _add_common(p)
    p.set_defaults(fn=cmd_eval_classify)

    p = sub.add_parser("eval-linkpred",
                       help="hold out edges, retrain, score by inner product")
    p.add_argument("--edges", required=True)
    p.add_argument("--features", default=None)
    p.add_argument("--frac", type=float, default=0.1)
    p.add_argument("-o", "--out", default=None)
    _add_train_flags(p)
    _add_common(p)
    p.set_defaults(fn=cmd_eval_linkpred)

    p = sub.add_parser("project", help="2-D PCA projection of embeddings")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("-o", "--out", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_project)

    p = sub.add_parser("gradcheck",
                       help="finite-difference check of the full objective")
    p.add_argument("--n", type=int, default=30, help="er graph size")
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("bench-scaling",
                       help="time preprocessing and training across sizes")
    p.add_argument("--avg-degree", type=float, default=6.0,
                   help="er expected degree (edge probability avg/n)")
    p.add_argument("--gamma", type=int, default=100)
    p.add_argument("--l", type=int, default=8)
    p.add_argument("--iters", type=int, default=30,
                   help="fixed training iteration budget")
    p.add_argument("--feature-dim", type=int, default=32,
                   help="node feature width, held constant across sizes")
    p.add_argument("--sizes", default="100,1000,10000",
                   help="comma-separated node counts")
    p.add_argument("--include-100k", action="store_true",
                   help="also run n=100000")
    p.add_argument("--backend", choices=["auto", "compiled", "python"],
                   default="auto")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_bench_scaling)

    return top


def run(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
