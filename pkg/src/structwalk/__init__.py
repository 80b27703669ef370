"""structwalk: graph representation learning with walk-pattern-aware
neighborhood aggregation."""

from .backend import available_backends, backend_name, set_backend
from .graph import (Graph, DegreeStats, degree_stats, expected_ego_edges,
                    generate_er, generate_triad_circle, load_graph)
from .model import (ModelParams, embed_all, forward, init_params,
                    load_checkpoint, save_checkpoint)
from .walks import (AnonPattern, PatternRegistry, WalkCorpus, anonymize,
                    context_pairs, enumerate_patterns, receptive_radius,
                    sample_walk_triples, sample_walks)

__version__ = "0.1.0"

__all__ = [
    "AnonPattern", "DegreeStats", "Graph", "ModelParams", "PatternRegistry",
    "WalkCorpus", "anonymize", "available_backends", "backend_name",
    "context_pairs", "degree_stats", "embed_all", "enumerate_patterns",
    "expected_ego_edges", "forward", "generate_er", "generate_triad_circle",
    "init_params", "load_checkpoint", "load_graph", "receptive_radius",
    "sample_walk_triples", "sample_walks", "save_checkpoint", "set_backend",
    "__version__",
]
