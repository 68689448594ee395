"""Graph-based synthesis of reasoning problems from cognitive atoms."""

from .atoms import CognitiveAtom, RawAtom, SeedProblem, dedup_atoms, filter_seeds
from .cograph import (
    AssociationGraph,
    EdgeStat,
    PruneReport,
    build_graph,
    degree_stats,
    prune_supernodes,
)
from .depgraph import DependencyGraph, StrengthRecord, build_dependency_graph, conditional_prob
from .errors import ClientError, CogAtomError, UpstreamMissingError, ValidationError
from .metrics import ClusterStats, DifficultyRecord, answer_consistency, cluster_problems, ptd
from .refine import (
    OperatorEvent,
    ReasoningCombination,
    RefineConfig,
    backbone_construction,
    bridge_replacement,
    counterfactual_perturbation,
    path_extension,
    refine_combination,
)
from .synth import QualityReport, SynthesizedProblem, assemble_dataset, extract_answer
from .walker import ReasoningPath, WalkConfig, run_walks, step_distribution

__version__ = "0.1.0"

__all__ = [
    "AssociationGraph",
    "ClientError",
    "ClusterStats",
    "CogAtomError",
    "CognitiveAtom",
    "DependencyGraph",
    "DifficultyRecord",
    "EdgeStat",
    "OperatorEvent",
    "PruneReport",
    "QualityReport",
    "RawAtom",
    "ReasoningCombination",
    "ReasoningPath",
    "RefineConfig",
    "SeedProblem",
    "StrengthRecord",
    "SynthesizedProblem",
    "UpstreamMissingError",
    "ValidationError",
    "WalkConfig",
    "answer_consistency",
    "assemble_dataset",
    "backbone_construction",
    "bridge_replacement",
    "build_dependency_graph",
    "build_graph",
    "cluster_problems",
    "conditional_prob",
    "counterfactual_perturbation",
    "dedup_atoms",
    "degree_stats",
    "extract_answer",
    "filter_seeds",
    "path_extension",
    "prune_supernodes",
    "ptd",
    "refine_combination",
    "run_walks",
    "step_distribution",
]
