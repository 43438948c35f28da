"""Supervised graph clustering: proposals on a KNN affinity graph, scored and
refined by small graph convolutional networks, resolved by de-overlapping."""

from .evaluation import ClusterSet, PairwiseMetrics, QualityScores, kmeans_baseline, pairwise_metrics
from .gcn import GcnDetModel, GcnSegModel, TrainConfig
from .graph import AffinityGraph, EmbeddingSet, build_knn_graph
from .pipeline import PipelineConfig, run_pipeline
from .proposals import ProposalSet, SuperVertexConfig
from .synth import SynthConfig, synth_dataset

__version__ = "0.1.0"

__all__ = [
    "AffinityGraph", "ClusterSet", "EmbeddingSet", "GcnDetModel", "GcnSegModel",
    "PairwiseMetrics", "PipelineConfig", "ProposalSet", "QualityScores", "SuperVertexConfig",
    "SynthConfig", "TrainConfig", "build_knn_graph", "kmeans_baseline", "pairwise_metrics",
    "run_pipeline", "synth_dataset",
]
