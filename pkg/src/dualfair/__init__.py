"""Fair graph partitioning through adversarial node and line-graph co-embeddings."""

from .errors import DualFairError
from .experiments import PipelineConfig, run_pipeline, vanilla_spectral
from .fairembed import TrainConfig, co_embed, train
from .features import WalkConfig, node2vec_features
from .generators import SyntheticSpec, attach_correlated_attributes, generate
from .graph import Graph, dataset_stats, load_graph
from .linegraph import LineGraph, to_line_graph
from .metrics import Partition, edge_balance, fairness_report, node_balance
from .partition import kmeans, similarity_graph, spectral_clustering

__version__ = "0.1.0"

__all__ = [
    "DualFairError",
    "Graph",
    "LineGraph",
    "Partition",
    "PipelineConfig",
    "SyntheticSpec",
    "TrainConfig",
    "WalkConfig",
    "attach_correlated_attributes",
    "co_embed",
    "dataset_stats",
    "edge_balance",
    "fairness_report",
    "generate",
    "kmeans",
    "load_graph",
    "node_balance",
    "node2vec_features",
    "run_pipeline",
    "similarity_graph",
    "spectral_clustering",
    "to_line_graph",
    "train",
    "vanilla_spectral",
]
