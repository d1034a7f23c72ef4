"""Repeated spatial pattern detection.

Spatially constrained clustering, pairwise kernel MMD tests with a block
permutation null, and relabelling of clusters the tests cannot separate.
"""

__version__ = "0.1.0"

from ._backend import NAME as BACKEND
from .cahc import (
    Dendrogram,
    Linkage,
    LinkageSpec,
    Selection,
    cahc_fit,
    cut_partition,
    select_params,
    spatial_silhouette,
)
from .data_model import (
    AttrKind,
    PairTestResult,
    Partition,
    SpatialDataset,
    load_dataset,
    load_partition,
    save_partition,
    write_dataset,
)
from .dissimilarity import distance_matrix
from .errors import RepSpatError
from .mmd import KernelSpec, mmd2_biased, mmd2_unbiased
from .permtest import bh_adjust, block_permutation_null, p_value, test_all_pairs
from .pipeline import PipelineConfig, PipelineResult, run_pipeline
from .reassign import SimilarityGraph, build_similarity_graph, reassign_labels
from .simulate_eval import CarScenario, ari, preset, run_benchmark, simulate_car
from .spatial_graph import LinkGraph, build_knn_links

__all__ = [
    "BACKEND",
    "AttrKind",
    "CarScenario",
    "Dendrogram",
    "KernelSpec",
    "Linkage",
    "LinkageSpec",
    "LinkGraph",
    "PairTestResult",
    "Partition",
    "PipelineConfig",
    "PipelineResult",
    "RepSpatError",
    "Selection",
    "SimilarityGraph",
    "SpatialDataset",
    "ari",
    "bh_adjust",
    "block_permutation_null",
    "build_knn_links",
    "build_similarity_graph",
    "cahc_fit",
    "cut_partition",
    "distance_matrix",
    "load_dataset",
    "load_partition",
    "mmd2_biased",
    "mmd2_unbiased",
    "p_value",
    "preset",
    "reassign_labels",
    "run_benchmark",
    "run_pipeline",
    "save_partition",
    "select_params",
    "simulate_car",
    "spatial_silhouette",
    "test_all_pairs",
    "write_dataset",
]
