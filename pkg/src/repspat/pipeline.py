"""End-to-end run: cluster, test every pair, merge indistinguishable clusters."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .cahc import Dendrogram, Selection, cahc_fit, cut_partition, dataset_distances, select_params
from .data_model import AttrKind, Partition, PairTestResult, SpatialDataset
from .errors import InvalidParameter
from .mmd import BaseDistance, KernelSpec
from .permtest import DEFAULT_B, DEFAULT_Q, test_all_pairs
from .reassign import Mode, SimilarityGraph, build_similarity_graph, reassign_labels
from .spatial_graph import LinkGraph, build_knn_links

DEFAULT_M_GRID = tuple(range(2, 11))
DEFAULT_G_GRID = tuple(range(2, 11))


@dataclass(frozen=True)
class PipelineConfig:
    input: str | None = None
    preset: str | None = None
    attr_kind: str = "continuous"
    standardize: bool = False
    linkage: str = "ward"
    m: int | None = None
    G: int | None = None
    m_grid: tuple[int, ...] = DEFAULT_M_GRID
    G_grid: tuple[int, ...] = DEFAULT_G_GRID
    kernel: str = "imq"
    kernel_param: float | None = None
    distance: str | None = None
    B: int = DEFAULT_B
    q: float = DEFAULT_Q
    mode: str = "components"
    seed: int = 0
    noise_features: int = 0
    out: str | None = None
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "m_grid", tuple(int(v) for v in self.m_grid))
        object.__setattr__(self, "G_grid", tuple(int(v) for v in self.G_grid))
        if not self.m_grid or not self.G_grid:
            raise InvalidParameter("m and G grids must be nonempty")
        if not 0 < self.q < 1:
            raise InvalidParameter(f"q must lie in (0, 1), got {self.q}")
        if self.B < 1:
            raise InvalidParameter("B must be at least 1")
        if self.m is not None and self.m < 1:
            raise InvalidParameter("m must be positive")
        if self.G is not None and self.G < 2:
            raise InvalidParameter("G must be at least 2")
        Mode(self.mode)
        AttrKind(self.attr_kind)

    def kernel_spec(self, kind: AttrKind = AttrKind.CONTINUOUS) -> KernelSpec:
        dist = self.distance
        if dist is None:
            dist = BaseDistance.JACCARD if kind is AttrKind.BINARY else BaseDistance.EUCLIDEAN
        return KernelSpec(self.kernel, self.kernel_param, dist)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["m_grid"] = list(self.m_grid)
        d["G_grid"] = list(self.G_grid)
        return d

    @classmethod
    def from_dict(cls, d) -> "PipelineConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidParameter(f"unknown config keys {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class PipelineResult:
    m: int
    G: int
    links: LinkGraph
    dendrogram: Dendrogram
    initial: Partition
    tests: list[PairTestResult]
    graph: SimilarityGraph
    final: Partition
    selection: Selection | None = None
    kernel: KernelSpec = field(default_factory=KernelSpec)


def select_for(dataset: SpatialDataset, cfg: PipelineConfig, dist=None) -> Selection:
    m_grid = (cfg.m,) if cfg.m is not None else cfg.m_grid
    G_grid = (cfg.G,) if cfg.G is not None else cfg.G_grid
    return select_params(dataset, m_grid, G_grid, cfg.linkage, dist=dist, threads=cfg.threads)


def cluster(dataset: SpatialDataset, cfg: PipelineConfig, dist=None):
    """Stage 1: links, dendrogram and the initial cut."""
    dist = dataset_distances(dataset) if dist is None else dist
    selection = None
    m, G = cfg.m, cfg.G
    if m is None or G is None:
        selection = select_for(dataset, cfg, dist)
        m, G = selection.m, selection.G
    links = build_knn_links(dataset.coords, m)
    dend = cahc_fit(dist, links, cfg.linkage)
    return m, G, links, dend, cut_partition(dend, G), selection


def run_pipeline(dataset: SpatialDataset, cfg: PipelineConfig, *, seed: int | None = None) -> PipelineResult:
    seed = cfg.seed if seed is None else seed
    m, G, links, dend, initial, selection = cluster(dataset, cfg)
    spec = cfg.kernel_spec(dataset.attr_kind)
    tests = test_all_pairs(dataset, initial, spec, m, cfg.B, cfg.q, seed, threads=cfg.threads)
    graph = build_similarity_graph(tests, initial.G)
    final = reassign_labels(graph, initial, cfg.mode)
    return PipelineResult(m, G, links, dend, initial, tests, graph, final, selection, spec)


def with_fixed(cfg: PipelineConfig, m: int, G: int) -> PipelineConfig:
    return replace(cfg, m=int(m), G=int(G))


