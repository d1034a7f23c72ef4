"""CAR field simulation over a six-patch layout, and evaluation metrics.

Each patch carries an independent Gaussian field per attribute,

    X ~ Normal(mu 1, (I - eta W)^-1 tau^2)

with ``W`` the row-standardised 8-NN weights of that patch's points. Points
outside every patch are i.i.d. standard normal noise.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import linalg

from .data_model import Partition, PairTestResult, SpatialDataset
from .errors import GeometryOverflow, InvalidParameter, ShapeMismatch, SingularSystem
from .mmd import KernelSpec, mmd2_biased
from .spatial_graph import build_knn_links, row_standardize

NOISE, REGION1, REGION2 = 0, 1, 2
MIN_PATCH_POINTS = 20
COND_LIMIT = 1e12


# --------------------------------------------------------------------- geometry


@dataclass(frozen=True)
class Patch:
    """A named planar shape. ``params`` depend on ``shape``:

    circle (cx, cy, r); annulus (cx, cy, r_in, r_out);
    rect (x0, y0, x1, y1); triangle (x1, y1, x2, y2, x3, y3).
    """

    name: str
    region: int
    shape: str
    params: tuple[float, ...]

    def contains(self, xy) -> np.ndarray:
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        x, y = xy[:, 0], xy[:, 1]
        p = self.params
        if self.shape == "circle":
            return (x - p[0]) ** 2 + (y - p[1]) ** 2 < p[2] ** 2
        if self.shape == "annulus":
            r2 = (x - p[0]) ** 2 + (y - p[1]) ** 2
            return (r2 >= p[2] ** 2) & (r2 < p[3] ** 2)
        if self.shape == "rect":
            return (x >= p[0]) & (x < p[2]) & (y >= p[1]) & (y < p[3])
        if self.shape == "triangle":
            a, b, c = np.reshape(p, (3, 2))

            def side(u, v):
                return (v[0] - u[0]) * (y - u[1]) - (v[1] - u[1]) * (x - u[0])

            s1, s2, s3 = side(a, b), side(b, c), side(c, a)
            return ((s1 >= 0) & (s2 >= 0) & (s3 >= 0)) | ((s1 <= 0) & (s2 <= 0) & (s3 <= 0))
        raise InvalidParameter(f"unknown patch shape {self.shape!r}")

    @property
    def area(self) -> float:
        p = self.params
        if self.shape == "circle":
            return math.pi * p[2] ** 2
        if self.shape == "annulus":
            return math.pi * (p[3] ** 2 - p[2] ** 2)
        if self.shape == "rect":
            return (p[2] - p[0]) * (p[3] - p[1])
        a, b, c = np.reshape(p, (3, 2))
        return 0.5 * abs((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))

    def bbox(self) -> tuple[float, float, float, float]:
        p = self.params
        if self.shape in ("circle", "annulus"):
            r = p[-1]
            return p[0] - r, p[1] - r, p[0] + r, p[1] + r
        if self.shape == "rect":
            return tuple(p)
        pts = np.reshape(p, (3, 2))
        return (*pts.min(axis=0), *pts.max(axis=0))


PRESET_DIR = Path(__file__).with_name("presets")


def load_patches(path=None) -> tuple[Patch, ...]:
    """Patch list from a layout file; defaults to the shipped reference layout."""
    path = PRESET_DIR / "patches.json" if path is None else Path(path)
    spec = json.loads(path.read_text(encoding="utf-8"))
    return tuple(Patch(p["name"], int(p["region"]), p["shape"], tuple(map(float, p["params"]))) for p in spec["patches"])


# Region 1: A, B, C.  Region 2: D, E, F.  C fills the hole of the annulus F.
PATCHES = load_patches()


# --------------------------------------------------------------------- scenario


@dataclass(frozen=True)
class RegionParams:
    mu: float
    tau2: float = 1.0
    eta: float = 0.8


PLACEMENTS = ("grid", "jitter", "uniform")


@dataclass(frozen=True)
class CarScenario:
    n: int = 2500
    p: int = 5
    region1: RegionParams = field(default_factory=lambda: RegionParams(4.0))
    region2: RegionParams = field(default_factory=lambda: RegionParams(10.0))
    noise_mean: float = 0.0
    noise_var: float = 1.0
    noise_features: int = 0
    n_neighbors: int = 8
    domain: float = 40.0
    placement: str = "uniform"
    jitter: float = 0.5
    patches: tuple[Patch, ...] = PATCHES

    def __post_init__(self):
        for name in ("region1", "region2"):
            v = getattr(self, name)
            if isinstance(v, dict):
                object.__setattr__(self, name, RegionParams(**v))
        patches = tuple(Patch(**p) if isinstance(p, dict) else p for p in self.patches)
        patches = tuple(replace(p, params=tuple(float(v) for v in p.params)) for p in patches)
        object.__setattr__(self, "patches", patches)
        if self.n < 1 or self.p < 1:
            raise InvalidParameter("n and p must be positive")
        if self.noise_features < 0:
            raise InvalidParameter("noise_features must be nonnegative")
        if self.placement not in PLACEMENTS:
            raise InvalidParameter(f"placement must be one of {PLACEMENTS}")
        if self.placement != "uniform" and math.isqrt(self.n) ** 2 != self.n:
            raise InvalidParameter(f"{self.placement} placement needs a square n, got {self.n}")
        for r in (self.region1, self.region2):
            if r.tau2 <= 0:
                raise InvalidParameter("tau2 must be positive")
            # row-standardised W has spectral radius 1
            if not abs(r.eta) < 1:
                raise InvalidParameter(f"|eta| must be < 1, got {r.eta}")
        for pt in self.patches:
            x0, y0, x1, y1 = pt.bbox()
            if x0 < 0 or y0 < 0 or x1 > self.domain or y1 > self.domain:
                raise InvalidParameter(f"patch {pt.name} leaves the domain")

    def region(self, label: int) -> RegionParams:
        return self.region1 if label == REGION1 else self.region2

    def expected_points(self) -> dict[str, float]:
        dens = self.n / self.domain**2
        return {pt.name: pt.area * dens for pt in self.patches}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["patches"] = [asdict(p) for p in self.patches]
        return d

    @classmethod
    def from_dict(cls, d) -> "CarScenario":
        d = dict(d)
        if "patches" in d:
            d["patches"] = tuple(Patch(**p) for p in d["patches"])
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "CarScenario":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def benchmark_scenario(n=2500, p=5, eta=0.8, noise_features=0, placement="grid", **kw) -> CarScenario:
    """Six-patch layout with mu = 4 and 10, tau^2 = 1 and a shared eta."""
    sc = CarScenario(
        n=int(n),
        p=int(p),
        region1=RegionParams(4.0, 1.0, float(eta)),
        region2=RegionParams(10.0, 1.0, float(eta)),
        noise_features=int(noise_features),
        placement=placement,
        **kw,
    )
    small = {k: v for k, v in sc.expected_points().items() if v < MIN_PATCH_POINTS}
    if small:
        raise GeometryOverflow(
            f"n={n} leaves patches below {MIN_PATCH_POINTS} points: {sorted(small)}"
        )
    return sc


def covariance_only_scenario(n=2500, p=5, eta1=0.3, eta2=0.8, mu=10.0, **kw) -> CarScenario:
    """Equal means; the regions differ only in spatial autocorrelation."""
    return CarScenario(
        n=n, p=p, region1=RegionParams(mu, 1.0, eta1), region2=RegionParams(mu, 1.0, eta2), **kw
    )


PRESETS = {
    f"paper-{n}-{p}-{str(eta).replace('.', '')}": (n, p, eta)
    for n in (2500, 4900)
    for p in (5, 10)
    for eta in (0.3, 0.8)
}


def preset(name: str, noise_features: int = 0, **kw) -> CarScenario:
    """``paper-<n>-<p>-<eta digits>``, e.g. ``paper-2500-5-08``."""
    if name not in PRESETS:
        raise InvalidParameter(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    n, p, eta = PRESETS[name]
    return benchmark_scenario(n, p, eta, noise_features, **kw)


# --------------------------------------------------------------------- sampling


def place_points(scenario: CarScenario, rng: np.random.Generator) -> np.ndarray:
    L = scenario.domain
    if scenario.placement == "uniform":
        return rng.uniform(0.0, L, size=(scenario.n, 2))
    side = math.isqrt(scenario.n)
    h = L / side
    centres = (np.arange(side) + 0.5) * h
    gx, gy = np.meshgrid(centres, centres)
    xy = np.column_stack((gx.ravel(), gy.ravel()))
    if scenario.placement == "jitter":
        xy = xy + rng.uniform(-0.5, 0.5, size=xy.shape) * h * scenario.jitter
    return xy


def patch_membership(scenario: CarScenario, coords) -> np.ndarray:
    """Index into ``scenario.patches`` for each point, -1 for noise."""
    coords = np.asarray(coords, dtype=float)
    out = np.full(coords.shape[0], -1, dtype=np.int64)
    for k, pt in enumerate(scenario.patches):
        hit = pt.contains(coords)
        if np.any(out[hit] >= 0):
            raise InvalidParameter(f"patch {pt.name} overlaps an earlier patch")
        out[hit] = k
    return out


def car_covariance(W: np.ndarray, eta: float, tau2: float = 1.0) -> np.ndarray:
    """``(I - eta W)^-1 tau^2`` exactly as written (not symmetric in general)."""
    n = W.shape[0]
    a = np.eye(n) - eta * W
    if np.linalg.cond(a) > COND_LIMIT:
        raise SingularSystem("I - eta W is numerically singular")
    return linalg.solve(a, np.eye(n) * tau2)


def sampling_covariance(W: np.ndarray, eta: float, tau2: float = 1.0) -> np.ndarray:
    """Symmetric part of :func:`car_covariance`, the matrix actually sampled.

    A row-standardised ``W`` makes the CAR matrix asymmetric unless every
    node has the same degree; the symmetric part keeps the diagonal and
    averages ``cov(i, j)`` with ``cov(j, i)``.
    """
    s = car_covariance(W, eta, tau2)
    return 0.5 * (s + s.T)


def sample_car(W, eta, tau2, mu, p, rng: np.random.Generator, *, reps: int | None = None):
    """Draw ``p`` independent fields (``n x p``), or ``reps x n x p`` if ``reps`` is set."""
    cov = sampling_covariance(np.asarray(W, float), eta, tau2)
    try:
        chol = linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        raise SingularSystem("CAR covariance is not positive definite") from None
    n = cov.shape[0]
    if reps is None:
        return mu + chol @ rng.standard_normal((n, p))
    z = rng.standard_normal((reps, n, p))
    return mu + np.einsum("ij,rjp->rip", chol, z)


def patch_weights(coords: np.ndarray, k: int = 8) -> np.ndarray:
    n = coords.shape[0]
    if n < 2:
        raise GeometryOverflow("a patch needs at least two points")
    if k >= n:
        warnings.warn(f"patch has {n} points; using {n - 1} neighbours", stacklevel=3)
        k = n - 1
    return row_standardize(build_knn_links(coords, k))


def simulate_car(scenario: CarScenario, seed=0) -> SpatialDataset:
    """One dataset; ``true_labels`` hold 1, 2 for the two regions and 0 for noise."""
    rng = np.random.default_rng(seed)
    coords = place_points(scenario, rng)
    member = patch_membership(scenario, coords)
    attrs = np.empty((scenario.n, scenario.p))
    labels = np.full(scenario.n, NOISE, dtype=np.int64)
    for k, pt in enumerate(scenario.patches):
        idx = np.flatnonzero(member == k)
        if idx.size < 2:
            raise GeometryOverflow(f"patch {pt.name} received {idx.size} points")
        reg = scenario.region(pt.region)
        W = patch_weights(coords[idx], scenario.n_neighbors)
        attrs[idx] = sample_car(W, reg.eta, reg.tau2, reg.mu, scenario.p, rng)
        labels[idx] = pt.region
    noise = np.flatnonzero(member < 0)
    attrs[noise] = scenario.noise_mean + math.sqrt(scenario.noise_var) * rng.standard_normal(
        (noise.size, scenario.p)
    )
    if scenario.noise_features:
        attrs = np.hstack((attrs, rng.standard_normal((scenario.n, scenario.noise_features))))
    names = tuple(f"a{j + 1}" for j in range(scenario.p)) + tuple(
        f"noise{j + 1}" for j in range(scenario.noise_features)
    )
    return SpatialDataset(coords, attrs, true_labels=labels, attr_names=names)


def morans_i(x, W) -> float:
    """Moran's I of ``x`` under weights ``W``."""
    x = np.asarray(x, float).ravel()
    z = x - x.mean()
    W = np.asarray(W.toarray() if hasattr(W, "toarray") else W, float)
    return float(x.size / W.sum() * (z @ W @ z) / (z @ z))


def morans_i_permutation(x, W, reps=999, seed=0) -> tuple[float, float, float]:
    """Observed Moran's I with the mean and SD of its permutation null."""
    rng = np.random.default_rng(seed)
    x = np.asarray(x, float).ravel()
    null = np.array([morans_i(rng.permutation(x), W) for _ in range(reps)])
    return morans_i(x, W), float(null.mean()), float(null.std(ddof=1))


# --------------------------------------------------------------------- metrics


def _labels(x) -> np.ndarray:
    return np.asarray(x.labels if isinstance(x, Partition) else x)


def ari(partition, truth) -> float:
    """Adjusted Rand index from the contingency table."""
    a, b = _labels(partition), _labels(truth)
    if a.shape != b.shape:
        raise ShapeMismatch("labelings differ in length")
    n = a.size
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai.ravel(), bi.ravel()), 1)

    def c2(v):
        v = np.asarray(v, dtype=float)
        return float((v * (v - 1) / 2).sum())

    index = c2(table)
    sa, sb = c2(table.sum(axis=1)), c2(table.sum(axis=0))
    total = n * (n - 1) / 2
    expected = sa * sb / total if total else 0.0
    top = 0.5 * (sa + sb)
    if top == expected:
        return 1.0
    return (index - expected) / (top - expected)


def majority_truth(partition: Partition, truth) -> np.ndarray:
    """Most common true label in each cluster (ties to the smaller label)."""
    truth = np.asarray(truth)
    out = []
    for g in range(1, partition.G + 1):
        vals, counts = np.unique(truth[partition.labels == g], return_counts=True)
        out.append(vals[np.argmax(counts)])
    return np.asarray(out)


def pair_truth(partition: Partition, truth) -> dict[tuple[int, int], bool]:
    """``True`` where the pair's clusters come from different regions."""
    maj = majority_truth(partition, truth)
    G = partition.G
    return {(g, h): bool(maj[g - 1] != maj[h - 1]) for g in range(1, G + 1) for h in range(g + 1, G + 1)}


@dataclass(frozen=True)
class PairMetrics:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def fpr(self) -> float:
        return self.fp / (self.fp + self.tn) if self.fp + self.tn else 0.0

    @property
    def fnr(self) -> float:
        return self.fn / (self.fn + self.tp) if self.fn + self.tp else 0.0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0


def pair_metrics(results, truth_pairs: dict[tuple[int, int], bool]) -> PairMetrics:
    """Confusion counts with a detected difference as the positive class."""
    tp = fp = tn = fn = 0
    for r in results:
        diff = truth_pairs[(min(r.g, r.h), max(r.g, r.h))]
        if r.reject and diff:
            tp += 1
        elif r.reject:
            fp += 1
        elif diff:
            fn += 1
        else:
            tn += 1
    return PairMetrics(tp, fp, tn, fn)


# --------------------------------------------------------------------- benchmark


@dataclass(frozen=True)
class RunRecord:
    run: int
    seed: int
    G: int
    n_pairs: int
    n_diff_pairs: int
    fpr: float
    fnr: float
    precision: float
    recall: float
    f1: float
    ari: float
    final_G: int


def _median_iqr(v) -> tuple[float, float]:
    v = np.asarray(v, float)
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return float(med), float(q3 - q1)


@dataclass(frozen=True, eq=False)
class EvalReport:
    label: str
    runs: tuple[RunRecord, ...]
    m: int
    G: int

    def summary(self) -> dict:
        out = {"setting": self.label, "runs": len(self.runs), "m": self.m, "G": self.G}
        for key in ("fnr", "fpr", "f1", "ari"):
            med, iqr = _median_iqr([getattr(r, key) for r in self.runs])
            out[f"{key}_median"] = med
            out[f"{key}_iqr"] = iqr
        out["pct_f1_below_1"] = float(np.mean([r.f1 < 1 for r in self.runs]))
        out["pct_ari_below_1"] = float(np.mean([r.ari < 1 for r in self.runs]))
        return out


def run_seed(base: int, *key: int) -> int:
    """Deterministic 63-bit seed derived from ``base`` and an integer key."""
    ss = np.random.SeedSequence(int(base), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def run_benchmark(settings, runs: int, seed: int, pipeline_config=None, *, progress=None) -> list[EvalReport]:
    """Simulate, run the pipeline with fixed ``(m, G)`` and score each run.

    ``settings`` is an iterable of ``(label, CarScenario)``. When the config
    leaves ``m`` or ``G`` unset they are chosen once per setting on run 0 of
    the same scenario without noise features, so a setting with noise columns
    reuses the choice made for its all-signal counterpart.
    """
    from .pipeline import PipelineConfig, run_pipeline, select_for

    cfg = pipeline_config or PipelineConfig()
    if runs < 1:
        raise InvalidParameter("runs must be at least 1")
    reports = []
    for s_idx, (label, scenario) in enumerate(settings):
        m, G = cfg.m, cfg.G
        if m is None or G is None:
            rep = simulate_car(replace(scenario, noise_features=0), run_seed(seed, s_idx, 0))
            sel = select_for(rep, cfg)
            m, G = sel.m, sel.G
        fixed = replace(cfg, m=m, G=G)
        records = []
        for r in range(runs):
            rs = run_seed(seed, s_idx, r)
            ds = simulate_car(scenario, rs)
            res = run_pipeline(ds, fixed, seed=rs)
            truth = pair_truth(res.initial, ds.true_labels)
            pm = pair_metrics(res.tests, truth)
            records.append(
                RunRecord(
                    r, rs, res.initial.G, len(res.tests), int(sum(truth.values())),
                    pm.fpr, pm.fnr, pm.precision, pm.recall, pm.f1,
                    ari(res.final, ds.true_labels), res.final.G,
                )
            )
            if progress:
                progress(label, r, records[-1])
        reports.append(EvalReport(label, tuple(records), m, G))
    return reports


# --------------------------------------------------------------------- Monte Carlo


def patch_pairs(scenario: CarScenario):
    """All patch pairs, tagged ``same`` or ``different`` by region."""
    P = scenario.patches
    out = []
    for i in range(len(P)):
        for j in range(i + 1, len(P)):
            same = P[i].region == P[j].region
            out.append((i, j, "same" if same else "different"))
    return out


def mmd_sampling_distribution(scenario: CarScenario, specs, replicates: int, seed=0) -> list[dict]:
    """MMD^2 between true patches over repeated simulations, in long format.

    One row per (replicate, kernel configuration, patch pair).
    """
    if replicates < 1:
        raise InvalidParameter("replicates must be at least 1")
    specs = [s if isinstance(s, KernelSpec) else KernelSpec(*s) for s in specs]
    pairs = patch_pairs(scenario)
    rows = []
    for rep in range(replicates):
        ds = simulate_car(scenario, run_seed(seed, rep))
        member = patch_membership(scenario, ds.coords)
        groups = [ds.attrs[member == k] for k in range(len(scenario.patches))]
        for spec in specs:
            for i, j, kind in pairs:
                rows.append(
                    {
                        "replicate": rep,
                        "kernel": spec.name.value,
                        "param": spec.param,
                        "pair": f"{scenario.patches[i].name}-{scenario.patches[j].name}",
                        "kind": kind,
                        "mmd2": mmd2_biased(groups[i], groups[j], spec).value,
                    }
                )
    return rows


def sampling_medians(rows) -> dict[tuple[str, float, str], float]:
    acc: dict[tuple[str, float, str], list[float]] = {}
    for r in rows:
        acc.setdefault((r["kernel"], r["param"], r["kind"]), []).append(r["mmd2"])
    return {k: float(np.median(v)) for k, v in acc.items()}
