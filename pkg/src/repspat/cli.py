"""Command-line front end.

Every subcommand writes its artifacts to ``--out`` (a directory) and exits
0 on success. Failures print one JSON object to stderr naming the stage and
exit 1 (usage), 2 (data) or 3 (internal inconsistency).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__, _backend
from .cahc import cahc_fit, cut_partition, dataset_distances, spatial_silhouette
from .data_model import AttrKind, load_dataset, load_partition, save_partition, write_dataset
from .errors import InternalInconsistency, IoFailure, RepSpatError, UsageError
from .pipeline import DEFAULT_G_GRID, DEFAULT_M_GRID, PipelineConfig, select_for
from .permtest import DEFAULT_B, DEFAULT_Q, test_all_pairs
from .reassign import build_similarity_graph, reassign_labels
from .simulate_eval import (
    PLACEMENTS,
    PRESETS,
    CarScenario,
    mmd_sampling_distribution,
    preset,
    run_benchmark,
    sampling_medians,
    simulate_car,
)
from .spatial_graph import build_knn_links

MANIFEST = "manifest.json"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class _Stage:
    """Tracks the stage name reported in error JSON."""

    def __init__(self):
        self.name = "arguments"

    def __call__(self, name: str) -> "_Stage":
        self.name = name
        return self


# --------------------------------------------------------------------- helpers


def _int_list(text: str) -> tuple[int, ...]:
    """``"2,3,4"`` or ``"2-10"`` (inclusive) or a mix of both."""
    out = []
    try:
        for part in text.split(","):
            part = part.strip()
            if "-" in part:
                lo, hi = part.split("-")
                out.extend(range(int(lo), int(hi) + 1))
            elif part:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer list: {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return tuple(out)


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number list: {text!r}") from None


def resolve_threads(flag: int | None) -> int:
    if flag is not None:
        n = flag
    elif os.environ.get("REPSPAT_THREADS"):
        try:
            n = int(os.environ["REPSPAT_THREADS"])
        except ValueError:
            raise UsageError(f"REPSPAT_THREADS must be an integer, got {os.environ['REPSPAT_THREADS']!r}")
    else:
        n = os.cpu_count() or 1
    if n < 1:
        raise UsageError("thread count must be at least 1")
    return n


def _outdir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out}: {exc}") from None
    return out


def _write_csv(path: Path, header, rows) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from None


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from None


def versions() -> dict:
    return {
        "repspat": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "backend": _backend.NAME,
    }


def write_manifest(out: Path, cfg: PipelineConfig, **extra) -> None:
    doc = {"config": cfg.to_dict(), "seed": cfg.seed, "versions": versions(), **extra}
    _write_text(out / MANIFEST, json.dumps(doc, indent=2) + "\n")


def read_manifest(path) -> PipelineConfig:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return PipelineConfig.from_dict(doc["config"] if "config" in doc else doc)


def _tests_rows(tests):
    return [(t.g, t.h, repr(t.mmd2), repr(t.p_value), repr(t.p_adjusted), int(t.reject)) for t in tests]


TESTS_HEADER = ("g", "h", "mmd2", "p", "p_adj", "reject")


# --------------------------------------------------------------------- config


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--input", help="delimited text with x, y and attribute columns")
    src.add_argument("--preset", choices=sorted(PRESETS), help="simulate this scenario instead of reading input")
    p.add_argument("--attr-kind", choices=[k.value for k in AttrKind], default="continuous")
    p.add_argument("--standardize", action="store_true", help="z-score continuous attribute columns")
    p.add_argument("--noise-features", type=int, default=0, help="extra N(0,1) columns for presets")
    p.add_argument("--seed", type=int, default=0)


def _add_cluster_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--linkage", choices=["single", "complete", "average", "ward"], default="ward")
    p.add_argument("--m", type=int, help="fixed neighbourhood size (skips the m search)")
    p.add_argument("--G", type=int, help="fixed cluster count (skips the G search)")
    p.add_argument("--m-grid", type=_int_list, default=DEFAULT_M_GRID, help="e.g. 2-10 or 4,6,8")
    p.add_argument("--g-grid", type=_int_list, default=DEFAULT_G_GRID, help="e.g. 2-10")


def _add_test_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kernel", choices=["imq", "gaussian", "laplacian"], default="imq")
    p.add_argument("--kernel-param", type=float, help="IMQ c, or bandwidth sigma")
    p.add_argument("--distance", choices=["euclidean", "jaccard"], help="default follows --attr-kind")
    p.add_argument("--permutations", type=int, default=DEFAULT_B, metavar="B")
    p.add_argument("--fdr", type=float, default=DEFAULT_Q, metavar="q")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=int, help="worker threads (default: REPSPAT_THREADS or all cores)")


def config_from_args(args) -> PipelineConfig:
    return PipelineConfig(
        input=getattr(args, "input", None),
        preset=getattr(args, "preset", None),
        attr_kind=getattr(args, "attr_kind", "continuous"),
        standardize=getattr(args, "standardize", False),
        linkage=getattr(args, "linkage", "ward"),
        m=getattr(args, "m", None),
        G=getattr(args, "G", None),
        m_grid=getattr(args, "m_grid", DEFAULT_M_GRID),
        G_grid=getattr(args, "g_grid", DEFAULT_G_GRID),
        kernel=getattr(args, "kernel", "imq"),
        kernel_param=getattr(args, "kernel_param", None),
        distance=getattr(args, "distance", None),
        B=getattr(args, "permutations", DEFAULT_B),
        q=getattr(args, "fdr", DEFAULT_Q),
        mode=getattr(args, "mode", "components"),
        seed=getattr(args, "seed", 0),
        noise_features=getattr(args, "noise_features", 0),
        out=str(args.out),
        threads=resolve_threads(getattr(args, "threads", None)),
    )


def load_input(cfg: PipelineConfig):
    if cfg.preset:
        return simulate_car(preset(cfg.preset, cfg.noise_features), cfg.seed)
    if not cfg.input:
        raise UsageError("one of --input or --preset is required")
    return load_dataset(cfg.input, attr_kind=cfg.attr_kind, standardize=cfg.standardize)


# --------------------------------------------------------------------- commands


def _surface_rows(selection):
    return [(m, g, "" if np.isnan(s) else repr(s)) for m, g, s in selection.rows()]


def cmd_simulate(args, stage) -> int:
    stage("simulate")
    if args.scenario:
        sc = CarScenario.load(args.scenario)
    elif args.preset:
        sc = preset(args.preset, args.noise_features, placement=args.placement or "grid")
    else:
        raise UsageError("one of --preset or --scenario is required")
    ds = simulate_car(sc, args.seed)
    stage("write")
    write_dataset(ds, args.out)
    if args.scenario_out:
        sc.save(args.scenario_out)
    return 0


def _cluster_stage(cfg: PipelineConfig, ds, out: Path, stage):
    stage("cluster")
    dist = dataset_distances(ds)
    selection = None
    m, G = cfg.m, cfg.G
    if m is None or G is None:
        selection = select_for(ds, cfg, dist)
        m, G = selection.m, selection.G
        _write_csv(out / "silhouette.csv", ("m", "G", "mean_silhouette"), _surface_rows(selection))
    links = build_knn_links(ds.coords, m)
    dend = cahc_fit(dist, links, cfg.linkage)
    initial = cut_partition(dend, G)
    sil = spatial_silhouette(dist, links, initial)
    return m, G, initial, sil, selection


def cmd_cluster(args, stage) -> int:
    cfg = config_from_args(args)
    out = _outdir(cfg.out)
    stage("load")
    ds = load_input(cfg)
    m, G, initial, sil, _ = _cluster_stage(cfg, ds, out, stage)
    stage("write")
    save_partition(initial, None, out / "initial.json")
    write_manifest(out, cfg, m=m, G=G, mean_silhouette=sil.mean)
    return 0


def cmd_test(args, stage) -> int:
    cfg = config_from_args(args)
    out = _outdir(cfg.out)
    stage("load")
    ds = load_input(cfg)
    partition, _ = load_partition(args.partition)
    stage("test")
    m = cfg.m if cfg.m is not None else 8
    tests = test_all_pairs(
        ds, partition, cfg.kernel_spec(ds.attr_kind), m, cfg.B, cfg.q, cfg.seed, threads=cfg.threads
    )
    stage("write")
    _write_csv(out / "tests.csv", TESTS_HEADER, _tests_rows(tests))
    save_partition(partition, tests, out / "tested.json")
    write_manifest(out, replace(cfg, m=m), partition=str(args.partition))
    return 0


def cmd_reassign(args, stage) -> int:
    out = _outdir(args.out)
    stage("load")
    partition, tests = load_partition(args.partition)
    stage("reassign")
    graph = build_similarity_graph(tests, partition.G)
    final = reassign_labels(graph, partition, args.mode)
    stage("write")
    _write_text(out / "similarity.dot", graph.to_dot())
    save_partition(final, tests, out / "final.json")
    return 0


def cmd_pipeline(args, stage) -> int:
    if args.config:
        cfg = read_manifest(args.config)
        cfg = replace(cfg, out=str(args.out), threads=resolve_threads(args.threads))
    else:
        cfg = config_from_args(args)
    out = _outdir(cfg.out)
    stage("load")
    ds = load_input(cfg)
    if cfg.preset:
        write_dataset(ds, out / "data.csv")
    m, G, initial, sil, selection = _cluster_stage(cfg, ds, out, stage)
    stage("test")
    tests = test_all_pairs(
        ds, initial, cfg.kernel_spec(ds.attr_kind), m, cfg.B, cfg.q, cfg.seed, threads=cfg.threads
    )
    stage("reassign")
    graph = build_similarity_graph(tests, initial.G)
    final = reassign_labels(graph, initial, cfg.mode)
    stage("write")
    save_partition(initial, None, out / "initial.json")
    _write_csv(out / "tests.csv", TESTS_HEADER, _tests_rows(tests))
    _write_text(out / "similarity.dot", graph.to_dot())
    save_partition(final, tests, out / "final.json")
    write_manifest(
        out, cfg, m=m, G=G, mean_silhouette=sil.mean, final_G=final.G,
        selected=selection is not None,
    )
    return 0


EVAL_COLUMNS = (
    "setting", "noise_features", "runs", "m", "G",
    "fpr_median", "fpr_iqr", "fnr_median", "fnr_iqr", "f1_median", "f1_iqr", "pct_f1_below_1",
    "ari_median", "ari_iqr", "pct_ari_below_1",
)
RUN_COLUMNS = ("setting", "run", "seed", "G", "n_pairs", "n_diff_pairs", "fpr", "fnr", "precision", "recall", "f1", "ari", "final_G")


def cmd_eval(args, stage) -> int:
    cfg = config_from_args(args)
    out = _outdir(cfg.out)
    names = args.presets or ["paper-2500-5-03"]
    unknown = [n for n in names if n not in PRESETS]
    if unknown:
        raise UsageError(f"unknown presets {unknown}; choose from {sorted(PRESETS)}")
    if args.runs < 1:
        raise UsageError("--runs must be at least 1")
    stage("simulate")
    settings = [(n, preset(n, cfg.noise_features)) for n in names]
    progress = None
    if args.verbose:
        def progress(label, r, rec):
            print(f"{label} run {r}: f1={rec.f1:.3f} ari={rec.ari:.3f}", file=sys.stderr)
    stage("eval")
    reports = run_benchmark(settings, args.runs, cfg.seed, cfg, progress=progress)
    stage("write")
    rows, runs = [], []
    for rep in reports:
        s = dict(rep.summary(), noise_features=cfg.noise_features)
        rows.append([s[c] for c in EVAL_COLUMNS])
        runs += [[rep.label] + [getattr(r, c) for c in RUN_COLUMNS[1:]] for r in rep.runs]
    _write_csv(out / "eval.csv", EVAL_COLUMNS, rows)
    _write_csv(out / "eval_runs.csv", RUN_COLUMNS, runs)
    write_manifest(out, cfg, presets=names, runs=args.runs)
    return 0


def cmd_mmd_dist(args, stage) -> int:
    out = _outdir(args.out)
    stage("simulate")
    sc = preset(args.preset, args.noise_features)
    specs = [(args.kernel, c) for c in args.kernel_params]
    rows = mmd_sampling_distribution(sc, specs, args.replicates, args.seed)
    stage("write")
    keys = ("replicate", "kernel", "param", "pair", "kind", "mmd2")
    _write_csv(out / "mmd_dist.csv", keys, [[r[k] for k in keys] for r in rows])
    med = sampling_medians(rows)
    _write_csv(out / "mmd_medians.csv", ("kernel", "param", "kind", "median_mmd2"), [(*k, v) for k, v in sorted(med.items())])
    return 0


# --------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="repspat", description="Detect repeated spatial patterns in attributed point data.")
    ap.add_argument("--version", action="version", version=f"repspat {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="draw one dataset from a CAR scenario")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--scenario", help="scenario JSON (overrides --preset)")
    p.add_argument("--placement", choices=PLACEMENTS)
    p.add_argument("--noise-features", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--scenario-out", help="also write the scenario JSON here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("cluster", help="select (m, G) and cut the constrained dendrogram")
    _add_data_flags(p)
    _add_cluster_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("test", help="block-permutation MMD test for every cluster pair")
    _add_data_flags(p)
    p.add_argument("--partition", required=True, help="partition JSON from `cluster`")
    p.add_argument("--m", type=int, help="block size (default 8)")
    _add_test_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("reassign", help="merge clusters whose tests did not reject")
    p.add_argument("--partition", required=True, help="partition JSON carrying test results")
    p.add_argument("--mode", choices=["components", "cliques"], default="components")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reassign)

    p = sub.add_parser("pipeline", help="cluster, test and reassign in one run")
    _add_data_flags(p)
    _add_cluster_flags(p)
    _add_test_flags(p)
    p.add_argument("--mode", choices=["components", "cliques"], default="components")
    p.add_argument("--config", help="re-run from a manifest written by an earlier run")
    _add_common(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("eval", help="repeat simulate + pipeline and summarise error rates")
    p.add_argument("--presets", nargs="+", metavar="PRESET", help=f"from {sorted(PRESETS)}")
    p.add_argument("--runs", type=int, default=20)
    p.add_argument("--noise-features", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--verbose", action="store_true")
    _add_cluster_flags(p)
    _add_test_flags(p)
    p.add_argument("--mode", choices=["components", "cliques"], default="components")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("mmd-dist", help="MMD^2 between true patches over repeated draws")
    p.add_argument("--preset", choices=sorted(PRESETS), default="paper-2500-5-08")
    p.add_argument("--noise-features", type=int, default=0)
    p.add_argument("--kernel", choices=["imq", "gaussian", "laplacian"], default="imq")
    p.add_argument("--kernel-params", type=_float_list, default=(0.5, 1.0, 1.5))
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mmd_dist)
    return ap


def _report(stage: str, exc: BaseException, code: int) -> None:
    doc = {"stage": stage, "error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(doc), file=sys.stderr)


def main(argv=None) -> int:
    stage = _Stage()
    try:
        args = build_parser().parse_args(argv)
        return args.func(args, stage)
    except RepSpatError as exc:
        _report(stage.name, exc, exc.exit_code)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001
        wrapped = InternalInconsistency(f"{type(exc).__name__}: {exc}")
        _report(stage.name, wrapped, wrapped.exit_code)
        return wrapped.exit_code


if __name__ == "__main__":
    sys.exit(main())
