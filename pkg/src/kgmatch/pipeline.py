"""Run configuration, stage functions and the results tree.

Layout of a run directory::

    config.json                 resolved configuration
    manifest.json               versions, timings, checksums, cell status (only file with timestamps)
    input/graph.nt              input graph (copied or generated)
    input/ledger.json           generator ground truth, when the graph is synthetic
    input/s_nodes.txt           match candidates, one IRI per line
    input/links.json            alignment links stripped from the graph
    graphs/<g>.nt               saturated, 3-hop reduced variant
    graphs/<g>.report.json      saturation report and representative map of S nodes
    gold/<c>.json               gold clustering with fold assignment
    cells/<c>_<g>_f<k>/         checkpoint, embeddings, history, assignments, metrics, distances
    report/metrics.csv|json     cross-validated tables with best-flags
"""
from __future__ import annotations

import configparser
import contextlib
import csv
import hashlib
import importlib.metadata
import json
import logging
import os
import platform
import re
import shutil
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .alignment import (
    GOLD_CLUSTERINGS,
    AlignmentLink,
    GoldClustering,
    assign_folds,
    compute_gold_clustering,
    filter_min_size,
    folds_from_assignment,
    load_gold,
    save_gold,
    strip_alignments,
)
from .clustering import ALGORITHMS, DEFAULT_XI, run_algorithm, write_assignment_csv
from .evaluation import (
    METRICS,
    NMI_MEANS,
    cross_validated_report,
    distance_analysis,
    score,
    write_distances_csv,
)
from .graph import KnowledgeGraph, graph_stats, parse_ntriples, serialize_ntriples
from .model import GcnConfig, save_checkpoint, write_embeddings_csv
from .saturation import VARIANTS, build_variant, reduce_to_khop
from .synthgen import S_PATTERN, SynthConfig, generate
from .training import TrainConfig, train, write_history_csv

log = logging.getLogger(__name__)

THRESHOLDS = (10, 20, 50)
VARIANT_TAGS = tuple(sorted(t.lower() for t in VARIANTS))
CLUSTERING_TAGS = tuple(sorted(t.lower() for t in GOLD_CLUSTERINGS))


class ConfigError(ValueError):
    pass


# -- configuration ---------------------------------------------------------------

def _list(value: str) -> list[str]:
    return [x.strip() for x in value.replace("\n", ",").split(",") if x.strip()]


@dataclass
class RunConfig:
    input: str | None = None
    synth: SynthConfig | None = None
    s_pattern: str | None = S_PATTERN
    s_list: str | None = None
    variants: list[str] = field(default_factory=lambda: ["g0", "g5"])
    clusterings: list[str] = field(default_factory=lambda: ["c0"])
    thresholds: list[int] = field(default_factory=lambda: [10])
    algorithms: list[str] = field(default_factory=lambda: list(ALGORITHMS))
    gcn: GcnConfig = field(default_factory=GcnConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    hops: int = 3
    xi: float = DEFAULT_XI
    nmi_mean: str = "arithmetic"
    seed: int = 0
    out: str | None = None

    def validate(self) -> None:
        if self.input is None and self.synth is None:
            raise ConfigError("give either an input graph or a [synthgen] section")
        if self.input is not None and self.synth is not None:
            raise ConfigError("input graph and [synthgen] section are mutually exclusive")
        if (self.s_pattern is None) == (self.s_list is None):
            raise ConfigError("give exactly one of s_pattern and s_list")
        if self.s_pattern is not None:
            try:
                re.compile(self.s_pattern)
            except re.error as exc:
                raise ConfigError(f"bad s_pattern: {exc}") from None
        for name, values, allowed in (("variants", self.variants, VARIANT_TAGS),
                                      ("clusterings", self.clusterings, CLUSTERING_TAGS),
                                      ("thresholds", self.thresholds, THRESHOLDS),
                                      ("algorithms", self.algorithms, ALGORITHMS)):
            if not values:
                raise ConfigError(f"at least one entry required in {name}")
            bad = [v for v in values if v not in allowed]
            if bad:
                raise ConfigError(f"unknown {name}: {bad}; allowed {sorted(allowed)}")
            if len(set(values)) != len(values):
                raise ConfigError(f"duplicate entries in {name}")
        if self.hops < 0:
            raise ConfigError("hops must be non-negative")
        if not 0 < self.xi < 1:
            raise ConfigError("xi must lie in (0, 1)")
        if self.nmi_mean not in NMI_MEANS:
            raise ConfigError(f"nmi_mean must be one of {sorted(NMI_MEANS)}")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("input", "s_pattern", "s_list", "variants", "clusterings",
                                            "thresholds", "algorithms", "hops", "xi", "nmi_mean", "seed")}
        d["synthgen"] = self.synth.to_dict() if self.synth else None
        d["gcn"] = self.gcn.to_dict()
        d["train"] = asdict(self.train)
        return d


def _parse_value(raw: str, like):
    if isinstance(like, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(raw)
    if isinstance(like, float):
        return float(raw)
    return raw.strip()


def load_config(path=None, text: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Read an INI run configuration; see README for the schema."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    try:
        if path is not None:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        if text is not None:
            cp.read_string(text)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read configuration: {exc}") from None
    known = {"run", "synthgen", "gcn", "train", "clustering", "evaluation"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")
    cfg = RunConfig()
    try:
        run = cp["run"] if cp.has_section("run") else {}
        base = Path(path).parent if path is not None else Path(".")
        for key, raw in run.items():
            if key in ("variants", "clusterings", "algorithms"):
                setattr(cfg, key, [v.lower() for v in _list(raw)])
            elif key == "thresholds":
                cfg.thresholds = [int(v) for v in _list(raw)]
            elif key in ("input", "s_list"):
                setattr(cfg, key, str(base / raw.strip()) if raw.strip() else None)
            elif key == "s_pattern":
                cfg.s_pattern = raw.strip() or None
            elif key in ("seed", "hops"):
                setattr(cfg, key, int(raw))
            elif key == "out":
                cfg.out = str(base / raw.strip())
            else:
                raise ConfigError(f"unknown key [run] {key}")
        if cfg.s_list is not None and "s_pattern" not in run:
            cfg.s_pattern = None
        if cp.has_section("synthgen"):
            defaults = SynthConfig()
            kw = {}
            for key, raw in cp["synthgen"].items():
                if key == "cluster_size_range":
                    lo, hi = (int(v) for v in _list(raw))
                    kw[key] = (lo, hi)
                elif key == "relation_mix":
                    kw[key] = {k.strip(): float(v) for k, v in
                               (item.split(":") for item in _list(raw))}
                elif hasattr(defaults, key):
                    kw[key] = _parse_value(raw, getattr(defaults, key))
                else:
                    raise ConfigError(f"unknown key [synthgen] {key}")
            cfg.synth = SynthConfig(**kw)
        if cp.has_section("gcn"):
            g = cp["gcn"]
            d = cfg.gcn.to_dict()
            for key, raw in g.items():
                if key == "hidden_dims":
                    d[key] = [int(v) for v in _list(raw)]
                elif key == "activations":
                    d[key] = _list(raw)
                elif key == "num_bases":
                    d[key] = int(raw)
                elif key == "normalization":
                    d[key] = raw.strip()
                else:
                    raise ConfigError(f"unknown key [gcn] {key}")
            cfg.gcn = GcnConfig.from_dict(d)
        if cp.has_section("train"):
            d = asdict(cfg.train)
            for key, raw in cp["train"].items():
                if key not in d:
                    raise ConfigError(f"unknown key [train] {key}")
                d[key] = _parse_value(raw, d[key])
            cfg.train = TrainConfig(**d)
        if cp.has_section("clustering"):
            for key, raw in cp["clustering"].items():
                if key != "xi":
                    raise ConfigError(f"unknown key [clustering] {key}")
                cfg.xi = float(raw)
        if cp.has_section("evaluation"):
            for key, raw in cp["evaluation"].items():
                if key != "nmi_mean":
                    raise ConfigError(f"unknown key [evaluation] {key}")
                cfg.nmi_mean = raw.strip()
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, key, value)
    if cfg.synth is not None and "seed" not in (cp["synthgen"] if cp.has_section("synthgen") else {}):
        cfg.synth.seed = cfg.seed
    cfg.train.seed = cfg.seed
    cfg.validate()
    return cfg


# -- file helpers ----------------------------------------------------------------

@contextlib.contextmanager
def atomic_path(path):
    """Yield a temporary sibling path; it replaces ``path`` only if the block succeeds."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def write_text(path, text: str) -> None:
    with atomic_path(path) as tmp:
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def write_json(path, obj) -> None:
    write_text(path, json.dumps(obj, indent=1, sort_keys=True) + "\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def tree_checksums(root, exclude=("manifest.json",)) -> dict[str, str]:
    root = Path(root)
    out = {}
    for p in sorted(root.rglob("*")):
        rel = p.relative_to(root).as_posix()
        if p.is_file() and rel not in exclude and not p.name.startswith("."):
            out[rel] = sha256_file(p)
    return out


# -- stages ----------------------------------------------------------------------

def select_s_nodes(g: KnowledgeGraph, pattern: str | None = None, listing: list[str] | None = None) -> list[str]:
    if listing is not None:
        missing = [n for n in listing if not g.has_node(n)]
        if missing:
            raise ConfigError(f"{len(missing)} listed match candidates are not in the graph, e.g. {missing[0]}")
        return sorted(set(listing))
    rx = re.compile(pattern)
    return sorted(n for n in g.nodes if rx.search(n))


def stage_input(cfg: RunConfig, run_dir: Path) -> tuple[KnowledgeGraph, list[str], list[AlignmentLink]]:
    """Materialize input/ and return the alignment-stripped graph, S and the links."""
    inp = run_dir / "input"
    if cfg.synth is not None:
        text, ledger = generate(cfg.synth)
        write_text(inp / "graph.nt", text)
        write_text(inp / "ledger.json", ledger.dumps())
    elif Path(cfg.input).resolve() != (inp / "graph.nt").resolve():
        inp.mkdir(parents=True, exist_ok=True)
        with atomic_path(inp / "graph.nt") as tmp:
            shutil.copyfile(cfg.input, tmp)
    with open(inp / "graph.nt", "rb") as fh:
        g = parse_ntriples(fh)
    listing = None
    if cfg.s_list is not None:
        with open(cfg.s_list, encoding="utf-8") as fh:
            listing = [line.strip() for line in fh if line.strip()]
    s_nodes = select_s_nodes(g, cfg.s_pattern, listing)
    if not s_nodes:
        raise ConfigError("the S-selection rule matched no node")
    stripped, links = strip_alignments(g, s_nodes)
    write_text(inp / "s_nodes.txt", "".join(n + "\n" for n in s_nodes))
    write_json(inp / "links.json", [link.to_dict() for link in links])
    return stripped, s_nodes, links


def saturate(stripped: KnowledgeGraph, s_nodes, variant: str, hops: int = 3):
    """Saturate, reduce to ``hops`` around S; returns (graph, report dict, S representative map)."""
    gv, report, rep_map = build_variant(stripped, variant)
    reps = {n: rep_map[n] for n in s_nodes}
    reduced = reduce_to_khop(gv, sorted({gv.node_id(r) for r in reps.values()}), hops)
    d = report.to_dict()
    d["reduced"] = graph_stats(reduced)
    d["hops"] = hops
    d["s_representatives"] = dict(sorted(reps.items()))
    return reduced, d, reps


def stage_saturate(stripped, s_nodes, variant: str, hops: int, run_dir: Path) -> dict:
    reduced, report, _ = saturate(stripped, s_nodes, variant, hops)
    write_text(run_dir / "graphs" / f"{variant}.nt", serialize_ntriples(reduced))
    write_json(run_dir / "graphs" / f"{variant}.report.json", report)
    return report


def stage_gold(links, s_nodes, clustering: str, seed: int, run_dir: Path) -> GoldClustering:
    gold = compute_gold_clustering(links, clustering, s_nodes)
    path = run_dir / "gold" / f"{clustering}.json"
    with atomic_path(path) as tmp:
        save_gold(tmp, gold, assign_folds(gold, seed), seed)
    return gold


def load_variant(graph_path, s_representatives: dict[str, str]) -> KnowledgeGraph:
    """Parse a variant; S representatives without any triple are added as isolated nodes."""
    with open(graph_path, "rb") as fh:
        g = parse_ntriples(fh)
    for rep in sorted(set(s_representatives.values())):
        g.add_node(rep)
    return g


def project_gold(gold: GoldClustering, reps: dict[str, str]) -> GoldClustering:
    """Rename gold nodes to their graph representatives; merged nodes must agree on the label."""
    labels: dict[str, int] = {}
    for n, lab in sorted(gold.labels.items()):
        r = reps.get(n, n)
        if labels.setdefault(r, lab) != lab:
            raise ValueError(f"{r} represents nodes from different gold clusters")
    return GoldClustering(gold.id, gold.relations, labels)


def project_nodes(nodes, reps: dict[str, str]) -> set[str]:
    return {reps.get(n, n) for n in nodes}


def cell_name(clustering: str, variant: str, fold: int) -> str:
    return f"{clustering}_{variant}_f{fold}"


def _cell_key(run_dir: Path, cfg_dict: dict, clustering: str, variant: str, fold: int) -> str:
    h = hashlib.sha256()
    for rel in (f"graphs/{variant}.nt", f"graphs/{variant}.report.json", f"gold/{clustering}.json",
                "input/links.json"):
        h.update(rel.encode())
        h.update(sha256_file(run_dir / rel).encode())
    relevant = {k: cfg_dict[k] for k in ("gcn", "train", "thresholds", "algorithms", "xi", "nmi_mean", "seed")}
    h.update(json.dumps([relevant, clustering, variant, fold], sort_keys=True).encode())
    return h.hexdigest()


def cell_is_valid(cell_dir: Path, key: str) -> bool:
    marker = cell_dir / "cell.json"
    if not marker.exists():
        return False
    try:
        meta = read_json(marker)
        if meta.get("key") != key or meta.get("status") != "ok":
            return False
        return all((cell_dir / rel).exists() and sha256_file(cell_dir / rel) == digest
                   for rel, digest in meta["files"].items())
    except (OSError, ValueError, KeyError):
        return False


def evaluate_embeddings(emb: dict[str, np.ndarray], gold: GoldClustering, test_nodes,
                        thresholds, algorithms, xi: float = DEFAULT_XI, nmi_mean: str = "arithmetic",
                        assignment_dir: Path | None = None) -> list[dict]:
    """Cluster test nodes of gold clusters >= each threshold with every algorithm and score them."""
    results = []
    for t in thresholds:
        eligible = filter_min_size(gold, t)
        nodes = sorted(n for n in test_nodes if n in eligible)
        for alg in algorithms:
            row = {"threshold": t, "algorithm": alg, "num_nodes": len(nodes)}
            if not nodes:
                row.update(status="empty", parameter=None)
                results.append(row)
                continue
            gold_labels = [gold.labels[n] for n in nodes]
            k = len(set(gold_labels))
            parameter = t if alg == "optics" else k
            points = np.stack([emb[n] for n in nodes])
            assignment = run_algorithm(alg, points, parameter, nodes, xi)
            row.update(status="ok", parameter=parameter, num_gold_clusters=k,
                       num_predicted_clusters=assignment.num_clusters,
                       **score(assignment.labels, gold_labels, nmi_mean))
            if assignment.meta:
                row["meta"] = assignment.meta
            if assignment_dir is not None:
                with atomic_path(assignment_dir / f"{alg}_t{t}.csv") as tmp:
                    write_assignment_csv(tmp, assignment)
            results.append(row)
    return results


def prepare_cell(run_dir, clustering: str, variant: str, fold: int):
    """Load the training inputs of one cell.

    Returns (graph, gold on graph nodes, split on graph nodes, gold on S, split on S,
    S representative map).
    """
    run_dir = Path(run_dir)
    report = read_json(run_dir / "graphs" / f"{variant}.report.json")
    reps = report["s_representatives"]
    g = load_variant(run_dir / "graphs" / f"{variant}.nt", reps)
    gold, fold_of = load_gold(run_dir / "gold" / f"{clustering}.json")
    split = folds_from_assignment(fold_of)[fold - 1]
    ggold = project_gold(gold, reps)
    gsplit = type(split)(fold, project_nodes(split.train, reps), project_nodes(split.val, reps),
                         project_nodes(split.test, reps))
    return g, ggold, gsplit, gold, split, reps


def run_cell(run_dir, cfg_dict: dict, clustering: str, variant: str, fold: int) -> dict:
    """Train, embed, cluster, evaluate and measure distances for one (clustering, variant, fold)."""
    run_dir = Path(run_dir)
    cell_dir = run_dir / "cells" / cell_name(clustering, variant, fold)
    key = _cell_key(run_dir, cfg_dict, clustering, variant, fold)
    if cell_is_valid(cell_dir, key):
        return {"cell": cell_dir.name, "status": "reused"}
    if cell_dir.exists():
        shutil.rmtree(cell_dir)
    cell_dir.mkdir(parents=True)

    g, ggold, gsplit, gold, split, reps = prepare_cell(run_dir, clustering, variant, fold)
    gcn_cfg = GcnConfig.from_dict(cfg_dict["gcn"])
    train_cfg = TrainConfig(**cfg_dict["train"])

    result = train(g, ggold, gsplit, gcn_cfg, train_cfg)
    with atomic_path(cell_dir / "checkpoint.json") as tmp:
        save_checkpoint(tmp, result.params, gcn_cfg, train_cfg.seed,
                        {"rho": result.rho, "best_epoch": result.best_epoch})
    s_nodes = sorted(reps)
    emb = {n: result.embeddings[g.node_id(reps[n])] for n in s_nodes}
    with atomic_path(cell_dir / "embeddings.csv") as tmp:
        write_embeddings_csv(tmp, s_nodes, np.stack([emb[n] for n in s_nodes]))
    with atomic_path(cell_dir / "history.csv") as tmp:
        write_history_csv(tmp, result.history)

    metrics = evaluate_embeddings(emb, gold, split.test, cfg_dict["thresholds"], cfg_dict["algorithms"],
                                  cfg_dict["xi"], cfg_dict["nmi_mean"], cell_dir / "assignments")
    links = [AlignmentLink.from_dict(d) for d in read_json(run_dir / "input" / "links.json")]
    dists = distance_analysis(emb, links, split.test)
    with atomic_path(cell_dir / "distances.csv") as tmp:
        write_distances_csv(tmp, dists, fold)
    write_json(cell_dir / "metrics.json", {
        "clustering": clustering, "variant": variant, "fold": fold,
        "training": {"epochs": len(result.history), "best_epoch": result.best_epoch,
                     "stopped_early": result.stopped_early, "rho": result.rho,
                     "final_rho": result.last_rho},
        "results": metrics,
        "distances": {rel.value: d.summary for rel, d in dists.items()},
    })
    files = {p.relative_to(cell_dir).as_posix(): sha256_file(p)
             for p in sorted(cell_dir.rglob("*")) if p.is_file() and p.name != "cell.json"}
    write_json(cell_dir / "cell.json", {"key": key, "status": "ok", "files": files})
    return {"cell": cell_dir.name, "status": "computed"}


def _run_cell_safe(args) -> dict:
    run_dir, cfg_dict, c, v, k = args
    t0 = time.perf_counter()
    try:
        out = run_cell(run_dir, cfg_dict, c, v, k)
    except Exception as exc:  # noqa: BLE001 - a failing cell must not stop the others
        log.exception("cell %s failed", cell_name(c, v, k))
        out = {"cell": cell_name(c, v, k), "status": "failed", "error": f"{type(exc).__name__}: {exc}"}
    out["seconds"] = round(time.perf_counter() - t0, 3)
    return out


# -- report ----------------------------------------------------------------------

REPORT_COLUMNS = ["clustering", "variant", "threshold", "algorithm", "metric", "mean", "std", "formatted",
                  "fold1", "fold2", "fold3", "fold4", "fold5", "best_algorithm", "best_variant"]


def _flag_best(rows, column, group_key, item_key, order):
    """Mark the row with the highest mean in each group; ties go to the earliest item in ``order``."""
    groups: dict = {}
    for row in rows:
        groups.setdefault(group_key(row), []).append(row)
    for members in groups.values():
        best = max(members, key=lambda r: (r["mean"], -order.index(item_key(r))))
        for r in members:
            r[column] = r is best


def build_report(run_dir) -> dict:
    """Consolidate per-fold cell metrics into cross-validated rows with best-flags."""
    run_dir = Path(run_dir)
    per_fold: dict = {}
    incomplete = []
    for metrics_path in sorted((run_dir / "cells").glob("*/metrics.json")):
        cell = read_json(metrics_path)
        for res in cell["results"]:
            if res["status"] != "ok":
                continue
            key = (cell["clustering"], cell["variant"], res["threshold"], res["algorithm"])
            per_fold.setdefault(key, {})[cell["fold"]] = {m: res[m] for m in METRICS}
    if not per_fold:
        raise FileNotFoundError(f"no completed cells under {run_dir / 'cells'}")
    rows = []
    for key in sorted(per_fold, key=lambda k: (k[0], k[1], k[2], ALGORITHMS.index(k[3]))):
        folds = per_fold[key]
        if sorted(folds) != [1, 2, 3, 4, 5]:
            incomplete.append({"clustering": key[0], "variant": key[1], "threshold": key[2],
                               "algorithm": key[3], "folds": sorted(folds)})
            continue
        rep = cross_validated_report([folds[k] for k in range(1, 6)])
        for metric in METRICS:
            rows.append({"clustering": key[0], "variant": key[1], "threshold": key[2], "algorithm": key[3],
                         "metric": metric, "mean": rep.mean[metric], "std": rep.std[metric],
                         "formatted": rep.formatted(metric),
                         **{f"fold{k}": rep.per_fold[metric][k - 1] for k in range(1, 6)}})
    if not rows:
        raise FileNotFoundError("no clustering configuration was completed on all five folds")
    variant_order = sorted({r["variant"] for r in rows})
    _flag_best(rows, "best_algorithm", lambda r: (r["clustering"], r["variant"], r["threshold"], r["metric"]),
               lambda r: r["algorithm"], list(ALGORITHMS))
    _flag_best(rows, "best_variant", lambda r: (r["clustering"], r["threshold"], r["algorithm"], r["metric"]),
               lambda r: r["variant"], variant_order)
    report = {"rows": rows, "incomplete": incomplete}
    with atomic_path(run_dir / "report" / "metrics.csv") as tmp:
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            w = csv.DictWriter(fh, REPORT_COLUMNS, lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    write_json(run_dir / "report" / "metrics.json", report)
    return report


# -- orchestration ---------------------------------------------------------------

def versions() -> dict[str, str]:
    out = {"python": platform.python_version()}
    for dist in ("artifact", "numpy", "scipy", "scikit-learn"):
        try:
            out[dist] = importlib.metadata.version(dist)
        except importlib.metadata.PackageNotFoundError:
            out[dist] = "unknown"
    return out


def planned_cells(cfg: RunConfig) -> list[tuple[str, str, int]]:
    return [(c, v, k) for c in cfg.clusterings for v in cfg.variants for k in range(1, 6)]


@dataclass
class PipelineOutcome:
    run_dir: Path
    manifest: dict

    @property
    def failed(self) -> list[dict]:
        return [c for c in self.manifest["cells"] if c["status"] == "failed"]

    @property
    def exit_code(self) -> int:
        return 2 if self.failed or self.manifest.get("stage_errors") else 0


def run_pipeline(cfg: RunConfig, run_dir, jobs: int = 1, dry_run: bool = False) -> PipelineOutcome:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    cfg_dict = cfg.to_dict()
    cells = planned_cells(cfg)
    manifest = {"started": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "config": cfg_dict,
                "versions": versions(), "dry_run": dry_run, "timings": {}, "stage_errors": {},
                "cells": [{"cell": cell_name(*c), "status": "planned"} for c in cells]}
    if dry_run:
        write_json(run_dir / "manifest.json", manifest)
        return PipelineOutcome(run_dir, manifest)
    write_json(run_dir / "config.json", cfg_dict)

    t0 = time.perf_counter()
    stripped, s_nodes, links = stage_input(cfg, run_dir)
    manifest["timings"]["input"] = time.perf_counter() - t0

    ok_variants = []
    for v in cfg.variants:
        t0 = time.perf_counter()
        try:
            stage_saturate(stripped, s_nodes, v, cfg.hops, run_dir)
            ok_variants.append(v)
        except Exception as exc:  # noqa: BLE001
            manifest["stage_errors"][f"saturate:{v}"] = f"{type(exc).__name__}: {exc}"
        manifest["timings"][f"saturate:{v}"] = time.perf_counter() - t0
    for c in cfg.clusterings:
        t0 = time.perf_counter()
        stage_gold(links, s_nodes, c, cfg.seed, run_dir)
        manifest["timings"][f"gold:{c}"] = time.perf_counter() - t0

    todo = [(str(run_dir), cfg_dict, c, v, k) for c, v, k in cells if v in ok_variants]
    skipped = [{"cell": cell_name(c, v, k), "status": "failed", "error": f"variant {v} unavailable"}
               for c, v, k in cells if v not in ok_variants]
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_run_cell_safe, todo))
    else:
        done = [_run_cell_safe(a) for a in todo]
    by_name = {d["cell"]: d for d in done + skipped}
    manifest["cells"] = [by_name[cell_name(*c)] for c in cells]
    for d in done:
        manifest["timings"][f"cell:{d['cell']}"] = d.pop("seconds")

    t0 = time.perf_counter()
    try:
        build_report(run_dir)
    except FileNotFoundError as exc:
        manifest["stage_errors"]["report"] = str(exc)
    manifest["timings"]["report"] = time.perf_counter() - t0
    manifest["checksums"] = tree_checksums(run_dir)
    manifest["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    write_json(run_dir / "manifest.json", manifest)
    return PipelineOutcome(run_dir, manifest)
