"""Command-line entry point: ``kgmatch <subcommand> ...``.

Exit codes: 0 success, 1 configuration or usage error, 2 partial failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .alignment import AlignmentLink, folds_from_assignment, load_gold, strip_alignments
from .clustering import ALGORITHMS, DEFAULT_XI, run_algorithm, write_assignment_csv
from .evaluation import distance_analysis, score, write_distances_csv
from .graph import NTriplesError, read_ntriples
from .model import read_embeddings_csv
from .pipeline import (
    CLUSTERING_TAGS,
    VARIANT_TAGS,
    ConfigError,
    RunConfig,
    atomic_path,
    build_report,
    load_config,
    run_cell,
    run_pipeline,
    select_s_nodes,
    stage_gold,
    stage_saturate,
    write_json,
    write_text,
)
from .saturation import SaturationConflict
from .synthgen import S_PATTERN, InfeasibleConfig, SynthConfig, generate
from .training import ConfigurationError

log = logging.getLogger("kgmatch")


def _common(p: argparse.ArgumentParser, top: bool) -> None:
    default = None if top else argparse.SUPPRESS
    p.add_argument("--seed", type=int, default=default, help="global random seed")
    p.add_argument("--out", default=default, help="output / run directory")
    p.add_argument("--dry-run", action="store_true", default=False if top else argparse.SUPPRESS,
                   help="plan only, compute nothing")
    p.add_argument("--jobs", type=int, default=1 if top else argparse.SUPPRESS,
                   help="worker processes for independent cells")


def _out(args, default: str = ".") -> Path:
    return Path(args.out if args.out else default)


def _s_nodes(g, args) -> list[str]:
    if getattr(args, "s_list", None):
        with open(args.s_list, encoding="utf-8") as fh:
            return select_s_nodes(g, listing=[line.strip() for line in fh if line.strip()])
    return select_s_nodes(g, args.s_pattern)


def cmd_synthgen(args) -> int:
    cfg = load_config(args.config) if args.config else None
    synth = cfg.synth if cfg is not None and cfg.synth is not None else SynthConfig()
    if args.seed is not None:
        synth.seed = args.seed
    out = _out(args)
    if args.dry_run:
        print(json.dumps(synth.to_dict(), sort_keys=True))
        return 0
    text, ledger = generate(synth)
    write_text(out / "graph.nt", text)
    write_text(out / "ledger.json", ledger.dumps())
    print(f"wrote {out / 'graph.nt'} ({text.count(chr(10))} triples) and {out / 'ledger.json'}")
    return 0


def _stripped_input(args):
    g = read_ntriples(args.input)
    s_nodes = _s_nodes(g, args)
    if not s_nodes:
        raise ConfigError("the S-selection rule matched no node")
    stripped, links = strip_alignments(g, s_nodes)
    return stripped, s_nodes, links


def cmd_saturate(args) -> int:
    out = _out(args)
    stripped, s_nodes, _ = _stripped_input(args)
    variants = args.variant or list(VARIANT_TAGS)
    if args.dry_run:
        print("would build " + ", ".join(variants))
        return 0
    status = 0
    for v in variants:
        try:
            rep = stage_saturate(stripped, s_nodes, v, args.hops, out)
        except SaturationConflict as exc:
            log.error("%s: %s", v, exc)
            status = 2
            continue
        print(f"{v}: {rep['before']} -> {rep['after']}, reduced {rep['reduced']}")
    return status


def cmd_gold(args) -> int:
    out = _out(args)
    _, s_nodes, links = _stripped_input(args)
    seed = 0 if args.seed is None else args.seed
    write_json(out / "links.json", [link.to_dict() for link in links])
    for c in args.clustering or ["c0"]:
        gold = stage_gold(links, s_nodes, c, seed, out)
        sizes = sorted(gold.sizes.values(), reverse=True)
        print(f"{c}: {len(sizes)} clusters, largest {sizes[:5]}")
    return 0


def _cfg_dict(args) -> dict:
    cfg = load_config(args.config, overrides={"seed": args.seed}) if args.config else None
    if cfg is None:
        cfg = RunConfig(input="-", seed=args.seed or 0)
        cfg.train.seed = cfg.seed
    return cfg.to_dict()


def cmd_train(args) -> int:
    """Run one cell inside an existing run directory (graphs/, gold/ and input/links.json present)."""
    run_dir = _out(args)
    cfg = _cfg_dict(args)
    if args.dry_run:
        print(f"would train {args.clustering}_{args.variant}_f{args.fold} in {run_dir}")
        return 0
    res = run_cell(run_dir, cfg, args.clustering, args.variant, args.fold)
    print(json.dumps(res))
    return 0


def cmd_cluster(args) -> int:
    nodes, emb = read_embeddings_csv(args.embeddings)
    gold, fold_of = load_gold(args.gold)
    test = folds_from_assignment(fold_of)[args.fold - 1].test
    sizes = gold.sizes
    keep = [i for i, n in enumerate(nodes) if n in test and sizes[gold.labels[n]] >= args.threshold]
    if not keep:
        raise ConfigError("no test node in a gold cluster of the requested size")
    sel = [nodes[i] for i in keep]
    k = len({gold.labels[n] for n in sel})
    parameter = args.threshold if args.algorithm == "optics" else k
    assignment = run_algorithm(args.algorithm, emb[keep], parameter, sel, args.xi)
    out = _out(args) / f"{args.algorithm}_t{args.threshold}.csv"
    if args.dry_run:
        print(f"would write {out}")
        return 0
    with atomic_path(out) as tmp:
        write_assignment_csv(tmp, assignment)
    print(f"{assignment.num_clusters} clusters over {len(sel)} nodes -> {out}")
    return 0


def cmd_evaluate(args) -> int:
    import csv

    with open(args.assignment, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    pred = {r[0]: int(r[1]) for r in rows}
    gold, _ = load_gold(args.gold)
    scores = score(pred, {n: gold.labels[n] for n in pred}, args.nmi_mean)
    print(json.dumps(scores, sort_keys=True))
    if args.out and not args.dry_run:
        write_json(Path(args.out) / (Path(args.assignment).stem + ".metrics.json"), scores)
    return 0


def cmd_distances(args) -> int:
    nodes, emb = read_embeddings_csv(args.embeddings)
    with open(args.links, encoding="utf-8") as fh:
        links = [AlignmentLink.from_dict(d) for d in json.load(fh)]
    _, fold_of = load_gold(args.gold)
    test = folds_from_assignment(fold_of)[args.fold - 1].test
    dists = distance_analysis(dict(zip(nodes, emb)), links, test)
    for rel, d in dists.items():
        print(rel.value, "empty" if d.empty else json.dumps(d.summary))
    if not args.dry_run:
        out = _out(args) / f"distances_f{args.fold}.csv"
        with atomic_path(out) as tmp:
            write_distances_csv(tmp, dists, args.fold)
    return 0


def cmd_pipeline(args) -> int:
    cfg = load_config(args.config, overrides={"seed": args.seed})
    run_dir = Path(args.out or cfg.out or "results")
    outcome = run_pipeline(cfg, run_dir, jobs=max(1, args.jobs), dry_run=args.dry_run)
    cells = outcome.manifest["cells"]
    counts: dict[str, int] = {}
    for c in cells:
        counts[c["status"]] = counts.get(c["status"], 0) + 1
    print(f"{run_dir}: {len(cells)} cells {counts}")
    for c in outcome.failed:
        print(f"  failed {c['cell']}: {c['error']}", file=sys.stderr)
    for stage, err in outcome.manifest.get("stage_errors", {}).items():
        print(f"  stage {stage}: {err}", file=sys.stderr)
    return outcome.exit_code


def cmd_report(args) -> int:
    run_dir = Path(args.results or args.out or "results")
    if args.dry_run:
        print(f"would consolidate {run_dir / 'cells'}")
        return 0
    try:
        report = build_report(run_dir)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for r in report["rows"]:
        flags = ("A" if r["best_algorithm"] else "-") + ("V" if r["best_variant"] else "-")
        print(f"{r['clustering']} {r['variant']} t{r['threshold']:<3} {r['algorithm']:<7} "
              f"{r['metric']} {r['formatted']}  {flags}")
    return 2 if report["incomplete"] else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgmatch", description="GCN embeddings for aligning knowledge-graph nodes")
    _common(parser, top=True)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        _common(p, top=False)
        p.set_defaults(func=fn)
        return p

    def s_rule(p):
        p.add_argument("--input", required=True, help="N-Triples file")
        p.add_argument("--s-pattern", default=S_PATTERN, help="regex selecting match candidates")
        p.add_argument("--s-list", help="file with one match-candidate IRI per line")

    p = add("synthgen", cmd_synthgen, "generate a synthetic graph and its ledger")
    p.add_argument("--config", help="INI file with a [synthgen] section")

    p = add("saturate", cmd_saturate, "build saturated, reduced graph variants")
    s_rule(p)
    p.add_argument("--variant", action="append", choices=VARIANT_TAGS)
    p.add_argument("--hops", type=int, default=3)

    p = add("gold-clusters", cmd_gold, "compute gold clusterings and fold assignments")
    s_rule(p)
    p.add_argument("--clustering", action="append", choices=CLUSTERING_TAGS)

    p = add("train", cmd_train, "train, embed, cluster and evaluate one cell of a run directory")
    p.add_argument("--config")
    p.add_argument("--clustering", default="c0", choices=CLUSTERING_TAGS)
    p.add_argument("--variant", default="g0", choices=VARIANT_TAGS)
    p.add_argument("--fold", type=int, default=1, choices=range(1, 6))

    p = add("cluster", cmd_cluster, "cluster test-fold embeddings")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--fold", type=int, default=1, choices=range(1, 6))
    p.add_argument("--algorithm", default="single", choices=ALGORITHMS)
    p.add_argument("--threshold", type=int, default=10)
    p.add_argument("--xi", type=float, default=DEFAULT_XI)

    p = add("evaluate", cmd_evaluate, "score an assignment CSV against a gold clustering")
    p.add_argument("--assignment", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--nmi-mean", default="arithmetic")

    p = add("distances", cmd_distances, "per-relation distances of linked test pairs")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--links", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--fold", type=int, default=1, choices=range(1, 6))

    p = add("pipeline", cmd_pipeline, "run the whole protocol from a config file")
    p.add_argument("--config", required=True)

    p = add("report", cmd_report, "consolidate a results tree into tables")
    p.add_argument("results", nargs="?")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InfeasibleConfig, ConfigurationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (NTriplesError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
