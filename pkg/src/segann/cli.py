"""Command-line entry points.

Subcommands:
  build        construct an index directory from a vector file
  query        run a query file against an index through the simulated runtime
  groundtruth  exact filtered k-NN answers for a query file
  bench        synthetic end-to-end benchmark (generate, build, query, price)

All subcommands accept --config pointing at a JSON file with optional
"build", "search", "runtime", and "prices" sections; individual flags
override file values.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from .builder import BuildParams, IndexBundle, SearchParams, build_index
from .config import build_section, load_config
from .costmodel import PriceSheet, price_run
from .dataset import (
    AttributeTable,
    brute_force_search,
    generate_attributes,
    load_queries,
    read_bvecs,
    read_fvecs,
    read_ivecs,
    recall_at_k,
    save_queries,
    write_ivecs,
)
from .errors import SegannError
from .runtime import RunOptions, SimulatedRuntime
from .storage import read_attribute_table, write_attribute_table
from .synthetic import benchmark_workload


def _read_vectors(path: str, fmt: str):
    if fmt == "auto":
        fmt = "bvecs" if path.endswith(".bvecs") else "fvecs"
    return read_bvecs(path) if fmt == "bvecs" else read_fvecs(path)


def _build_overrides(args) -> dict:
    return {
        "partitions": args.partitions,
        "segment_bits": args.segment_bits,
        "bit_budget": args.bit_budget,
        "slack": args.slack,
        "beta": args.beta,
        "attr_cells": args.attr_cells,
        "seed": args.seed,
    }


def _search_overrides(args) -> dict:
    return {
        "hamming_keep_percent": args.hamming_keep,
        "refine_factor": args.refine_factor,
        "threshold_override": args.threshold,
        "rebalance_target": args.rebalance_target,
    }


def _run_overrides(args) -> dict:
    return {
        "branching": args.branching,
        "levels": args.levels,
        "single_allocator": True if args.single_allocator else None,
        "batch_size": args.batch_size,
        "max_workers": args.max_workers,
        "cold_start_penalty": args.cold_start_penalty,
        "result_cache": True if args.result_cache else None,
    }


def _add_search_runtime_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hamming-keep", type=float, help="percent of candidates kept by the sign sketch")
    p.add_argument("--refine-factor", type=float, help="full-precision refinement multiplier")
    p.add_argument("--threshold", type=float, help="override the learned visit threshold")
    p.add_argument("--rebalance-target", type=int, help="minimum visits per partition top-up")
    p.add_argument("--branching", type=int, help="allocator tree branching factor")
    p.add_argument("--levels", type=int, help="allocator tree depth")
    p.add_argument("--single-allocator", action="store_true", help="run one allocator, no tree")
    p.add_argument("--batch-size", type=int, help="queries per allocator batch")
    p.add_argument("--max-workers", type=int, help="1 = fully sequential execution")
    p.add_argument("--cold-start-penalty", type=float, help="seconds added to each cold start")
    p.add_argument("--result-cache", action="store_true", help="cache exact repeat queries")


def cmd_build(args) -> int:
    cfg = load_config(args.config)
    params = build_section(cfg, "build", _build_overrides(args))
    dataset = _read_vectors(args.vectors, args.format)
    if args.attributes:
        attrs = read_attribute_table(args.attributes)
    elif args.synthetic_attributes:
        attrs = generate_attributes(dataset.n, args.synthetic_attributes, seed=params.seed)
    else:
        attrs = None
    t0 = time.perf_counter()
    manifest = build_index(dataset, attrs, params, args.out)
    print(f"built index over {dataset.n} x {dataset.dim} vectors "
          f"in {time.perf_counter() - t0:.1f}s")
    print(f"manifest: {manifest}")
    return 0


def cmd_groundtruth(args) -> int:
    dataset = _read_vectors(args.vectors, args.format)
    attrs = read_attribute_table(args.attributes) if args.attributes else None
    queries = load_queries(args.queries, default_k=args.k)
    rows = []
    for q in queries:
        res = brute_force_search(dataset, attrs, q)
        rows.append(res.ids)
    width = max(q.k for q in queries)
    write_ivecs(args.out, rows, width=width)
    print(f"wrote exact answers for {len(queries)} queries to {args.out}")
    return 0


def _load_prices(cfg: dict, flag) -> PriceSheet:
    path = flag or cfg.get("prices")
    if path is None:
        path = os.path.join(os.path.dirname(__file__), "data", "sample_prices.json")
    return PriceSheet.from_json(path)


def _run_queries(bundle, queries, search, run_opts, prices, truth, repeat):
    runtime = SimulatedRuntime(bundle, run_opts, search)
    summary = []
    results = None
    for r in range(repeat):
        results, report = runtime.run_batch(queries)
        cost = price_run(report.usage(run_opts), prices)
        entry = {
            "run": r,
            "queries": report.n_queries,
            "allocators": report.n_allocators,
            "processor_invocations": report.n_processor_invocations,
            "object_gets": report.object_gets,
            "store_reads": report.store_reads,
            "warm_starts": report.warm_starts,
            "cold_starts": report.cold_starts,
            "cache_hits": report.cache_hits,
            "partial": report.partial,
            "errors": report.errors,
            "wall_seconds": report.coordinator_seconds,
            "cost": cost.as_dict(),
        }
        if truth is not None:
            recalls = [
                # ivecs rows pad short answers with -1; drop the padding
                recall_at_k(
                    [t for t in truth[i] if t >= 0], results[i].ids, queries[i].k
                )
                for i in range(len(queries))
            ]
            entry["recall"] = float(np.mean(recalls)) if recalls else 1.0
        summary.append(entry)
    return results, summary


def cmd_query(args) -> int:
    cfg = load_config(args.config)
    search = build_section(cfg, "search", _search_overrides(args))
    run_opts = build_section(cfg, "runtime", _run_overrides(args))
    prices = _load_prices(cfg, args.prices)
    bundle = IndexBundle.load(args.index)
    queries = load_queries(args.queries, default_k=args.k)
    truth = read_ivecs(args.ground_truth) if args.ground_truth else None
    results, summary = _run_queries(
        bundle, queries, search, run_opts, prices, truth, args.repeat
    )
    for entry in summary:
        line = (
            f"run {entry['run']}: {entry['queries']} queries, "
            f"{entry['allocators']} allocators, "
            f"{entry['processor_invocations']} processor calls, "
            f"{entry['object_gets']} gets, total cost {entry['cost']['total_cost']:.3e}"
        )
        if "recall" in entry:
            line += f", recall {entry['recall']:.4f}"
        if entry["partial"]:
            line += ", PARTIAL"
        print(line)
    if args.report:
        payload = {"runs": summary}
        if args.dump_results:
            payload["results"] = [
                {"ids": r.ids.tolist(), "distances": r.distances.tolist()}
                for r in results
            ]
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, indent=1)
        print(f"report written to {args.report}")
    return 1 if any(e["partial"] for e in summary) else 0


def cmd_bench(args) -> int:
    cfg = load_config(args.config)
    params = build_section(cfg, "build", _build_overrides(args))
    search = build_section(cfg, "search", _search_overrides(args))
    run_opts = build_section(cfg, "runtime", _run_overrides(args))
    prices = _load_prices(cfg, args.prices)
    os.makedirs(args.out, exist_ok=True)

    dataset, attrs, queries = benchmark_workload(
        n=args.n,
        dim=args.dim,
        a_count=args.attrs,
        n_queries=args.queries,
        k=args.k,
        seed=params.seed,
        joint_selectivity=args.selectivity,
        attr_cells=params.attr_cells,
    )
    qpath = os.path.join(args.out, "queries.jsonl")
    save_queries(qpath, queries)
    write_attribute_table(os.path.join(args.out, "attributes.tbl"), attrs)

    t0 = time.perf_counter()
    manifest = build_index(dataset, attrs, params, os.path.join(args.out, "index"))
    print(f"built {args.n} x {args.dim} index in {time.perf_counter() - t0:.1f}s")

    truth_rows = [brute_force_search(dataset, attrs, q).ids for q in queries]
    write_ivecs(os.path.join(args.out, "groundtruth.ivecs"), truth_rows, width=args.k)

    bundle = IndexBundle.load(manifest)
    results, summary = _run_queries(
        bundle, queries, search, run_opts, prices, truth_rows, args.repeat
    )
    for entry in summary:
        print(
            f"run {entry['run']}: recall@{args.k} {entry['recall']:.4f}, "
            f"{entry['allocators']} allocators, {entry['processor_invocations']} "
            f"processor calls, cost {entry['cost']['total_cost']:.3e}"
        )
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump({"runs": summary}, fh, sort_keys=True, indent=1)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="segann",
        description="Attribute-filtered vector search over segment-packed codes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build an index directory")
    p.add_argument("--vectors", required=True)
    p.add_argument("--format", choices=("auto", "fvecs", "bvecs"), default="auto")
    p.add_argument("--attributes", help="attribute table file")
    p.add_argument("--synthetic-attributes", type=int, metavar="A",
                   help="generate A synthetic attribute columns")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--partitions", type=int)
    p.add_argument("--segment-bits", type=int)
    p.add_argument("--bit-budget", type=int)
    p.add_argument("--slack", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--attr-cells", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query", help="run queries through the simulated runtime")
    p.add_argument("--index", required=True, help="path to manifest.json")
    p.add_argument("--queries", required=True, help="JSONL query file")
    p.add_argument("--ground-truth", help="ivecs file of exact answers")
    p.add_argument("--k", type=int, default=10, help="k for queries that omit it")
    p.add_argument("--repeat", type=int, default=1, help="run the batch N times")
    p.add_argument("--report", help="write a JSON report here")
    p.add_argument("--dump-results", action="store_true")
    p.add_argument("--prices", help="price sheet JSON")
    p.add_argument("--config")
    _add_search_runtime_flags(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("groundtruth", help="exact filtered k-NN answers")
    p.add_argument("--vectors", required=True)
    p.add_argument("--format", choices=("auto", "fvecs", "bvecs"), default="auto")
    p.add_argument("--attributes")
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_groundtruth)

    p = sub.add_parser("bench", help="synthetic end-to-end benchmark")
    p.add_argument("--out", required=True, help="working directory")
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--attrs", type=int, default=4)
    p.add_argument("--queries", type=int, default=200)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--selectivity", type=float, default=0.08)
    p.add_argument("--repeat", type=int, default=1)
    p.add_argument("--report")
    p.add_argument("--prices")
    p.add_argument("--config")
    p.add_argument("--partitions", type=int)
    p.add_argument("--segment-bits", type=int)
    p.add_argument("--bit-budget", type=int)
    p.add_argument("--slack", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--attr-cells", type=int)
    p.add_argument("--seed", type=int)
    _add_search_runtime_flags(p)
    p.set_defaults(func=cmd_bench)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SegannError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
