"""Index construction, loading, and the in-process search engine.

The builder partitions the dataset, fits per-partition transforms and
quantizers, packs the codes, and writes everything under one directory
with a JSON manifest at its root. Loading gives an IndexBundle; LocalEngine
runs the full pipeline in-process. The simulated distributed runtime reuses
the same per-partition searcher, so both paths return identical results.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dataset import AttributeTable, HybridQuery, ResultSet, VectorDataset
from .errors import AllocationError, ConfigError
from .hybridfilter import build_lookup, filter_masks
from .osq import pack_codes, pack_signs, sign_allocation
from .partitioner import PartitionSet, ThresholdModel, balanced_partition, compute_threshold
from .quantizer import (
    AttributeQIndex,
    BitAllocation,
    allocate_bits,
    empty_attribute_index,
    lloyd_1d,
    quantize_attributes,
    quantize_matrix,
)
from .search import (
    PartitionPlan,
    build_adc_table,
    hamming_prune,
    lower_bounds,
    merge_results,
    rebalance_plan,
    select_partitions,
)
from .storage import (
    MANIFEST_MAGIC,
    PartitionPayload,
    VectorStore,
    decode_array,
    encode_array,
    manifest_fingerprint,
    read_attribute_index,
    read_manifest,
    read_partition,
    resolve,
    write_attribute_index,
    write_attribute_table,
    write_manifest,
    write_partition,
    write_vector_store,
)
from .transform import (
    KltModel,
    apply_klt,
    apply_standardize,
    fit_klt,
    fit_standardize,
)


@dataclass
class BuildParams:
    partitions: int = 8
    segment_bits: int = 8
    bit_budget: Optional[int] = None   # default 4 bits per dimension
    slack: float = 0.05
    beta: float = 0.001
    attr_cells: int = 16
    seed: int = 0
    kmeans_iters: int = 50
    lloyd_iters: int = 100

    def resolved_budget(self, dim: int) -> int:
        return 4 * dim if self.bit_budget is None else int(self.bit_budget)


def _fit_partition(
    sub: np.ndarray, params: BuildParams, budget: int
) -> PartitionPayload:
    n, d = sub.shape
    if n >= 2:
        klt = fit_klt(sub)
    else:
        # Too small to estimate a rotation; keep the original axes.
        klt = KltModel(sub.mean(axis=0), np.eye(d), np.zeros(d))
    t = apply_klt(klt, sub)
    t = np.atleast_2d(t)
    variances = t.var(axis=0)
    try:
        alloc = allocate_bits(variances, budget, params.segment_bits)
    except AllocationError:
        # Degenerate partition (no spread at all): spread the budget evenly
        # so the packed layout still matches the manifest geometry.
        bits = np.full(d, budget // d, dtype=np.int64)
        bits[: budget % d] += 1
        alloc = BitAllocation(bits, params.segment_bits)
    quantizers = [
        lloyd_1d(t[:, j], int(2 ** alloc.bits[j]), max_iter=params.lloyd_iters)
        for j in range(d)
    ]
    codes = quantize_matrix(t, quantizers)
    matrix = pack_codes(codes, alloc)
    std = fit_standardize(t)
    sketch = pack_signs(apply_standardize(std, t), params.segment_bits)
    return PartitionPayload(None, klt, std, alloc, quantizers, matrix, sketch)


def build_index(
    dataset: VectorDataset,
    attrs: Optional[AttributeTable],
    params: BuildParams,
    out_dir: str,
) -> str:
    """Build a complete index under out_dir; returns the manifest path."""
    if attrs is not None and attrs.n != dataset.n:
        raise ConfigError("attribute table length does not match the dataset")
    os.makedirs(out_dir, exist_ok=True)
    budget = params.resolved_budget(dataset.dim)
    pset = balanced_partition(
        dataset.values.astype(np.float64),
        params.partitions,
        slack=params.slack,
        seed=params.seed,
        max_iter=params.kmeans_iters,
    )
    threshold = compute_threshold(
        dataset.values.astype(np.float64), pset.centroids, params.beta
    )
    if attrs is not None:
        attr_index = quantize_attributes(attrs, params.attr_cells)
        write_attribute_table(os.path.join(out_dir, "attributes.tbl"), attrs)
    else:
        attr_index = empty_attribute_index(dataset.n)
    write_attribute_index(os.path.join(out_dir, "attributes.idx"), attr_index)

    partition_files = []
    for p in range(pset.partitions):
        members = pset.members(p)
        payload = _fit_partition(
            dataset.values[members].astype(np.float64), params, budget
        )
        payload.members = members
        fname = f"partition_{p:04d}.seg"
        write_partition(os.path.join(out_dir, fname), payload)
        partition_files.append(fname)

    write_vector_store(os.path.join(out_dir, "vectors.f32"), dataset.values)

    manifest = {
        "magic": MANIFEST_MAGIC,
        "version": 1,
        "n": dataset.n,
        "dim": dataset.dim,
        "partitions": pset.partitions,
        "segment_bits": params.segment_bits,
        "bit_budget": budget,
        "attr_cells": params.attr_cells,
        "seed": params.seed,
        "slack": params.slack,
        "beta": params.beta,
        "threshold": threshold.as_dict(),
        "centroids": encode_array(pset.centroids),
        "assignment": encode_array(pset.assignment),
        "partition_files": partition_files,
        "attribute_index": "attributes.idx",
        "attribute_table": "attributes.tbl" if attrs is not None else None,
        "vector_store": "vectors.f32",
    }
    path = os.path.join(out_dir, "manifest.json")
    write_manifest(path, manifest)
    return path


@dataclass
class IndexBundle:
    """A loaded manifest plus the shared (partition-independent) state."""

    manifest_path: str
    manifest: dict
    centroids: np.ndarray
    assignment: np.ndarray
    attr_index: AttributeQIndex
    threshold: ThresholdModel
    fingerprint: str
    _members: Optional[list] = None

    @staticmethod
    def load(manifest_path: str) -> "IndexBundle":
        manifest = read_manifest(manifest_path)
        return IndexBundle(
            manifest_path=os.path.abspath(manifest_path),
            manifest=manifest,
            centroids=decode_array(manifest["centroids"]),
            assignment=decode_array(manifest["assignment"]),
            attr_index=read_attribute_index(
                resolve(manifest_path, manifest["attribute_index"])
            ),
            threshold=ThresholdModel.from_dict(manifest["threshold"]),
            fingerprint=manifest_fingerprint(manifest_path),
        )

    @property
    def partitions(self) -> int:
        return int(self.manifest["partitions"])

    @property
    def dim(self) -> int:
        return int(self.manifest["dim"])

    @property
    def n(self) -> int:
        return int(self.manifest["n"])

    def members(self, p: int) -> np.ndarray:
        if self._members is None:
            pset = PartitionSet(self.centroids, self.assignment)
            self._members = [pset.members(i) for i in range(self.partitions)]
        return self._members[p]

    def member_lists(self) -> list:
        return [self.members(p) for p in range(self.partitions)]

    def partition_path(self, p: int) -> str:
        return resolve(self.manifest_path, self.manifest["partition_files"][p])

    def load_partition(self, p: int) -> PartitionPayload:
        return read_partition(self.partition_path(p))

    def open_store(self) -> VectorStore:
        return VectorStore(
            resolve(self.manifest_path, self.manifest["vector_store"]), self.dim
        )


@dataclass
class SearchParams:
    k: int = 10
    hamming_keep_percent: float = 10.0
    refine_factor: float = 2.0
    threshold_override: Optional[float] = None
    rebalance_target: int = 0          # 0 disables visit top-up


@dataclass
class PartitionSearcher:
    """Runs the per-partition stages: prune, lower-bound, refine."""

    payload: PartitionPayload
    store: VectorStore

    def search(
        self, query: np.ndarray, candidates: np.ndarray, k: int, params: SearchParams
    ) -> ResultSet:
        """candidates is a boolean mask over the partition's local rows."""
        pay = self.payload
        rows = np.flatnonzero(candidates)
        if rows.size == 0:
            return ResultSet(np.empty(0, np.int64), np.empty(0, np.float64))
        q = np.asarray(query, dtype=np.float64)
        q_t = apply_klt(pay.klt, q)
        q_std = apply_standardize(pay.standardize, q_t)
        sign_row = pack_codes(
            (q_std > 0).astype(np.int64).reshape(1, -1),
            sign_allocation(pay.dim, pay.sketch.segment_bits),
        ).segments[0]
        rows = hamming_prune(
            rows, pay.members, pay.sketch, sign_row, params.hamming_keep_percent
        )
        table = build_adc_table(q_t, pay.quantizers)
        lbs = lower_bounds(table, pay.matrix, pay.alloc, rows)
        refine_count = min(int(math.ceil(params.refine_factor * k)), rows.size)
        order = np.lexsort((pay.members[rows], lbs))[:refine_count]
        chosen = pay.members[rows[order]]
        exact = self.store.read(chosen).astype(np.float64)
        diffs = exact - q
        d2 = np.einsum("ij,ij->i", diffs, diffs)
        top = np.lexsort((chosen, d2))[:k]
        return ResultSet(chosen[top], np.sqrt(d2[top]))


class LocalEngine:
    """Single-process search over a loaded index."""

    def __init__(self, bundle: IndexBundle):
        self.bundle = bundle
        self.store = bundle.open_store()
        self._searchers = {}

    def _searcher(self, p: int) -> PartitionSearcher:
        if p not in self._searchers:
            self._searchers[p] = PartitionSearcher(self.bundle.load_partition(p), self.store)
        return self._searchers[p]

    def plan(self, queries: Sequence[HybridQuery], params: SearchParams) -> tuple:
        """Shared front half: filter masks and the partition plan."""
        lookup = build_lookup(self.bundle.attr_index, [q.predicate for q in queries])
        masks = filter_masks(self.bundle.attr_index, lookup)
        vectors = np.stack([q.vector for q in queries])
        threshold = (
            params.threshold_override
            if params.threshold_override is not None
            else self.bundle.threshold.factor
        )
        plan = select_partitions(
            vectors,
            masks,
            self.bundle.centroids,
            self.bundle.member_lists(),
            threshold,
            np.array([q.k for q in queries], dtype=np.int64),
        )
        if params.rebalance_target > 0:
            rebalance_plan(plan, masks, self.bundle.member_lists(), params.rebalance_target)
        return plan, masks

    def search_batch(
        self, queries: Sequence[HybridQuery], params: SearchParams
    ) -> list:
        plan, _ = self.plan(queries, params)
        partials = {qi: [] for qi in range(len(queries))}
        for p, visit_list in plan.visits.items():
            if not visit_list:
                continue
            searcher = self._searcher(p)
            for qi, local in visit_list:
                partials[qi].append(
                    searcher.search(queries[qi].vector, local, queries[qi].k, params)
                )
        return [
            merge_results(partials[qi], queries[qi].k)
            for qi in range(len(queries))
        ]

    def close(self):
        self.store.close()
