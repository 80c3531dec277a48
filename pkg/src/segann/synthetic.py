"""Synthetic data and workload generators.

Vectors come from an anisotropic Gaussian mixture: each cluster gets its
own rotation and a geometrically decaying axis profile, so per-partition
decorrelation and variance-driven bit allocation both have something real
to do. Queries are jittered copies of data points, the usual regime for
recall studies.

Predicates are built from the trained attribute cell edges, which pins
their selectivity: a clause like "attr < edge" admits a known fraction of
rows, and combining per-attribute targets multiplies out (independent
uniform columns) to the requested joint selectivity.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from .dataset import (
    AttributeTable,
    HybridQuery,
    QueryPredicate,
    VectorDataset,
    generate_attributes,
)
from .errors import ConfigError
from .quantizer import AttributeQIndex


def clustered_vectors(
    n: int,
    dim: int,
    clusters: int = 64,
    seed: int = 0,
    center_scale: float = 10.0,
    spread: float = 1.0,
    decay: float = 0.95,
) -> VectorDataset:
    """Gaussian mixture with per-cluster rotation and decaying axis scales."""
    if clusters < 1 or clusters > n:
        raise ConfigError("cluster count must be between 1 and n")
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, center_scale, size=(clusters, dim))
    sizes = np.full(clusters, n // clusters)
    sizes[: n % clusters] += 1
    scales = spread * decay ** np.arange(dim)
    blocks = []
    for c in range(clusters):
        basis, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
        z = rng.normal(size=(sizes[c], dim)) * scales
        blocks.append(centers[c] + z @ basis.T)
    values = np.concatenate(blocks)
    rng.shuffle(values)
    return VectorDataset(values.astype(np.float32))


def near_queries(
    dataset: VectorDataset, count: int, seed: int = 1, jitter: float = 0.05
) -> np.ndarray:
    """Query vectors sampled next to existing rows."""
    rng = np.random.default_rng(seed)
    rows = rng.choice(dataset.n, size=count, replace=count > dataset.n)
    base = dataset.values[rows].astype(np.float64)
    scale = jitter * dataset.values.std(axis=0).astype(np.float64)
    return base + rng.normal(size=base.shape) * scale


def _edge_for_fraction(column: np.ndarray, edges: np.ndarray, target: float) -> float:
    """Interior cell edge whose below-fraction is closest to target."""
    interior = edges[1:-1]
    fractions = np.searchsorted(np.sort(column), interior) / column.size
    return float(interior[np.argmin(np.abs(fractions - target))])


def selectivity_predicates(
    attrs: AttributeTable,
    index: AttributeQIndex,
    count: int,
    joint_selectivity: float = 0.08,
    seed: int = 2,
) -> list:
    """Edge-aligned conjunctive predicates with a pinned joint selectivity.

    Every numeric operand is a trained cell edge, so the raw-value and
    cell-level readings of the predicate agree and selectivity control is
    exact up to the cell resolution. Numeric clause shapes rotate between
    upper bounds, lower bounds, and centered ranges; categorical columns
    pin the label whose frequency best matches the per-attribute target.
    """
    a = attrs.a_count
    if a == 0:
        return [QueryPredicate() for _ in range(count)]
    per_attr = joint_selectivity ** (1.0 / a)
    rng = np.random.default_rng(seed)
    predicates = []
    for _ in range(count):
        clauses = {}
        for i in range(a):
            col = attrs.columns[i]
            edges = index.boundaries[i]
            if edges is None:
                labels, freqs = np.unique(col, return_counts=True)
                near = np.abs(freqs / col.size - per_attr)
                # a few closest labels, sampled for variety across queries
                pool = labels[np.argsort(near, kind="stable")][:3]
                clauses[str(i)] = ["=", str(rng.choice(pool))]
                continue
            style = rng.integers(0, 3)
            if style == 0:
                clauses[str(i)] = ["<", _edge_for_fraction(col, edges, per_attr)]
            elif style == 1:
                clauses[str(i)] = [">=", _edge_for_fraction(col, edges, 1.0 - per_attr)]
            else:
                lo_frac = rng.uniform(0.05, 0.9 - per_attr)
                lo = _edge_for_fraction(col, edges, lo_frac)
                hi = _edge_for_fraction(col, edges, lo_frac + per_attr)
                if hi <= lo:
                    clauses[str(i)] = ["<", _edge_for_fraction(col, edges, per_attr)]
                else:
                    clauses[str(i)] = ["between", lo, hi]
        predicates.append(QueryPredicate.from_dict(clauses))
    return predicates


def benchmark_workload(
    n: int,
    dim: int,
    a_count: int,
    n_queries: int,
    k: int,
    seed: int = 0,
    joint_selectivity: float = 0.08,
    clusters: Optional[int] = None,
    attr_cells: int = 16,
) -> tuple:
    """(dataset, attrs, queries) for an end-to-end benchmark run."""
    from .quantizer import quantize_attributes

    if clusters is None:
        # Keep clusters small next to the filtered candidate pool, or the
        # sign sketch cannot rank within-cluster candidates.
        clusters = max(1, min(512, n // 256))
    dataset = clustered_vectors(n, dim, clusters=clusters, seed=seed)
    attrs = generate_attributes(n, a_count, seed=seed + 1)
    index = quantize_attributes(attrs, attr_cells)
    vectors = near_queries(dataset, n_queries, seed=seed + 2)
    predicates = selectivity_predicates(
        attrs, index, n_queries, joint_selectivity, seed=seed + 3
    )
    queries = [
        HybridQuery(vectors[i], predicates[i], k) for i in range(n_queries)
    ]
    return dataset, attrs, queries
