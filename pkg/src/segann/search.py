"""The multi-stage candidate pipeline.

Per query the stages are: attribute filter (upstream), partition selection
under the visit threshold, sign-sketch Hamming pruning, additive lower
bounds from a per-query distance table, then exact refinement of the best
survivors. Every stage orders ties by ascending global id so results are
reproducible no matter how work is scheduled.

The lower-bound table has one row per cell and one column per dimension:
entry (c, j) is zero when the query falls in cell c of dimension j, else
the squared distance from the query coordinate to the facing edge of that
cell. Summing entries along a row's codes lower-bounds the true squared
distance, so no true neighbor is lost by table ordering alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dataset import ResultSet
from .errors import CapacityError
from .osq import SegmentMatrix, extract_dim, hamming_to_row
from .quantizer import BitAllocation, Lloyd1D, assign_cells


@dataclass
class AdcTable:
    values: np.ndarray  # (max_cells + 1, d) float64; unused entries +inf

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def build_adc_table(
    query: np.ndarray, quantizers: Sequence[Lloyd1D], max_cells: Optional[int] = None
) -> AdcTable:
    """Per-query table of squared cell-edge distances (transformed space)."""
    q = np.asarray(query, dtype=np.float64).ravel()
    d = len(quantizers)
    if q.shape[0] != d:
        raise CapacityError("query dimensionality does not match the quantizers")
    if max_cells is None:
        max_cells = max(qz.cells for qz in quantizers)
    table = np.full((max_cells + 1, d), np.inf, dtype=np.float64)
    for j, qz in enumerate(quantizers):
        bounds = qz.boundaries
        cells = qz.cells
        qc = int(assign_cells(np.array([q[j]]), bounds)[0])
        col = np.zeros(cells, dtype=np.float64)
        if qc > 0:
            col[:qc] = (q[j] - bounds[1 : qc + 1]) ** 2
        if qc < cells - 1:
            col[qc + 1 :] = (bounds[qc + 1 : cells] - q[j]) ** 2
        table[:cells, j] = col
    return AdcTable(table)


def lower_bounds(
    table: AdcTable,
    matrix: SegmentMatrix,
    alloc: BitAllocation,
    rows: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Squared-distance lower bounds for the selected rows."""
    if rows is None:
        count = matrix.n
    else:
        rows = np.asarray(rows)
        count = int(rows.sum()) if rows.dtype == bool else rows.shape[0]
    acc = np.zeros(count, dtype=np.float64)
    for j in range(alloc.dim):
        codes = extract_dim(matrix, alloc, j, rows)
        acc += table.values[codes, j]
    return acc


@dataclass
class PartitionPlan:
    """Outcome of partition selection for a query batch.

    visits[p] is a list of (query_index, local candidate mask) pairs in the
    order they were added. ratios and visited are (n_queries, P) matrices
    kept for top-up rebalancing.
    """

    visits: dict
    ratios: np.ndarray
    visited: np.ndarray
    threshold: float

    @property
    def n_queries(self) -> int:
        return self.ratios.shape[0]


def centroid_ratios(query: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Distance ratios against the nearest centroid (that one maps to 1)."""
    diffs = centroids - query
    dists = np.sqrt(np.einsum("ij,ij->i", diffs, diffs))
    nearest = dists.min()
    if nearest > 0.0:
        return dists / nearest
    ratios = np.full(dists.shape, np.inf)
    ratios[dists == 0.0] = 1.0
    return ratios


def select_partitions(
    queries: np.ndarray,
    masks: np.ndarray,
    centroids: np.ndarray,
    members: Sequence[np.ndarray],
    threshold: float,
    k: int,
) -> PartitionPlan:
    """Visit partitions in ascending centroid distance until the ratio
    exceeds the threshold with at least k candidates already gathered.

    Partitions whose candidate set is empty are skipped without counting as
    visits. When at least k rows pass the filter globally, the returned
    plan always covers at least k of them.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    nq = queries.shape[0]
    p = centroids.shape[0]
    k_per_query = np.broadcast_to(np.asarray(k, dtype=np.int64), (nq,))
    visits = {i: [] for i in range(p)}
    ratios = np.empty((nq, p), dtype=np.float64)
    visited = np.zeros((nq, p), dtype=bool)
    for qi in range(nq):
        r = centroid_ratios(queries[qi], centroids)
        ratios[qi] = r
        order = np.argsort(r, kind="stable")
        gathered = 0
        for pi in order:
            if r[pi] > threshold and gathered >= k_per_query[qi]:
                break
            local = masks[qi][members[pi]]
            count = int(local.sum())
            if count == 0:
                continue
            visits[int(pi)].append((qi, local))
            visited[qi, pi] = True
            gathered += count
    return PartitionPlan(visits, ratios, visited, threshold)


def rebalance_plan(
    plan: PartitionPlan,
    masks: np.ndarray,
    members: Sequence[np.ndarray],
    target: int,
) -> int:
    """Top up under-visited partitions with their least-pruned queries.

    Only queries that were cut by the threshold rule (ratio above it) are
    eligible, taken in ascending ratio order, skipping any whose candidate
    set in that partition is empty. Existing visits are never removed.
    Returns the number of visits added.
    """
    added = 0
    for pi, visit_list in plan.visits.items():
        if len(visit_list) >= target:
            continue
        pruned = np.flatnonzero(
            ~plan.visited[:, pi] & (plan.ratios[:, pi] > plan.threshold)
        )
        for qi in pruned[np.argsort(plan.ratios[pruned, pi], kind="stable")]:
            if len(visit_list) >= target:
                break
            local = masks[qi][members[pi]]
            if not local.any():
                continue
            visit_list.append((int(qi), local))
            plan.visited[qi, pi] = True
            added += 1
    return added


def hamming_prune(
    rows: np.ndarray,
    global_ids: np.ndarray,
    sketch: SegmentMatrix,
    query_row: np.ndarray,
    keep_percent: float,
) -> np.ndarray:
    """Keep the ceil(|rows| * pct / 100) rows closest in sign-sketch
    Hamming distance; ties resolve toward the lower global id."""
    if rows.size == 0 or keep_percent >= 100.0:
        return rows
    keep = math.ceil(rows.size * keep_percent / 100.0)
    h = hamming_to_row(sketch, query_row, rows)
    order = np.lexsort((global_ids[rows], h))
    return rows[order[:keep]]


def merge_results(parts: Sequence[ResultSet], k: int) -> ResultSet:
    """k best entries across result sets under the (distance, id) order."""
    if not parts:
        return ResultSet(np.empty(0, np.int64), np.empty(0, np.float64))
    ids = np.concatenate([p.ids for p in parts])
    dists = np.concatenate([p.distances for p in parts])
    order = np.lexsort((ids, dists))[:k]
    return ResultSet(ids[order], dists[order])
