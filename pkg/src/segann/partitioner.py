"""Balanced partitioning and the partition-visit threshold.

Partitioning is capacity-constrained k-means: each assignment pass walks
vectors in ascending distance-to-nearest-centroid order and places each in
its nearest partition that still has room, with room capped at
ceil(n / partitions) * (1 + slack). Centroids live in the original vector
space; per-partition transforms are fitted afterwards by the builder.

The visit threshold is learned from the data: for every vector, the
distances to all centroids are divided by the distance to its own (nearest)
centroid, and the threshold is 1 + (mean of row stds / mean of row means)
+ beta * sqrt(d). At query time a partition whose centroid-distance ratio
exceeds the threshold is not visited once enough candidates are in hand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import CapacityError, ConfigError


@dataclass
class PartitionSet:
    centroids: np.ndarray        # (P, d) float64, original space
    assignment: np.ndarray       # (n,) partition id per vector
    cost_trace: list = field(default_factory=list)
    _members: Optional[list] = None

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        self.assignment = np.asarray(self.assignment, dtype=np.int32)

    @property
    def partitions(self) -> int:
        return self.centroids.shape[0]

    @property
    def n(self) -> int:
        return self.assignment.shape[0]

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.partitions)

    def members(self, p: int) -> np.ndarray:
        """Global ids in partition p, ascending. This ordering defines the
        partition-local row numbering used by every index structure."""
        if self._members is None:
            order = np.argsort(self.assignment, kind="stable")
            bounds = np.searchsorted(self.assignment[order], np.arange(self.partitions + 1))
            self._members = [
                np.sort(order[bounds[i] : bounds[i + 1]]).astype(np.int64)
                for i in range(self.partitions)
            ]
        return self._members[p]

    def residency_matrix(self) -> np.ndarray:
        """(P, n) boolean partition membership, for persisting."""
        out = np.zeros((self.partitions, self.n), dtype=bool)
        out[self.assignment, np.arange(self.n)] = True
        return out


def _pairwise_sq(vectors: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # (n, P) squared distances via the expansion trick; clipped at zero
    # because cancellation can leave tiny negatives.
    vv = np.einsum("ij,ij->i", vectors, vectors)[:, None]
    cc = np.einsum("ij,ij->i", centroids, centroids)[None, :]
    d2 = vv + cc - 2.0 * (vectors @ centroids.T)
    return np.clip(d2, 0.0, None)


def partition_capacity(n: int, partitions: int, slack: float) -> int:
    return int(math.floor(math.ceil(n / partitions) * (1.0 + slack)))


def balanced_partition(
    vectors: np.ndarray,
    partitions: int,
    slack: float = 0.05,
    seed: int = 0,
    max_iter: int = 50,
) -> PartitionSet:
    x = np.asarray(vectors, dtype=np.float64)
    n, d = x.shape
    if partitions < 1:
        raise ConfigError("need at least one partition")
    if partitions > n:
        raise ConfigError("more partitions than vectors")
    if slack < 0:
        raise ConfigError("slack must be non-negative")
    cap = partition_capacity(n, partitions, slack)
    if cap * partitions < n:
        raise CapacityError("capacities cannot hold all vectors")
    if partitions == 1:
        return PartitionSet(x.mean(axis=0, keepdims=True), np.zeros(n, dtype=np.int32))

    rng = np.random.default_rng(seed)
    centroids = x[rng.choice(n, size=partitions, replace=False)].copy()

    assignment = np.full(n, -1, dtype=np.int32)
    best_cost = math.inf
    trace = []
    for _ in range(max_iter):
        d2 = _pairwise_sq(x, centroids)
        pref = np.argsort(d2, axis=1, kind="stable")
        order = np.argsort(d2[np.arange(n), pref[:, 0]], kind="stable")
        counts = np.zeros(partitions, dtype=np.int64)
        new_assignment = np.empty(n, dtype=np.int32)
        for i in order:
            for p in pref[i]:
                if counts[p] < cap:
                    new_assignment[i] = p
                    counts[p] += 1
                    break
        cost = float(d2[np.arange(n), new_assignment].sum())
        if cost >= best_cost and trace:
            break  # no further improvement under the capacity constraint
        trace.append(cost)
        best_cost = cost
        converged = np.array_equal(new_assignment, assignment)
        assignment = new_assignment
        for p in range(partitions):
            members = x[assignment == p]
            if members.shape[0]:
                centroids[p] = members.mean(axis=0)
        if converged:
            break
    return PartitionSet(centroids, assignment, trace)


@dataclass
class ThresholdModel:
    factor: float
    beta: float
    ratio_mean: float          # mean over rows of per-row ratio means
    ratio_spread: float        # mean over rows of per-row ratio stds
    excluded_rows: int         # rows sitting exactly on their centroid

    def as_dict(self) -> dict:
        return {
            "factor": self.factor,
            "beta": self.beta,
            "ratio_mean": self.ratio_mean,
            "ratio_spread": self.ratio_spread,
            "excluded_rows": self.excluded_rows,
        }

    @staticmethod
    def from_dict(d: dict) -> "ThresholdModel":
        return ThresholdModel(
            d["factor"], d["beta"], d["ratio_mean"], d["ratio_spread"], d["excluded_rows"]
        )


def compute_threshold(
    vectors: np.ndarray, centroids: np.ndarray, beta: float
) -> ThresholdModel:
    x = np.asarray(vectors, dtype=np.float64)
    c = np.asarray(centroids, dtype=np.float64)
    d = x.shape[1]
    dists = np.sqrt(_pairwise_sq(x, c))
    home = dists.min(axis=1)
    keep = home > 0.0
    excluded = int((~keep).sum())
    if not keep.any():
        # Degenerate: every vector is a centroid. Fall back to the floor.
        ratio_mean, ratio_spread = 1.0, 0.0
    else:
        ratios = dists[keep] / home[keep, None]
        ratio_mean = float(ratios.mean(axis=1).mean())
        ratio_spread = float(ratios.std(axis=1).mean())
    factor = 1.0 + ratio_spread / ratio_mean + beta * math.sqrt(d)
    return ThresholdModel(factor, beta, ratio_mean, ratio_spread, excluded)
