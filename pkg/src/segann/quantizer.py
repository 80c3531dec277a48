"""Scalar quantization: variance-driven bit allocation and 1-D Lloyd cells.

Bit allocation is greedy: each bit goes to the dimension with the highest
working variance (ties to the lowest index), and that variance is divided
by 4, since one extra bit halves a cell width and quarters its squared
error. Lloyd training then places cell boundaries per dimension.

Cell lookup convention used everywhere in this package: cells are
half-open [b_k, b_{k+1}) except the last, which is closed on the right.
Values below the first boundary clamp to cell 0; values at or above the
last boundary clamp to the last cell.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dataset import AttributeTable, CATEGORICAL, NUMERIC
from .errors import AllocationError, CapacityError, InsufficientDataError


@dataclass
class BitAllocation:
    bits: np.ndarray       # (d,) bits per dimension
    segment_bits: int      # S, width of one packed segment

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.int64)

    @property
    def dim(self) -> int:
        return self.bits.shape[0]

    @property
    def budget(self) -> int:
        return int(self.bits.sum())

    @property
    def cells(self) -> np.ndarray:
        return (np.int64(1) << self.bits).astype(np.int64)

    @property
    def segments(self) -> int:
        # ceil(b / S): the whole point of segment packing
        return -(-self.budget // self.segment_bits)


def allocate_bits(
    variances: Sequence[float], budget: int, segment_bits: int = 8
) -> BitAllocation:
    var = np.asarray(variances, dtype=np.float64).copy()
    if var.ndim != 1 or var.size == 0:
        raise AllocationError("variances must be a non-empty 1-D array")
    if np.any(var < 0):
        raise AllocationError("variances must be non-negative")
    if budget < 0:
        raise AllocationError("bit budget must be non-negative")
    if segment_bits not in (8, 16, 32, 64):
        raise AllocationError("segment width must be 8, 16, 32 or 64 bits")
    bits = np.zeros(var.size, dtype=np.int64)
    if budget == 0:
        return BitAllocation(bits, segment_bits)
    if not np.any(var > 0):
        raise AllocationError("cannot allocate bits: all variances are zero")
    for _ in range(budget):
        j = int(np.argmax(var))  # argmax takes the lowest index on ties
        bits[j] += 1
        var[j] /= 4.0
    return BitAllocation(bits, segment_bits)


@dataclass
class Lloyd1D:
    """Trained 1-D quantizer for one dimension.

    boundaries has one more entry than centroids; the outermost boundaries
    sit at the training data min and max. degraded is set when the data had
    fewer distinct values than requested cells.
    """

    boundaries: np.ndarray
    centroids: np.ndarray
    objective_trace: list = field(default_factory=list)
    degraded: bool = False

    @property
    def cells(self) -> int:
        return self.centroids.shape[0]


def lloyd_1d(
    values: np.ndarray, cells: int, max_iter: int = 100, tol: float = 1e-7
) -> Lloyd1D:
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise InsufficientDataError("cannot train a quantizer on no data")
    if cells < 1:
        raise CapacityError("cell count must be at least 1")
    xs = np.sort(x)
    distinct = np.unique(xs)
    degraded = distinct.size < cells
    if degraded:
        cells = distinct.size
    if cells == 1:
        c = np.array([x.mean()])
        b = np.array([xs[0], xs[-1]])
        return Lloyd1D(b, c, [float(((x - c[0]) ** 2).sum())], degraded)

    # Quantile-spaced init, deduplicated against heavy ties; refill from
    # distinct values so we always start with the requested cell count.
    centroids = np.quantile(xs, (np.arange(cells) + 0.5) / cells)
    centroids = np.unique(centroids)
    while centroids.size < cells:
        pool = np.setdiff1d(distinct, centroids)
        centroids = np.sort(np.append(centroids, pool[0]))

    prefix = np.concatenate(([0.0], np.cumsum(xs)))
    sq_prefix = np.concatenate(([0.0], np.cumsum(xs * xs)))
    trace = []
    for _ in range(max_iter):
        mids = (centroids[:-1] + centroids[1:]) / 2.0
        # cuts[i] = first index belonging to cell i+1
        cuts = np.searchsorted(xs, mids, side="left")
        lo = np.concatenate(([0], cuts))
        hi = np.concatenate((cuts, [xs.size]))
        counts = hi - lo
        sums = prefix[hi] - prefix[lo]
        new = np.where(counts > 0, sums / np.maximum(counts, 1), centroids)
        # Objective under the assignment implied by current centroids.
        sq = sq_prefix[hi] - sq_prefix[lo]
        obj = float(np.sum(sq - 2 * new * sums + counts * new * new))
        trace.append(obj)
        shift = float(np.max(np.abs(new - centroids)))
        centroids = new
        if shift < tol:
            break
    centroids = np.sort(centroids)
    boundaries = np.concatenate(
        ([xs[0]], (centroids[:-1] + centroids[1:]) / 2.0, [xs[-1]])
    )
    return Lloyd1D(boundaries, centroids, trace, degraded)


def assign_cells(values: np.ndarray, boundaries: np.ndarray) -> np.ndarray:
    """Map values to cell indices under the package-wide clamping rule."""
    b = np.asarray(boundaries, dtype=np.float64)
    cells = b.size - 1
    idx = np.searchsorted(b, np.asarray(values, dtype=np.float64), side="right") - 1
    return np.clip(idx, 0, cells - 1).astype(np.int64)


def quantize_matrix(vectors: np.ndarray, quantizers: Sequence[Lloyd1D]) -> np.ndarray:
    x = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    if x.shape[1] != len(quantizers):
        raise CapacityError("one quantizer per dimension required")
    codes = np.empty(x.shape, dtype=np.int64)
    for j, q in enumerate(quantizers):
        codes[:, j] = assign_cells(x[:, j], q.boundaries)
    return codes


@dataclass
class AttributeQIndex:
    """Quantized attribute table shared by all partitions.

    boundary_table is the padded (max_cells + 1, a_count) float64 matrix of
    cell edges; rows past a column's live range hold +inf. codes holds each
    row's cell per attribute. Categorical attributes store their sorted
    label list in cat_maps and use lexicographic cell order.
    """

    boundary_table: np.ndarray
    codes: np.ndarray          # (n, A) int32
    cells: np.ndarray          # live cell count per attribute
    kinds: list
    cat_maps: list             # sorted label array per categorical attr, else None
    boundaries: list           # unpadded per-attribute boundary arrays (numeric)
    degraded: np.ndarray

    @property
    def n(self) -> int:
        return self.codes.shape[0]

    @property
    def a_count(self) -> int:
        return self.codes.shape[1]

    @property
    def max_cells(self) -> int:
        return int(self.cells.max()) if self.cells.size else 0


def empty_attribute_index(n: int) -> AttributeQIndex:
    """Index for a dataset with no attributes; every filter passes."""
    return AttributeQIndex(
        np.full((1, 0), np.inf),
        np.zeros((n, 0), dtype=np.int32),
        np.zeros(0, dtype=np.int64),
        [],
        [],
        [],
        np.zeros(0, dtype=bool),
    )


def quantize_attributes(
    attrs: AttributeTable, cells: int = 16, max_iter: int = 100
) -> AttributeQIndex:
    """Build the shared attribute index with up to `cells` cells per attribute.

    Numeric columns get Lloyd-trained cells (fewer when the column has fewer
    distinct values). Categorical columns get one cell per distinct label and
    refuse budgets smaller than that.
    """
    if cells < 1:
        raise CapacityError("cell budget must be at least 1")
    n, a = attrs.n, attrs.a_count
    code_cols = []
    cell_counts = []
    cat_maps = []
    bnds = []
    degraded = []
    for i in range(a):
        col = attrs.columns[i]
        if attrs.kinds[i] == NUMERIC:
            q = lloyd_1d(col, cells, max_iter=max_iter)
            code_cols.append(assign_cells(col, q.boundaries).astype(np.int32))
            cell_counts.append(q.cells)
            cat_maps.append(None)
            bnds.append(q.boundaries)
            degraded.append(q.degraded)
        else:
            labels = np.unique(col.astype(str))
            if labels.size > cells:
                raise CapacityError(
                    f"attribute {i}: {labels.size} labels exceed the {cells}-cell budget"
                )
            code_cols.append(np.searchsorted(labels, col.astype(str)).astype(np.int32))
            cell_counts.append(int(labels.size))
            cat_maps.append(labels)
            bnds.append(None)
            degraded.append(False)
    cell_counts = np.asarray(cell_counts, dtype=np.int64)
    m = int(cell_counts.max())
    table = np.full((m + 1, a), np.inf, dtype=np.float64)
    for i in range(a):
        if bnds[i] is not None:
            table[: bnds[i].size, i] = bnds[i]
    return AttributeQIndex(
        table,
        np.column_stack(code_cols).astype(np.int32),
        cell_counts,
        list(attrs.kinds),
        cat_maps,
        bnds,
        np.asarray(degraded, dtype=bool),
    )
