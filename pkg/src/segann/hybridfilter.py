"""Attribute filtering over quantized cells.

A clause is resolved at cell granularity, conservatively: a cell counts as
satisfying only when every raw value it can hold satisfies the clause. The
single exception is numeric equality, which marks the one cell containing
the operand (a cell-level over-approximation; exactness is restored at
refinement for workloads that need it).

Cells follow the package-wide convention: [v_c, v_{c+1}) for all but the
last cell, which is closed on the right. Per query, per attribute, the
satisfaction column is combined into a row filter with progressive
bitwise AND over the code matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import CATEGORICAL, PredicateClause, QueryPredicate
from .errors import PredicateError
from .quantizer import AttributeQIndex


@dataclass
class SatisfactionLookup:
    """(max_cells + 1, a_count, n_queries) 0/1 table.

    Entry [c, a, q] says whether cell c of attribute a satisfies query q's
    clause on that attribute. Rows past an attribute's live cell count stay
    zero. Attributes without a clause have every live cell set.
    """

    table: np.ndarray

    @property
    def n_queries(self) -> int:
        return self.table.shape[2]


def clause_cell_column(
    index: AttributeQIndex, attr: int, clause: PredicateClause
) -> np.ndarray:
    """0/1 satisfaction over the live cells of one attribute."""
    c = int(index.cells[attr])
    if index.kinds[attr] == CATEGORICAL:
        if clause.op != "=":
            raise PredicateError(
                f"operator {clause.op!r} is not defined for categorical attributes"
            )
        col = np.zeros(c, dtype=np.uint8)
        labels = index.cat_maps[attr]
        pos = np.searchsorted(labels, str(clause.operand))
        if pos < labels.size and labels[pos] == str(clause.operand):
            col[pos] = 1
        return col

    bounds = index.boundaries[attr]
    lows = bounds[:-1]
    highs = bounds[1:]
    x = float(clause.operand)
    if clause.op == "<":
        col = highs <= x
        col[-1] = bounds[-1] < x
    elif clause.op == "<=":
        col = highs <= x
        col[-1] = bounds[-1] <= x
    elif clause.op == ">":
        col = lows > x
    elif clause.op == ">=":
        col = lows >= x
    elif clause.op == "=":
        col = np.zeros(c, dtype=bool)
        if bounds[0] <= x <= bounds[-1]:
            cell = int(np.clip(np.searchsorted(bounds, x, side="right") - 1, 0, c - 1))
            col[cell] = True
    else:  # between, inclusive both ends
        hi = float(clause.operand_high)
        upper = highs <= hi
        upper[-1] = bounds[-1] <= hi
        col = (lows >= x) & upper
    return col.astype(np.uint8)


def build_lookup(
    index: AttributeQIndex, predicates: Sequence[QueryPredicate]
) -> SatisfactionLookup:
    m = index.max_cells
    a = index.a_count
    table = np.zeros((m + 1, a, len(predicates)), dtype=np.uint8)
    for qi, pred in enumerate(predicates):
        clauses = dict(pred.clauses)
        for attr in range(a):
            live = int(index.cells[attr])
            if attr in clauses:
                table[:live, attr, qi] = clause_cell_column(index, attr, clauses[attr])
            else:
                table[:live, attr, qi] = 1
    return SatisfactionLookup(table)


def filter_mask(
    index: AttributeQIndex, lookup: SatisfactionLookup, query: int
) -> np.ndarray:
    """Row filter for one query: AND of per-attribute cell satisfaction."""
    mask = np.ones(index.n, dtype=bool)
    for attr in range(index.a_count):
        col = lookup.table[:, attr, query]
        if col[: int(index.cells[attr])].all():
            continue  # unconstrained attribute, nothing to narrow
        mask &= col[index.codes[:, attr]].astype(bool)
        if not mask.any():
            break
    return mask


def filter_masks(
    index: AttributeQIndex, lookup: SatisfactionLookup
) -> np.ndarray:
    """(n_queries, n) boolean filter matrix."""
    out = np.empty((lookup.n_queries, index.n), dtype=bool)
    for q in range(lookup.n_queries):
        out[q] = filter_mask(index, lookup, q)
    return out


def quantized_predicate_mask(
    index: AttributeQIndex, predicate: QueryPredicate
) -> np.ndarray:
    """Convenience wrapper: mask for a single ad-hoc predicate."""
    lookup = build_lookup(index, [predicate])
    return filter_mask(index, lookup, 0)
