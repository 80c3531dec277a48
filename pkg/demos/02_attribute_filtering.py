"""
Predicate filtering through quantized attribute cells
=====================================================

Attributes are bucketed into a small number of cells per column. A query
predicate is answered per cell, not per row, through a lookup table that
is tiny next to the data. Filters whose operands sit on cell edges are
exact; arbitrary operands stay conservative for range operators, never
admitting a row the raw predicate rejects, so every returned result
genuinely satisfies the filter.
"""

import numpy as np

from segann import generate_attributes
from segann.dataset import PredicateClause, QueryPredicate, predicate_mask
from segann.hybridfilter import quantized_predicate_mask
from segann.quantizer import quantize_attributes

n = 5000
attrs = generate_attributes(n, 3, seed=42, kinds=["numeric", "numeric", "categorical"])
index = quantize_attributes(attrs, cells=16)

print("columns:", attrs.a_count, "kinds:", list(attrs.kinds))
print("cells per column:", index.cells.tolist())

# cell boundaries for column 0; operands on these edges filter exactly
edges = index.boundaries[0]
print("column 0 edges:", np.round(edges, 3).tolist())

cut = float(edges[5])
pred = QueryPredicate(((0, PredicateClause("<", cut)),))
got = quantized_predicate_mask(index, pred)
want = predicate_mask(attrs, pred)
print("edge-aligned '<' filter: quantized == raw?", bool(np.array_equal(got, want)))
print("  rows kept:", int(got.sum()), "of", n)

# conjunction with a categorical pin
labels = np.unique(attrs.columns[2])
pred2 = QueryPredicate(
    (
        (0, PredicateClause(">=", float(edges[2]))),
        (2, PredicateClause("=", str(labels[0]))),
    )
)
got2 = quantized_predicate_mask(index, pred2)
want2 = predicate_mask(attrs, pred2)
print("conjunction (numeric >= edge AND label =):",
      "exact" if np.array_equal(got2, want2) else "superset")
print("  rows kept:", int(got2.sum()))

# an arbitrary operand lands mid-cell: the straddling cell is rejected
# whole, so some passing rows go missing but no failing row sneaks in
arbitrary = float((edges[3] + edges[4]) / 2)
pred3 = QueryPredicate(((0, PredicateClause("<", arbitrary)),))
got3 = quantized_predicate_mask(index, pred3)
want3 = predicate_mask(attrs, pred3)
dropped = np.logical_and(want3, ~got3).sum()
admitted = np.logical_and(got3, ~want3).sum()
print("mid-cell '<' filter: borderline rows dropped:", int(dropped),
      "| failing rows admitted:", int(admitted))
assert admitted == 0
