import numpy as np
import pytest

from segann.dataset import (
    AttributeTable,
    PredicateClause,
    QueryPredicate,
    predicate_mask,
)
from segann.errors import PredicateError
from segann.hybridfilter import (
    build_lookup,
    clause_cell_column,
    filter_mask,
    filter_masks,
    quantized_predicate_mask,
)
from segann.quantizer import AttributeQIndex, assign_cells, quantize_attributes


def numeric_index(bounds, values):
    """Single numeric attribute with hand-chosen cell edges."""
    bounds = np.asarray(bounds, dtype=np.float64)
    codes = assign_cells(np.asarray(values, dtype=np.float64), bounds)
    return AttributeQIndex(
        bounds[:, None].copy(),
        codes.astype(np.int32)[:, None],
        np.array([bounds.size - 1], dtype=np.int64),
        ["numeric"],
        [None],
        [bounds],
        np.array([False]),
    )


BOUNDS = [0.0, 5.0, 10.0, 15.0, 20.0]  # four cells


class TestNumericCellSemantics:
    # a cell passes only when every value it can hold passes

    @pytest.mark.parametrize(
        "op,operand,expect",
        [
            ("<", 15.0, [1, 1, 1, 0]),
            ("<", 20.0, [1, 1, 1, 0]),   # last cell is closed at 20
            ("<", 21.0, [1, 1, 1, 1]),
            ("<=", 10.0, [1, 1, 0, 0]),
            ("<=", 20.0, [1, 1, 1, 1]),
            (">", 5.0, [0, 0, 1, 1]),
            (">", -1.0, [1, 1, 1, 1]),
            (">=", 5.0, [0, 1, 1, 1]),
            (">=", 0.0, [1, 1, 1, 1]),
        ],
    )
    def test_one_sided(self, op, operand, expect):
        idx = numeric_index(BOUNDS, [])
        col = clause_cell_column(idx, 0, PredicateClause(op, operand))
        assert col.tolist() == expect

    @pytest.mark.parametrize(
        "lo,hi,expect",
        [
            (5.0, 10.0, [0, 1, 0, 0]),
            (0.0, 20.0, [1, 1, 1, 1]),
            (5.0, 20.0, [0, 1, 1, 1]),
            (7.0, 12.0, [0, 0, 0, 0]),  # no whole cell fits inside
        ],
    )
    def test_between_inclusive(self, lo, hi, expect):
        idx = numeric_index(BOUNDS, [])
        col = clause_cell_column(idx, 0, PredicateClause("between", lo, hi))
        assert col.tolist() == expect

    @pytest.mark.parametrize(
        "operand,expect",
        [
            (12.0, [0, 0, 1, 0]),  # containing cell only
            (0.0, [1, 0, 0, 0]),
            (20.0, [0, 0, 0, 1]),  # right edge belongs to the last cell
            (5.0, [0, 1, 0, 0]),   # interior edge belongs to the upper cell
            (25.0, [0, 0, 0, 0]),
            (-1.0, [0, 0, 0, 0]),
        ],
    )
    def test_equality_marks_containing_cell(self, operand, expect):
        idx = numeric_index(BOUNDS, [])
        col = clause_cell_column(idx, 0, PredicateClause("=", operand))
        assert col.tolist() == expect


class TestCategorical:
    def index(self):
        attrs = AttributeTable(
            [np.array(["bee", "ant", "cat", "bee"])], ["categorical"]
        )
        return quantize_attributes(attrs, cells=8)

    def test_equality_hits_one_lexicographic_cell(self):
        idx = self.index()
        col = clause_cell_column(idx, 0, PredicateClause("=", "bee"))
        assert col.tolist() == [0, 1, 0]

    def test_unknown_label_matches_nothing(self):
        idx = self.index()
        col = clause_cell_column(idx, 0, PredicateClause("=", "dog"))
        assert col.tolist() == [0, 0, 0]

    def test_range_operator_rejected(self):
        idx = self.index()
        with pytest.raises(PredicateError):
            clause_cell_column(idx, 0, PredicateClause("<", "bee"))


class TestLookupTable:
    def test_shape_and_padding(self):
        attrs = AttributeTable(
            [
                np.linspace(0.0, 99.0, 200),
                np.array(["a", "b", "c"] * 66 + ["a", "a"]),
            ],
            ["numeric", "categorical"],
        )
        idx = quantize_attributes(attrs, cells=16)
        assert idx.cells.tolist() == [16, 3]
        preds = [
            QueryPredicate(((0, PredicateClause("<", 50.0)),)),
            QueryPredicate(),
        ]
        lookup = build_lookup(idx, preds)
        assert lookup.table.shape == (17, 2, 2)
        # rows past the categorical column's 3 live cells stay zero
        assert not lookup.table[3:, 1, :].any()
        # the unconstrained query sets every live cell on both attributes
        assert lookup.table[:16, 0, 1].all() and lookup.table[:3, 1, 1].all()

    def test_unconstrained_attribute_filters_nothing(self):
        vals = np.array([1.0, 6.0, 11.0, 16.0])
        idx = numeric_index(BOUNDS, vals)
        mask = quantized_predicate_mask(idx, QueryPredicate())
        assert mask.all()


class TestFilterMask:
    def test_hand_example(self):
        vals = np.array([0.0, 3.0, 5.0, 9.0, 12.0, 15.0, 19.0, 20.0])
        idx = numeric_index(BOUNDS, vals)
        pred = QueryPredicate(((0, PredicateClause("<", 15.0)),))
        mask = quantized_predicate_mask(idx, pred)
        # cells 0..2 pass: raw values below 10 plus none from [10,15) ... but
        # 12 sits in cell 2 which passes wholly under < 15
        assert mask.tolist() == [True] * 5 + [False] * 3

    def test_conjunction_is_intersection(self):
        rng = np.random.default_rng(3)
        attrs = AttributeTable(
            [rng.uniform(0, 100, 500), rng.uniform(0, 100, 500)],
            ["numeric", "numeric"],
        )
        idx = quantize_attributes(attrs, cells=16)
        a = QueryPredicate(((0, PredicateClause("<", 50.0)),))
        b = QueryPredicate(((1, PredicateClause(">=", 30.0)),))
        both = QueryPredicate(tuple(a.clauses + b.clauses))
        m = quantized_predicate_mask
        assert np.array_equal(m(idx, both), m(idx, a) & m(idx, b))

    def test_batch_matches_single(self):
        rng = np.random.default_rng(4)
        attrs = AttributeTable([rng.uniform(0, 100, 300)], ["numeric"])
        idx = quantize_attributes(attrs, cells=8)
        preds = [
            QueryPredicate(((0, PredicateClause(op, 40.0)),))
            for op in ("<", "<=", ">", ">=")
        ]
        lookup = build_lookup(idx, preds)
        batch = filter_masks(idx, lookup)
        for q in range(len(preds)):
            assert np.array_equal(batch[q], filter_mask(idx, lookup, q))

    def test_edge_aligned_operands_match_raw_oracle(self):
        # "<" and ">=" at a trained edge split the data exactly along whole
        # cells, and "between" over edges covers [lo, hi) cell-exactly; for
        # these shapes the conservative rule agrees with raw evaluation
        rng = np.random.default_rng(12)
        attrs = AttributeTable(
            [rng.uniform(0, 100, 2000), rng.uniform(-5, 5, 2000)],
            ["numeric", "numeric"],
        )
        idx = quantize_attributes(attrs, cells=16)
        for trial in range(200):
            clauses = []
            for a in range(2):
                edges = idx.boundaries[a]
                op = ["<", ">=", "between"][trial % 3]
                if op == "between":
                    lo, hi = sorted(rng.choice(edges, size=2, replace=False))
                    clauses.append((a, PredicateClause(op, float(lo), float(hi))))
                else:
                    x = float(rng.choice(edges[1:-1]))
                    clauses.append((a, PredicateClause(op, x)))
            pred = QueryPredicate(tuple(clauses))
            got = quantized_predicate_mask(idx, pred)
            want = predicate_mask(attrs, pred)
            assert np.array_equal(got, want), pred.canonical()

    def test_range_masks_never_admit_false_rows(self):
        # arbitrary (non-aligned) operands: whole-cell semantics may drop
        # borderline rows but must never pass a row the raw clause rejects
        rng = np.random.default_rng(14)
        attrs = AttributeTable(
            [rng.uniform(0, 100, 1500), rng.uniform(-5, 5, 1500)],
            ["numeric", "numeric"],
        )
        idx = quantize_attributes(attrs, cells=16)
        ops = ["<", "<=", ">", ">=", "between"]
        for trial in range(150):
            clauses = []
            for a in range(2):
                lo, hi = sorted(rng.uniform(*((0, 100) if a == 0 else (-5, 5)), 2))
                op = ops[(trial + a) % 5]
                if op == "between":
                    clauses.append((a, PredicateClause(op, lo, hi)))
                else:
                    clauses.append((a, PredicateClause(op, lo)))
            pred = QueryPredicate(tuple(clauses))
            got = quantized_predicate_mask(idx, pred)
            want = predicate_mask(attrs, pred)
            assert not (got & ~want).any(), pred.canonical()

    def test_equality_mask_is_superset_of_raw(self):
        rng = np.random.default_rng(13)
        col = rng.uniform(0, 100, 1000).round(0)
        attrs = AttributeTable([col], ["numeric"])
        idx = quantize_attributes(attrs, cells=16)
        for x in (0.0, 17.0, 50.0, 99.0):
            pred = QueryPredicate(((0, PredicateClause("=", x)),))
            got = quantized_predicate_mask(idx, pred)
            want = predicate_mask(attrs, pred)
            assert not (want & ~got).any()  # never drops a true match
