import numpy as np
import pytest

from segann.dataset import ResultSet
from segann.errors import CapacityError
from segann.osq import pack_codes, pack_signs, sign_allocation
from segann.quantizer import (
    BitAllocation,
    Lloyd1D,
    allocate_bits,
    lloyd_1d,
    quantize_matrix,
)
from segann.search import (
    PartitionPlan,
    build_adc_table,
    centroid_ratios,
    hamming_prune,
    lower_bounds,
    merge_results,
    rebalance_plan,
    select_partitions,
)


def quantizer(bounds):
    b = np.asarray(bounds, dtype=np.float64)
    return Lloyd1D(b, (b[:-1] + b[1:]) / 2.0)


class TestAdcTable:
    def test_frozen_edge_distances(self):
        # three cells [0,5) [5,10) [10,15]; query 7 sits in the middle one
        t = build_adc_table(np.array([7.0]), [quantizer([0, 5, 10, 15])])
        assert t.values[:3, 0].tolist() == [4.0, 0.0, 9.0]
        assert np.isinf(t.values[3, 0])

    def test_query_below_range(self):
        t = build_adc_table(np.array([-1.0]), [quantizer([0, 5, 10, 15])])
        assert t.values[:3, 0].tolist() == [0.0, 36.0, 121.0]

    def test_query_above_range(self):
        t = build_adc_table(np.array([20.0]), [quantizer([0, 5, 10, 15])])
        assert t.values[:3, 0].tolist() == [225.0, 100.0, 0.0]

    def test_mixed_cell_counts_padded(self):
        t = build_adc_table(
            np.array([7.0, 0.5]),
            [quantizer([0, 5, 10, 15]), quantizer([0, 1])],
        )
        assert t.values.shape == (4, 2)
        assert t.values[1:, 1].tolist() == [np.inf] * 3

    def test_dim_mismatch_rejected(self):
        with pytest.raises(CapacityError):
            build_adc_table(np.zeros(2), [quantizer([0, 1])])


class TestLowerBounds:
    def setup_instance(self, n=400, d=6, seed=0):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(n, d)) * np.linspace(3, 0.5, d)
        alloc = allocate_bits(x.var(axis=0), budget=3 * d)
        qz = [lloyd_1d(x[:, j], int(c)) for j, c in enumerate(alloc.cells)]
        codes = quantize_matrix(x, qz)
        matrix = pack_codes(codes, alloc)
        return x, alloc, qz, codes, matrix

    def test_table_matches_direct_sum(self):
        x, alloc, qz, codes, matrix = self.setup_instance()
        rng = np.random.default_rng(1)
        for _ in range(25):
            q = rng.normal(size=x.shape[1]) * 2
            t = build_adc_table(q, qz)
            got = lower_bounds(t, matrix, alloc)
            want = t.values[codes, np.arange(x.shape[1])].sum(axis=1)
            assert np.allclose(got, want, rtol=0, atol=1e-9)

    def test_bounds_never_exceed_true_distance(self):
        x, alloc, qz, codes, matrix = self.setup_instance(n=500)
        rng = np.random.default_rng(2)
        checked = 0
        for _ in range(20):
            q = rng.normal(size=x.shape[1]) * 3
            t = build_adc_table(q, qz)
            lb = lower_bounds(t, matrix, alloc)
            exact = ((x - q) ** 2).sum(axis=1)
            assert (lb <= exact + 1e-9).all()
            checked += x.shape[0]
        assert checked == 10000

    def test_row_subset_selection(self):
        x, alloc, qz, codes, matrix = self.setup_instance()
        q = np.zeros(x.shape[1])
        t = build_adc_table(q, qz)
        full = lower_bounds(t, matrix, alloc)
        rows = np.array([5, 17, 399])
        assert np.array_equal(lower_bounds(t, matrix, alloc, rows), full[rows])
        mask = np.zeros(x.shape[0], dtype=bool)
        mask[rows] = True
        assert np.array_equal(lower_bounds(t, matrix, alloc, mask), full[rows])


class TestCentroidRatios:
    def test_nearest_is_one(self):
        c = np.array([[0.0, 0.0], [3.0, 4.0], [6.0, 8.0]])
        # query exactly on a centroid: that one reads 1, the rest infinite
        r = centroid_ratios(np.array([0.0, 0.0]), c)
        assert r[0] == 1.0
        assert np.isinf(r[1]) and np.isinf(r[2])

    def test_off_centroid_ratios(self):
        c = np.array([[0.0, 0.0], [10.0, 0.0]])
        r = centroid_ratios(np.array([2.0, 0.0]), c)
        assert r.tolist() == [1.0, 4.0]


class TestSelectPartitions:
    def make(self, seed=0, n=300, p=5, nq=12, d=4):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(n, d))
        assignment = rng.integers(0, p, n)
        members = [np.flatnonzero(assignment == i).astype(np.int64) for i in range(p)]
        centroids = np.stack([x[m].mean(axis=0) for m in members])
        queries = rng.normal(size=(nq, d))
        masks = rng.random((nq, n)) < 0.3
        return x, members, centroids, queries, masks

    def test_gathers_at_least_k_when_available(self):
        _, members, centroids, queries, masks = self.make()
        k = 10
        plan = select_partitions(queries, masks, centroids, members, 1.05, k)
        for qi in range(queries.shape[0]):
            available = int(masks[qi].sum())
            gathered = sum(
                int(masks[qi][members[pi]].sum())
                for pi in range(len(members))
                if plan.visited[qi, pi]
            )
            assert gathered >= min(k, available)

    def test_within_threshold_always_visited(self):
        _, members, centroids, queries, masks = self.make(seed=3)
        plan = select_partitions(queries, masks, centroids, members, 1.5, 1)
        for qi in range(queries.shape[0]):
            for pi in range(len(members)):
                nonempty = masks[qi][members[pi]].any()
                if plan.ratios[qi, pi] <= 1.5 and nonempty:
                    assert plan.visited[qi, pi]
                if not nonempty:
                    assert not plan.visited[qi, pi]

    def test_per_query_budgets(self):
        _, members, centroids, queries, masks = self.make(seed=4)
        ks = np.arange(1, queries.shape[0] + 1)
        plan = select_partitions(queries, masks, centroids, members, 1.0, ks)
        for qi, k in enumerate(ks):
            gathered = sum(
                int(masks[qi][members[pi]].sum())
                for pi in range(len(members))
                if plan.visited[qi, pi]
            )
            assert gathered >= min(int(k), int(masks[qi].sum()))

    def test_visit_masks_are_partition_local(self):
        _, members, centroids, queries, masks = self.make(seed=5)
        plan = select_partitions(queries, masks, centroids, members, 1.2, 3)
        for pi, visit_list in plan.visits.items():
            for qi, local in visit_list:
                assert local.shape[0] == members[pi].shape[0]
                assert np.array_equal(local, masks[qi][members[pi]])


class TestRebalance:
    def hand_plan(self, ratios, threshold):
        r = np.asarray(ratios, dtype=np.float64)[:, None]
        return PartitionPlan(
            visits={0: []},
            ratios=r,
            visited=np.zeros((r.shape[0], 1), dtype=bool),
            threshold=threshold,
        )

    def test_frozen_topup_order(self):
        # four pruned queries; target 2 takes the two least-pruned ones
        plan = self.hand_plan([1.31, 3.0, 1.4, 2.0], threshold=1.3)
        masks = np.ones((4, 10), dtype=bool)
        members = [np.arange(10, dtype=np.int64)]
        added = rebalance_plan(plan, masks, members, target=2)
        assert added == 2
        assert [qi for qi, _ in plan.visits[0]] == [0, 2]
        assert plan.visited[0, 0] and plan.visited[2, 0]

    def test_below_threshold_queries_not_eligible(self):
        plan = self.hand_plan([1.1, 1.6], threshold=1.3)
        masks = np.ones((2, 4), dtype=bool)
        members = [np.arange(4, dtype=np.int64)]
        added = rebalance_plan(plan, masks, members, target=2)
        assert added == 1
        assert [qi for qi, _ in plan.visits[0]] == [1]

    def test_empty_candidate_sets_skipped(self):
        plan = self.hand_plan([1.35, 1.5], threshold=1.3)
        masks = np.array([[False] * 4, [True] * 4])
        members = [np.arange(4, dtype=np.int64)]
        added = rebalance_plan(plan, masks, members, target=1)
        assert added == 1
        assert [qi for qi, _ in plan.visits[0]] == [1]

    def test_never_removes_existing_visits(self):
        plan = self.hand_plan([1.4, 1.5], threshold=1.3)
        existing = (7, np.ones(3, dtype=bool))
        plan.visits[0].append(existing)
        masks = np.ones((2, 3), dtype=bool)
        members = [np.arange(3, dtype=np.int64)]
        rebalance_plan(plan, masks, members, target=2)
        assert plan.visits[0][0] is existing
        assert len(plan.visits[0]) == 2

    def test_full_partitions_untouched(self):
        plan = self.hand_plan([1.4], threshold=1.3)
        plan.visits[0] = [(5, np.ones(2, dtype=bool)), (6, np.ones(2, dtype=bool))]
        added = rebalance_plan(plan, np.ones((1, 2), bool), [np.arange(2)], target=2)
        assert added == 0


class TestHammingPrune:
    def sketch_for(self, signs):
        return pack_signs(np.asarray(signs, dtype=np.float64), 8)

    def test_keep_count_is_ceiling(self):
        rng = np.random.default_rng(0)
        sk = self.sketch_for(rng.normal(size=(25, 9)))
        ids = np.arange(25, dtype=np.int64)
        q = pack_signs(rng.normal(size=(1, 9)), 8).segments[0]
        kept = hamming_prune(np.arange(25), ids, sk, q, keep_percent=10.0)
        assert kept.size == 3  # ceil(25 * 0.10)

    def test_ties_prefer_lower_global_id(self):
        # rows 0..3 all at Hamming distance 0; row 4 farther away
        rows = np.array([[1, 1], [1, 1], [1, 1], [1, 1], [-1, -1]], dtype=float)
        sk = self.sketch_for(rows)
        q = pack_signs(np.array([[1.0, 1.0]]), 8).segments[0]
        ids = np.array([40, 10, 30, 20, 5], dtype=np.int64)
        kept = hamming_prune(np.arange(5), ids, sk, q, keep_percent=60.0)
        assert ids[kept].tolist() == [10, 20, 30]

    def test_hundred_percent_is_identity(self):
        sk = self.sketch_for(np.ones((4, 3)))
        rows = np.array([2, 0, 3])
        out = hamming_prune(rows, np.arange(4, dtype=np.int64), sk, sk.segments[0], 100.0)
        assert out is rows

    def test_empty_rows_pass_through(self):
        sk = self.sketch_for(np.ones((4, 3)))
        out = hamming_prune(
            np.empty(0, dtype=np.int64), np.arange(4), sk, sk.segments[0], 10.0
        )
        assert out.size == 0


class TestMerge:
    def test_distance_then_id_order(self):
        a = ResultSet(np.array([7, 3]), np.array([0.5, 1.0]))
        b = ResultSet(np.array([1, 9]), np.array([1.0, 0.2]))
        out = merge_results([a, b], k=3)
        assert out.ids.tolist() == [9, 7, 1]
        assert out.distances.tolist() == [0.2, 0.5, 1.0]

    def test_tie_on_distance_takes_lower_id(self):
        a = ResultSet(np.array([12]), np.array([1.0]))
        b = ResultSet(np.array([4]), np.array([1.0]))
        out = merge_results([a, b], k=1)
        assert out.ids.tolist() == [4]

    def test_k_beyond_total_returns_everything(self):
        a = ResultSet(np.array([2, 1]), np.array([0.1, 0.9]))
        out = merge_results([a], k=10)
        assert len(out) == 2

    def test_no_parts(self):
        out = merge_results([], k=5)
        assert len(out) == 0
