"""Relational training: grouped statistics, split selection, boosting,
sketched residual norms, and query counting."""

import numpy as np
import pytest

from conftest import (
    direct_residual_sketch,
    grouped_fold,
    random_instance,
    three_row_example,
    two_table_example,
)
from relboost import (
    Dataset,
    Ensemble,
    Interval,
    RegressionTree,
    ensembles_equal,
    make_table,
    serialize,
    trees_equal,
)
from relboost.cli import _annotate_log, _closed_form_counts
from relboost.oracle import ssr_oracle, train_boosted_oracle, train_tree_oracle
from relboost.sketch import SketchHashes
from relboost.trainer import (
    PHASE_LEAF,
    PHASE_PAIR,
    PHASE_SKETCH,
    PHASE_STATS,
    QueryCounter,
    TrainConfig,
    approx_residual_sq,
    best_split_boosted,
    best_split_single,
    cross_pair_sums,
    leaf_sum_queries,
    node_statistics,
    residual_node_statistics,
    residual_sq_exact,
    sketch_residual_vectors,
    train_boosted,
    train_tree,
)


class TestNodeStatistics:
    def test_single_table_root(self):
        ds = three_row_example()
        st = node_statistics(ds, {}, 0)
        np.testing.assert_array_equal(st.count, [1, 1, 1])
        np.testing.assert_array_equal(st.target_sum, [1, 2, 10])
        np.testing.assert_array_equal(st.target_sq, [1, 4, 100])

    def test_two_table_counts(self):
        t1 = make_table("T1", ["a", "b"], [(1, 1), (2, 2)])
        t2 = make_table("T2", ["b", "y"], [(1, 3), (1, 4), (2, 5)])
        ds = Dataset([t1, t2], "y")
        st = node_statistics(ds, {}, 0)
        dm = ds.materialize()
        y = dm.columns.index("y")
        np.testing.assert_array_equal(st.count, grouped_fold(dm, 0, 2, lambda r: 1.0))
        np.testing.assert_allclose(st.target_sum, grouped_fold(dm, 0, 2, lambda r: r[y]))
        np.testing.assert_array_equal(st.count, [2, 1])

    def test_excluding_constraint_zeroes_stats(self):
        ds = three_row_example()
        st = node_statistics(ds, {"f": Interval(100.0, 200.0)}, 0)
        assert st.count.sum() == 0
        assert st.target_sum.sum() == 0
        assert st.target_sq.sum() == 0

    def test_cauchy_schwarz_per_row(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            ds = random_instance(rng, max_rows=15, max_join=2000)
            for i in range(ds.n_tables):
                st = node_statistics(ds, {}, i)
                slack = 1e-9 * np.maximum(1.0, st.target_sq * st.count)
                assert np.all(st.count * st.target_sq - st.target_sum**2 >= -slack)
                empty = st.count == 0
                assert np.all(st.target_sum[empty] == 0)
                assert np.all(st.target_sq[empty] == 0)


class TestBestSplitSingle:
    def test_three_row_frozen_values(self):
        # threshold 3: left {1,2} gives 0.5, right {10} gives 0; threshold 2
        # gives 0 + 32; the winner is (f, 3) with total SSE 0.5
        ds = three_row_example()
        stats = {0: node_statistics(ds, {}, 0)}
        choice = best_split_single(ds, stats)
        assert choice.feature == "f"
        assert choice.threshold == 3.0
        assert choice.objective == pytest.approx(0.5, rel=1e-12)
        assert (choice.pred_left, choice.pred_right) == (1.5, 10.0)

    def test_constant_labels_give_no_improvement(self):
        t = make_table("R", ["f", "y"], [(1, 5), (2, 5), (3, 5)])
        ds = Dataset([t], "y")
        stats = {0: node_statistics(ds, {}, 0)}
        choice = best_split_single(ds, stats)
        # a candidate may exist, but it cannot beat zero SSE
        if choice is not None:
            assert choice.objective == pytest.approx(0.0, abs=1e-9)

    def test_tie_breaks_lexicographically(self):
        # two identical features; the split must name the first column
        t = make_table("R", ["f1", "f2", "y"], [(1, 1, 1), (2, 2, 2)])
        ds = Dataset([t], "y")
        choice = best_split_single(ds, {0: node_statistics(ds, {}, 0)})
        assert choice.feature == "f1"

    def test_matches_exhaustive_enumeration(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            ds = random_instance(rng, max_rows=12, max_join=2000)
            dm = ds.materialize()
            stats = {i: node_statistics(ds, {}, i) for i in range(ds.n_tables)}
            choice = best_split_single(ds, stats)
            # independent enumeration over the materialized join
            y = dm.column("y")
            best = None
            for t_idx, pos, name in ds.split_features():
                col = dm.column(name)
                for alpha in np.unique(ds.tables[t_idx].column_values(pos)):
                    left = col < alpha
                    nl, nr = left.sum(), (~left).sum()
                    if nl < 1 or nr < 1:
                        continue
                    sse = float(((y[left] - y[left].mean()) ** 2).sum()) + float(
                        ((y[~left] - y[~left].mean()) ** 2).sum()
                    )
                    key = (sse, t_idx, pos, float(alpha))
                    if best is None or key < best:
                        best = key
            if choice is None:
                assert best is None
            else:
                assert choice.objective == pytest.approx(best[0], rel=1e-9, abs=1e-9)


class TestTrainTree:
    def test_single_leaf_is_global_mean(self):
        ds = three_row_example()
        tree = train_tree(ds, TrainConfig(max_leaves=1))
        assert tree.leaf_count == 1
        assert tree.nodes[0].value == pytest.approx(13.0 / 3.0)

    def test_three_row_stump(self):
        ds = three_row_example()
        tree = train_tree(ds, TrainConfig(max_leaves=2))
        root = tree.nodes[0]
        assert (root.split.feature, root.split.threshold) == ("f", 3.0)
        assert tree.nodes[root.left].value == 1.5
        assert tree.nodes[root.right].value == 10.0

    def test_matches_oracle_on_random_instances(self):
        rng = np.random.default_rng(2)
        for _ in range(12):
            ds = random_instance(rng, max_rows=25, max_join=5000)
            config = TrainConfig(max_leaves=int(rng.integers(2, 9)))
            mine = train_tree(ds, config)
            ref, _ = train_tree_oracle(ds, config)
            ok, why = trees_equal(mine, ref)
            assert ok, why

    def test_depth_cap(self):
        ds = three_row_example()
        tree = train_tree(ds, TrainConfig(max_leaves=8, max_depth=1))
        assert tree.leaf_count <= 2
        unconstrained = train_tree(ds, TrainConfig(max_leaves=8))
        assert unconstrained.leaf_count == 3


class TestLeafSumQueries:
    def test_single_leaf_scales_counts(self):
        ds = two_table_example()
        leaf = RegressionTree.single_leaf(3.0)
        np.testing.assert_allclose(
            leaf_sum_queries(ds, {}, leaf, 0, "pred"), [3.0, 3.0]
        )
        np.testing.assert_allclose(
            leaf_sum_queries(ds, {}, leaf, 0, "pred_sq"), [9.0, 9.0]
        )
        np.testing.assert_allclose(
            leaf_sum_queries(ds, {}, leaf, 0, "label_weighted"), [15.0, 15.0]
        )

    def test_stump_matches_join_sums(self):
        ds = three_row_example()
        stump = train_tree(ds, TrainConfig(max_leaves=2))
        dm = ds.materialize()
        f = dm.columns.index("f")
        y = dm.columns.index("y")

        def pred(row):
            return 1.5 if row[f] < 3.0 else 10.0

        np.testing.assert_allclose(
            leaf_sum_queries(ds, {}, stump, 0, "pred"),
            grouped_fold(dm, 0, 3, pred),
        )
        np.testing.assert_allclose(
            leaf_sum_queries(ds, {}, stump, 0, "pred_sq"),
            grouped_fold(dm, 0, 3, lambda r: pred(r) ** 2),
        )
        np.testing.assert_allclose(
            leaf_sum_queries(ds, {}, stump, 0, "label_weighted"),
            grouped_fold(dm, 0, 3, lambda r: pred(r) * r[y]),
        )


class TestCrossPairSums:
    def test_single_leaf_pair(self):
        ds = two_table_example()
        a = RegressionTree.single_leaf(2.0)
        b = RegressionTree.single_leaf(3.0)
        np.testing.assert_allclose(cross_pair_sums(ds, {}, a, b, 0), [6.0, 6.0])

    def test_two_stumps_match_join(self):
        ds = three_row_example()
        config = TrainConfig(max_leaves=2)
        t1 = train_tree(ds, config)
        ens = train_boosted(ds, TrainConfig(max_leaves=2, trees=2), 2)
        t2 = ens.trees[1]
        dm = ds.materialize()

        def prod(row):
            m = dict(zip(dm.columns, row))
            return t1.predict(m) * t2.predict(m)

        np.testing.assert_allclose(
            cross_pair_sums(ds, {}, t1, t2, 0),
            grouped_fold(dm, 0, 3, prod),
            rtol=1e-9,
        )

    def test_infeasible_pair_contributes_zero(self):
        ds = three_row_example()
        left_only = RegressionTree(
            tuple(
                [
                    RegressionTree.single_leaf(0.0).nodes[0],
                ]
            )
        )
        # trees with disjoint regions on the same feature
        from relboost.model import SplitCriterion, TreeNode

        a = RegressionTree(
            (
                TreeNode(split=SplitCriterion("f", 2.0), left=1, right=2),
                TreeNode(value=1.0),
                TreeNode(value=0.0),
            )
        )
        b = RegressionTree(
            (
                TreeNode(split=SplitCriterion("f", 2.0), left=1, right=2),
                TreeNode(value=0.0),
                TreeNode(value=1.0),
            )
        )
        # a's nonzero leaf is f < 2, b's is f >= 2: their product is zero
        np.testing.assert_allclose(cross_pair_sums(ds, {}, a, b, 0), [0.0, 0.0, 0.0])


class TestResidualSquares:
    def test_no_trees_reduces_to_label_squares(self):
        ds = two_table_example()
        np.testing.assert_array_equal(residual_sq_exact(ds, {}, (), 0), [25.0, 25.0])

    def test_hand_computed_example(self):
        # labels {2, 4}, one single-leaf tree predicting 1: residuals {1, 3}
        t = make_table("R", ["f", "y"], [(1, 2), (2, 4)])
        ds = Dataset([t], "y")
        ens = (RegressionTree.single_leaf(1.0),)
        per_row = residual_sq_exact(ds, {}, ens, 0)
        np.testing.assert_allclose(per_row, [1.0, 9.0])
        assert per_row.sum() == pytest.approx(10.0)

    def test_matches_ssr_oracle_on_random_pairs(self):
        rng = np.random.default_rng(3)
        checked = 0
        while checked < 15:
            ds = random_instance(rng, max_rows=14, max_join=2000)
            m = int(rng.integers(1, 3))
            ens = train_boosted(ds, TrainConfig(max_leaves=3, trees=m), m)
            feat = ds.features[int(rng.integers(0, len(ds.features)))]
            dm = ds.materialize()
            col = dm.column(feat)
            if col.size == 0:
                continue
            gates = {feat: Interval.below(float(np.median(col)))}
            total = sum(
                residual_sq_exact(ds, gates, ens.trees, i, None).sum()
                for i in [0]
            )
            truth = ssr_oracle(dm, ens.trees, gates)
            assert total == pytest.approx(truth, rel=1e-9, abs=1e-9)
            checked += 1

    def test_residual_stats_identity(self):
        # per node: n * mean^2 + SSE equals the residual square sum
        rng = np.random.default_rng(4)
        ds = random_instance(rng, max_rows=14, max_join=2000)
        ens = train_boosted(ds, TrainConfig(max_leaves=2, trees=2), 2)
        st = residual_node_statistics(ds, {}, ens.trees, 0)
        n, s, u = st.count.sum(), st.target_sum.sum(), st.target_sq.sum()
        sse = u - s * s / n
        assert n * (s / n) ** 2 + sse == pytest.approx(u, rel=1e-9)


class TestBestSplitBoosted:
    def test_degenerates_to_single_with_no_trees(self):
        ds = three_row_example()
        plain = node_statistics(ds, {}, 0)
        boosted = residual_node_statistics(ds, {}, (), 0)
        np.testing.assert_array_equal(plain.count, boosted.count)
        np.testing.assert_array_equal(plain.target_sum, boosted.target_sum)
        np.testing.assert_array_equal(plain.target_sq, boosted.target_sq)
        a = best_split_single(ds, {0: plain})
        b = best_split_boosted(ds, {0: boosted})
        assert a == b

    def test_zero_residuals_give_single_leaf(self):
        # a perfectly fit first tree leaves nothing for the second
        ds = three_row_example()
        ens = train_boosted(ds, TrainConfig(max_leaves=8, trees=2), 2)
        assert ens.trees[1].leaf_count == 1
        assert abs(ens.trees[1].nodes[0].value) < 1e-9


class TestTrainBoosted:
    def test_one_tree_equals_train_tree(self):
        ds = three_row_example()
        config = TrainConfig(max_leaves=2)
        ens = train_boosted(ds, config, 1)
        ok, why = trees_equal(ens.trees[0], train_tree(ds, config))
        assert ok, why

    def test_second_tree_fits_residuals(self):
        ds = three_row_example()
        ens = train_boosted(ds, TrainConfig(max_leaves=2, trees=2), 2)
        dm = ds.materialize()
        # residual sums vanish on every leaf region of the last tree
        for _, value, gates in ens.trees[1].leaf_paths():
            mask = np.ones(dm.n, dtype=bool)
            for f, iv in gates.items():
                col = dm.column(f)
                mask &= (col >= iv.lo) & (col < iv.hi)
            if not mask.any():
                continue
            resid = np.array(
                [
                    dm.values[i][dm.columns.index("y")]
                    - ens.predict(dm.row_mapping(i))
                    for i in range(dm.n)
                    if mask[i]
                ]
            )
            assert abs(resid.sum()) < 1e-9

    def test_matches_oracle_on_random_instances(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            ds = random_instance(rng, max_rows=20, max_join=4000)
            m = int(rng.integers(1, 4))
            config = TrainConfig(max_leaves=int(rng.integers(2, 7)), trees=m)
            log = []
            mine = train_boosted(ds, config, m, log=log)
            ref, report = train_boosted_oracle(ds, config, m)
            ok, why = ensembles_equal(mine, ref)
            assert ok, why
            # both paths agree on every node's sufficient statistics
            assert len(log) == len(report.records)
            for a, b in zip(log, report.records):
                assert (a.tree_index, a.node_id) == (b.tree_index, b.node_id)
                assert a.count == b.count
                assert a.mean == pytest.approx(b.mean, rel=1e-9)
                assert a.sse == pytest.approx(b.sse, rel=1e-9, abs=1e-9 * max(1.0, a.count))

    def test_shrinkage_scales_leaf_values(self):
        ds = three_row_example()
        plain = train_boosted(ds, TrainConfig(max_leaves=2), 1)
        damped = train_boosted(ds, TrainConfig(max_leaves=2, shrinkage=0.5), 1)
        for p, d in zip(plain.trees[0].nodes, damped.trees[0].nodes):
            if p.is_leaf:
                assert d.value == 0.5 * p.value

    def test_split_monotonicity_exact_mode(self):
        rng = np.random.default_rng(6)
        ds = random_instance(rng, max_rows=18, max_join=3000)
        log = []
        train_boosted(ds, TrainConfig(max_leaves=4, trees=2), 2, log=log)
        for rec in log:
            if rec.accepted:
                assert rec.choice.objective <= rec.sse + 1e-6 * max(1.0, rec.sse)


class TestQueryCounting:
    def test_single_tree_node_costs_three_per_table(self):
        rng = np.random.default_rng(7)
        ds = random_instance(rng, max_rows=12, max_join=2000)
        counter = QueryCounter()
        log = []
        train_tree(ds, TrainConfig(max_leaves=4, count_queries=True), counter, log)
        assert counter.per_phase() == {
            PHASE_STATS: 3 * ds.n_tables * len(log),
            PHASE_LEAF: 0,
            PHASE_PAIR: 0,
            PHASE_SKETCH: 0,
        }

    def test_exact_boosted_node_formula(self):
        rng = np.random.default_rng(8)
        ds = random_instance(rng, max_rows=12, max_join=2000)
        counter = QueryCounter()
        log = []
        train_boosted(
            ds, TrainConfig(max_leaves=3, trees=3, count_queries=True), 3, counter, log
        )
        _annotate_log(log, "exact")
        assert counter.per_phase() == _closed_form_counts(log, ds.n_tables)
        # report the constant against the quadratic pair-query budget
        worst = 0.0
        for rec in log:
            if rec.prior_leaves:
                m = len(rec.prior_leaves)
                L = max(rec.prior_leaves)
                pairs = sum(
                    a * b
                    for i, a in enumerate(rec.prior_leaves)
                    for j, b in enumerate(rec.prior_leaves)
                    if i != j
                )
                worst = max(worst, pairs / (m * m * L * L))
        print(f"pair-query constant vs m^2 L^2 budget: {worst:.3f}")
        assert worst <= 1.0

    def test_sketch_node_formula(self):
        rng = np.random.default_rng(9)
        ds = random_instance(rng, max_rows=12, max_join=2000)
        counter = QueryCounter()
        log = []
        config = TrainConfig(max_leaves=3, trees=2, mode="sketch", k=16, seed=1)
        train_boosted(ds, config, 2, counter, log)
        _annotate_log(log, "sketch")
        assert counter.per_phase() == _closed_form_counts(log, ds.n_tables)
        sketched = [rec for rec in log if rec.prior_leaves]
        assert sketched, "expected at least one sketched node"
        per_table = counter.per_phase()[PHASE_SKETCH] / ds.n_tables
        expected = sum(sum(rec.prior_leaves) + 1 for rec in sketched)
        assert per_table == expected


class TestSketchResiduals:
    def test_no_trees_sketches_labels(self):
        ds = three_row_example()
        hashes = SketchHashes.from_seed(0, 1, 16)
        S = sketch_residual_vectors(ds, {}, (), 0, hashes)
        dm = ds.materialize()
        direct = direct_residual_sketch(ds, dm, (), {}, hashes, 0)
        np.testing.assert_allclose(S, direct, atol=1e-12)

    def test_single_row_joins_are_one_hot(self):
        ds = three_row_example()
        ens = (RegressionTree.single_leaf(1.0),)
        hashes = SketchHashes.from_seed(3, 1, 64)
        S = sketch_residual_vectors(ds, {}, ens, 0, hashes)
        residuals = [0.0, 1.0, 9.0]
        for i, r in enumerate(residuals):
            nz = np.nonzero(S[i])[0]
            if r == 0.0:
                assert nz.size == 0
            else:
                assert nz.size == 1
                assert abs(S[i][nz[0]]) == pytest.approx(r)

    def test_linearity_against_direct_sketch(self):
        rng = np.random.default_rng(10)
        for trial in range(5):
            ds = random_instance(rng, max_rows=14, max_join=2000)
            m = int(rng.integers(0, 3))
            ens = (
                train_boosted(ds, TrainConfig(max_leaves=3, trees=max(m, 1)), m).trees
                if m
                else ()
            )
            feat = ds.features[int(rng.integers(0, len(ds.features)))]
            dm = ds.materialize()
            gates = {feat: Interval.below(float(np.median(dm.column(feat))))}
            hashes = SketchHashes.from_seed(trial, ds.n_tables, 32)
            group = int(rng.integers(0, ds.n_tables))
            S = sketch_residual_vectors(ds, gates, ens, group, hashes)
            direct = direct_residual_sketch(ds, dm, ens, gates, hashes, group)
            np.testing.assert_allclose(S, direct, rtol=1e-9, atol=1e-9)


class TestApproxResidualSq:
    def test_prefix_geometry(self):
        rng = np.random.default_rng(11)
        S = rng.normal(size=(6, 8))
        order = np.arange(6)
        ends = np.array([0, 2, 4])
        left, right = approx_residual_sq(S, order, ends)
        total = S.sum(axis=0)
        for pos, e in enumerate(ends):
            l = S[: e + 1].sum(axis=0)
            np.testing.assert_allclose(left[pos], float(l @ l))
            r = total - l
            np.testing.assert_allclose(right[pos], float(r @ r), rtol=1e-9)

    def test_left_and_right_telescope(self):
        rng = np.random.default_rng(12)
        S = rng.normal(size=(10, 16))
        order = np.argsort(rng.normal(size=10))
        ends = np.array([1, 4, 7])
        cum = np.cumsum(S[order], axis=0)
        total = cum[-1]
        left = cum[ends]
        right = total[None, :] - left
        np.testing.assert_allclose(left + right, np.tile(total, (3, 1)), atol=1e-9)

    def test_gated_prefix_is_exact_zero(self):
        # rows excluded by gates sketch to exactly zero, so an all-gated
        # prefix yields a zero estimate
        ds = three_row_example()
        hashes = SketchHashes.from_seed(1, 1, 16)
        S = sketch_residual_vectors(ds, {"f": Interval.at_least(3.0)}, (), 0, hashes)
        sc = ds.sorted_column(0, 0)
        left, _ = approx_residual_sq(S, sc.order, sc.starts[1:] - 1)
        assert left[0] == 0.0


class TestSketchMode:
    def test_seeded_determinism(self):
        rng = np.random.default_rng(13)
        ds = random_instance(rng, max_rows=12, max_join=2000)
        config = TrainConfig(max_leaves=3, trees=2, mode="sketch", k=32, seed=9)
        a = train_boosted(ds, config, 2)
        b = train_boosted(ds, config, 2)
        assert serialize(a) == serialize(b)

    def test_first_tree_identical_to_exact(self):
        rng = np.random.default_rng(14)
        ds = random_instance(rng, max_rows=12, max_join=2000)
        sk = train_boosted(ds, TrainConfig(max_leaves=3, trees=1, mode="sketch", k=8), 1)
        ex = train_boosted(ds, TrainConfig(max_leaves=3, trees=1), 1)
        ok, why = ensembles_equal(sk, ex)
        assert ok, why
