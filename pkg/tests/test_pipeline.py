import math
import random

import numpy as np
import pytest

from osmrank.combinatorics import OrderedPartition
from osmrank.learning import CFParams, cf_latent_model
from osmrank.metrics import err, ndcg_at
from osmrank.pipeline import (
    RankedList,
    SplitSpec,
    complete_rank,
    entropy_filter,
    evaluate_ranking,
    grade_ratings,
    load_ratings,
    parse_metric,
    reconstruct_rank,
    train_test_split,
    user_partitions,
)


def write_ratings(path, rows, fmt="movielens_dcolon"):
    with open(path, "w") as fh:
        if fmt == "csv":
            fh.write("user,item,rating,timestamp\n")
        for row in rows:
            sep = "::" if fmt == "movielens_dcolon" else ","
            fh.write(sep.join(str(x) for x in row) + "\n")


class TestNdcg:
    def test_perfect_ordering_is_one(self):
        assert ndcg_at([5, 4, 3, 2, 1], 5) == pytest.approx(1.0, abs=1e-15)

    def test_hand_derived_value(self):
        # grades (0, 5) at T=2: (0 + 31/log2(3)) / 31 = 1/log2(3)
        expected = 1.0 / math.log2(3.0)
        assert ndcg_at([0, 5], 2) == pytest.approx(expected, abs=1e-12)
        assert ndcg_at([0, 5], 2) == pytest.approx(0.6309297535714574, abs=1e-12)

    def test_all_equal_grades(self):
        assert ndcg_at([3, 3, 3], 2) == 1.0
        assert ndcg_at([0, 0, 0], 3) == 1.0  # kappa = 0 convention

    def test_truncation_shorter_than_list(self):
        assert ndcg_at([5, 0, 0], 1) == 1.0
        assert ndcg_at([0, 5], 1) == 0.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ndcg_at([], 3)

    def test_moving_high_grade_later_never_increases(self):
        rng = random.Random(0)
        for _ in range(200):
            grades = [rng.randrange(0, 6) for _ in range(8)]
            t = rng.randrange(1, 9)
            base = ndcg_at(grades, t)
            i = rng.randrange(7)
            j = rng.randrange(i + 1, 8)
            if grades[i] > grades[j]:
                swapped = grades.copy()
                swapped[i], swapped[j] = swapped[j], swapped[i]
                assert ndcg_at(swapped, t) <= base + 1e-12


class TestErr:
    def test_single_top_grade(self):
        assert err([5]) == pytest.approx(15.0 / 16.0)

    def test_single_bottom_grade(self):
        assert err([1]) == 0.0

    def test_two_top_grades(self):
        assert err([5, 5]) == pytest.approx(0.966796875, abs=1e-15)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            err([0])
        with pytest.raises(ValueError):
            err([6])
        with pytest.raises(ValueError):
            err([2.5])

    def test_moving_high_grade_later_never_increases(self):
        rng = random.Random(1)
        for _ in range(200):
            grades = [rng.randrange(1, 6) for _ in range(7)]
            base = err(grades)
            i = rng.randrange(6)
            j = rng.randrange(i + 1, 7)
            if grades[i] > grades[j]:
                swapped = grades.copy()
                swapped[i], swapped[j] = swapped[j], swapped[i]
                assert err(swapped) <= base + 1e-12

    def test_value_in_unit_interval(self):
        rng = random.Random(2)
        for _ in range(100):
            grades = [rng.randrange(1, 6) for _ in range(10)]
            assert 0.0 <= err(grades) < 1.0


class TestLoadRatings:
    def test_movielens_line(self, tmp_path):
        path = tmp_path / "r.dat"
        write_ratings(path, [(1, 10, 4.5, 978300760)])
        ds = load_ratings(str(path))
        assert ds.n_records == 1
        assert ds.user_ids.tolist() == [1]
        assert ds.item_ids.tolist() == [10]
        assert ds.ratings.tolist() == [4.5]

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.dat"
        path.write_text("")
        ds = load_ratings(str(path))
        assert ds.n_records == 0
        assert ds.n_users == 0

    def test_duplicates_last_wins_with_warning(self, tmp_path):
        path = tmp_path / "dup.dat"
        write_ratings(path, [(1, 10, 2.0, 1), (1, 10, 5.0, 2), (2, 10, 3.0, 3)])
        with pytest.warns(UserWarning, match="1 duplicate"):
            ds = load_ratings(str(path))
        assert ds.n_records == 2
        row = np.flatnonzero(ds.user_ids[ds.users] == 1)[0]
        assert ds.ratings[row] == 5.0

    def test_malformed_strict_raises_with_line_number(self, tmp_path):
        path = tmp_path / "bad.dat"
        path.write_text("1::10::4.5::1\nnot-a-line\n2::11::3.0::2\n")
        with pytest.raises(ValueError, match="line 2"):
            load_ratings(str(path))

    def test_malformed_lenient_warns(self, tmp_path):
        path = tmp_path / "bad.dat"
        path.write_text("1::10::4.5::1\nnope\n")
        with pytest.warns(UserWarning):
            ds = load_ratings(str(path), strict=False)
        assert ds.n_records == 1

    def test_csv_with_header(self, tmp_path):
        path = tmp_path / "r.csv"
        write_ratings(path, [(1, 10, 4.0, 99), (2, 11, 2.0, 100)], fmt="csv")
        ds = load_ratings(str(path), fmt="csv")
        assert ds.n_records == 2

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            load_ratings("whatever", fmt="parquet")


class TestGradeRatings:
    def test_segment_table_half_star_scale(self, tmp_path):
        path = tmp_path / "r.dat"
        ratings = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0]
        write_ratings(path, [(1, i, r, 0) for i, r in enumerate(ratings)])
        ds = grade_ratings(load_ratings(str(path)))
        by_item = {int(ds.items[i]): int(ds.grades[i]) for i in range(ds.n_records)}
        expected = [1, 1, 2, 2, 3, 3, 4, 4, 5, 5]
        assert [by_item[i] for i in range(10)] == expected

    def test_integer_scale_maps_identically(self, tmp_path):
        path = tmp_path / "r.dat"
        write_ratings(path, [(1, i, r, 0) for i, r in enumerate([1, 2, 3, 4, 5])])
        ds = grade_ratings(load_ratings(str(path), scale=(1.0, 5.0)))
        assert ds.grades.tolist() == [1, 2, 3, 4, 5]

    def test_monotone(self, tmp_path):
        path = tmp_path / "r.dat"
        rng = random.Random(0)
        ratings = sorted(rng.choice([0.5 * k for k in range(1, 11)]) for _ in range(50))
        write_ratings(path, [(1, i, r, 0) for i, r in enumerate(ratings)])
        ds = grade_ratings(load_ratings(str(path)))
        order = np.argsort(ds.ratings, kind="stable")
        grades = ds.grades[order]
        assert np.all(np.diff(grades) >= 0)

    def test_out_of_scale_rejected(self, tmp_path):
        path = tmp_path / "r.dat"
        write_ratings(path, [(1, 0, 7.5, 0)])
        with pytest.raises(ValueError, match="scale"):
            grade_ratings(load_ratings(str(path)))


class TestEntropyFilter:
    def build(self, tmp_path):
        # item 0: all users agree (H = 0); item 1: two grades; item 2: three
        # grades; item 3: uniform over four grades (highest H)
        rows = []
        grades_by_item = {
            0: [5.0, 5.0, 5.0, 5.0],
            1: [5.0, 0.5, 5.0, 0.5],
            2: [5.0, 2.0, 3.5, 2.0],
            3: [5.0, 0.5, 2.0, 3.5],
        }
        for item, ratings in grades_by_item.items():
            for user, r in enumerate(ratings):
                rows.append((user, item, r, 0))
        path = tmp_path / "r.dat"
        write_ratings(path, rows)
        return grade_ratings(load_ratings(str(path)))

    def test_removes_exactly_half_lowest_entropy(self, tmp_path):
        ds = self.build(tmp_path)
        out = entropy_filter(ds)
        assert out.n_items == 2
        assert out.item_ids.tolist() == [2, 3]

    def test_needs_grades(self, tmp_path):
        path = tmp_path / "r.dat"
        write_ratings(path, [(1, 0, 3.0, 0)])
        with pytest.raises(ValueError):
            entropy_filter(load_ratings(str(path)))

    def test_removed_entropies_below_retained(self, tmp_path):
        rng = random.Random(3)
        rows = []
        for item in range(11):
            for user in range(30):
                rows.append((user, item, rng.choice([0.5 * k for k in range(1, 11)]), 0))
        path = tmp_path / "big.dat"
        write_ratings(path, rows)
        ds = grade_ratings(load_ratings(str(path)))

        def entropies(d):
            out = {}
            for dense in range(d.n_items):
                mask = d.items == dense
                counts = np.bincount(d.grades[mask] - 1, minlength=5)
                p = counts / counts.sum()
                out[int(d.item_ids[dense])] = -np.sum(np.where(p > 0, p * np.log(p), 0.0))
            return out

        before = entropies(ds)
        out = entropy_filter(ds)
        assert out.n_items == 11 - 11 // 2
        kept = set(out.item_ids.tolist())
        removed = set(ds.item_ids.tolist()) - kept
        assert len(removed) == 11 // 2
        assert max(before[i] for i in removed) <= min(before[i] for i in kept) + 1e-12


class TestTrainTestSplit:
    def build(self, tmp_path, counts):
        rows = []
        item = 0
        for user, c in enumerate(counts):
            for _ in range(c):
                rows.append((user, item % 97, 0.5 + 0.5 * (item % 10), 0))
                item += 1
        path = tmp_path / "r.dat"
        write_ratings(path, rows)
        return grade_ratings(load_ratings(str(path)))

    def test_user_below_min_dropped(self, tmp_path):
        ds = self.build(tmp_path, [19, 25])
        train_ds, test_ds = train_test_split(ds, SplitSpec(n_train=10, min_ratings=20, seed=0))
        train_users = set(train_ds.user_ids[train_ds.users].tolist())
        assert train_users == {1}
        test_users = set(test_ds.user_ids[test_ds.users].tolist())
        assert test_users == {1}

    def test_exact_counts(self, tmp_path):
        ds = self.build(tmp_path, [25])
        train_ds, test_ds = train_test_split(ds, SplitSpec(n_train=10, min_ratings=20, seed=0))
        assert train_ds.n_records == 10
        assert test_ds.n_records == 15

    def test_deterministic(self, tmp_path):
        ds = self.build(tmp_path, [30, 40, 21])
        spec = SplitSpec(n_train=10, min_ratings=20, seed=7)
        a_train, a_test = train_test_split(ds, spec)
        b_train, b_test = train_test_split(ds, spec)
        np.testing.assert_array_equal(a_train.items, b_train.items)
        np.testing.assert_array_equal(a_test.items, b_test.items)

    def test_inconsistent_spec_rejected(self):
        with pytest.raises(ValueError, match="inconsistent"):
            SplitSpec(n_train=10, min_ratings=15)

    def test_no_overlap_and_exhaustive(self, tmp_path):
        ds = self.build(tmp_path, [30])
        train_ds, test_ds = train_test_split(ds, SplitSpec(n_train=10, min_ratings=20, seed=1))
        train_keys = set(zip(train_ds.users.tolist(), train_ds.items.tolist()))
        test_keys = set(zip(test_ds.users.tolist(), test_ds.items.tolist()))
        assert not train_keys & test_keys
        assert len(train_keys) + len(test_keys) == 30


class TestUserPartitions:
    def test_blocks_follow_grades(self, tmp_path):
        path = tmp_path / "r.dat"
        write_ratings(path, [(7, 3, 5.0, 0), (7, 9, 5.0, 0), (7, 5, 1.0, 0)])
        ds = grade_ratings(load_ratings(str(path)))
        parts = user_partitions(ds)
        X = parts[0]
        # dense item ids follow sorted external ids: 3->0, 5->1, 9->2
        assert X.blocks == ((0, 2), (1,))
        assert X.n_objects == 3


class TestRankedList:
    def test_validates(self):
        with pytest.raises(ValueError):
            RankedList((1, 1), (0.5, 0.5))
        with pytest.raises(ValueError):
            RankedList((1, 2), (0.1, 0.9))
        RankedList((2, 1), (0.9, 0.1))


class TestCompleteRank:
    def test_zero_weight_model_tie_break_ascending(self):
        m = cf_latent_model(CFParams.zeros(6, 2))
        seen = OrderedPartition(((0, 1), (2,)), 6)
        out = complete_rank(seen, [5, 3, 4], m)
        assert out.items == (3, 4, 5)
        assert out.scores == (0.0, 0.0, 0.0)

    def test_k0_ranks_by_worth(self):
        p = CFParams(0.0, np.array([0.0, 0.0, 3.0, 1.0, 2.0]), np.zeros((5, 0)))
        m = cf_latent_model(p)
        seen = OrderedPartition(((0,), (1,)), 5)
        out = complete_rank(seen, [2, 3, 4], m)
        assert out.items == (2, 4, 3)
        # scores scale with |seen| = 2
        assert out.scores == (6.0, 4.0, 2.0)

    def test_ranking_invariant_to_seen_size_factor(self):
        rng = np.random.default_rng(0)
        p = CFParams(0.1, rng.normal(size=8), rng.normal(size=(8, 2)))
        m = cf_latent_model(p)
        small = OrderedPartition(((0,), (1,)), 8)
        large = OrderedPartition(((0, 1), (2,), (3,)), 8)
        unseen = [4, 5, 6, 7]
        # same posterior only when the seen partition is the same; instead
        # check that scaling scores never reorders: compare order under small
        # vs the same scores divided by |seen|
        out = complete_rank(small, unseen, m)
        scores = np.array(out.scores)
        assert out.items == tuple(
            sorted(unseen, key=lambda j: (-scores[out.items.index(j)] / 2, j))
        )
        out_large = complete_rank(large, unseen, m)
        assert len(out_large.items) == 4

    def test_empty_seen_rejected(self):
        m = cf_latent_model(CFParams.zeros(3, 1))
        with pytest.raises(ValueError):
            complete_rank(OrderedPartition((), 3), [0, 1], m)

    def test_overlap_rejected(self):
        m = cf_latent_model(CFParams.zeros(3, 1))
        seen = OrderedPartition(((0,),), 3)
        with pytest.raises(ValueError):
            complete_rank(seen, [0, 2], m)

    def test_scores_invariant_to_within_block_listing(self):
        rng = np.random.default_rng(1)
        p = CFParams(0.2, rng.normal(size=6), rng.normal(size=(6, 3)))
        m = cf_latent_model(p)
        a = OrderedPartition.from_blocks([[2, 0], [1]], 6)
        b = OrderedPartition.from_blocks([[0, 2], [1]], 6)
        assert complete_rank(a, [3, 4, 5], m) == complete_rank(b, [3, 4, 5], m)

    def test_general_model_matches_worth_fast_path(self):
        rng = np.random.default_rng(2)
        p = CFParams(0.3, rng.normal(size=5), rng.normal(size=(5, 2)))
        m = cf_latent_model(p)
        seen = OrderedPartition(((0, 1), (2,)), 5)
        fast = complete_rank(seen, [3, 4], m)
        # generic path via tabulated potentials
        from osmrank.latent import LatentModel, _materialize
        from osmrank.core import MatrixPairModel

        mats = LatentModel(
            MatrixPairModel(*_materialize(m.base)),
            [MatrixPairModel(*_materialize(hm)) for hm in m.hidden],
        )
        slow = complete_rank(seen, [3, 4], mats)
        assert fast.items == slow.items
        np.testing.assert_allclose(fast.scores, slow.scores, atol=1e-10)


class TestReconstructRank:
    def test_zero_w_ranks_by_u(self):
        p = CFParams(0.0, np.array([1.0, 3.0, 2.0]), np.zeros((3, 2)))
        out = reconstruct_rank(np.array([0.5, 0.5]), [0, 1, 2], cf_latent_model(p))
        assert out.items == (1, 2, 0)

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        p = CFParams(0.0, rng.normal(size=4), rng.normal(size=(4, 2)))
        m = cf_latent_model(p)
        post = np.array([0.2, 0.9])
        assert reconstruct_rank(post, range(4), m) == reconstruct_rank(post, range(4), m)

    def test_k0_matches_complete_rank_ordering(self):
        p = CFParams(0.4, np.array([0.3, -1.0, 2.0, 0.7]), np.zeros((4, 0)))
        m = cf_latent_model(p)
        seen = OrderedPartition(((0,), (1,)), 4)
        completed = complete_rank(seen, [2, 3], m)
        reconstructed = reconstruct_rank(np.zeros(0), [2, 3], m)
        assert completed.items == reconstructed.items


class TestEvaluateRanking:
    def build(self, tmp_path, n_users=30, n_items=12, seed=0):
        rng = random.Random(seed)
        rows = []
        for u in range(n_users):
            for it in range(n_items):
                rows.append((u, it, rng.choice([0.5 * k for k in range(1, 11)]), 0))
        path = tmp_path / "r.dat"
        write_ratings(path, rows)
        ds = grade_ratings(load_ratings(str(path)))
        return train_test_split(ds, SplitSpec(n_train=2, min_ratings=12, seed=1))

    def test_zero_model_matches_explicit_ascending_baseline(self, tmp_path):
        train_ds, test_ds = self.build(tmp_path)
        params = CFParams.zeros(train_ds.n_items, 2)
        report = evaluate_ranking(params, train_ds, test_ds, ["ndcg@5", "err"])
        # zero model ranks test items by ascending item index; replicate
        from osmrank.metrics import ndcg_at as nd, err as er

        by_user = test_ds.by_user()
        nd_vals, er_vals = [], []
        for u, recs in enumerate(by_user):
            if len(recs) == 0:
                continue
            items = [int(test_ds.items[r]) for r in recs]
            grades = [int(test_ds.grades[r]) for r in recs]
            order = np.argsort(items, kind="stable")
            seq = [grades[i] for i in order]
            nd_vals.append(nd(seq, 5))
            er_vals.append(er(seq))
        assert report["metrics"]["ndcg@5"]["mean"] == pytest.approx(np.mean(nd_vals))
        assert report["metrics"]["err"]["mean"] == pytest.approx(np.mean(er_vals))

    def test_parallel_equals_sequential(self, tmp_path):
        train_ds, test_ds = self.build(tmp_path, seed=4)
        rng = np.random.default_rng(5)
        params = CFParams(0.1, rng.normal(size=train_ds.n_items),
                          rng.normal(size=(train_ds.n_items, 2)))
        seq = evaluate_ranking(params, train_ds, test_ds, ["ndcg@5", "ndcg@1", "err"], threads=1)
        par = evaluate_ranking(params, train_ds, test_ds, ["ndcg@5", "ndcg@1", "err"], threads=2)
        for name in ["ndcg@5", "ndcg@1", "err"]:
            np.testing.assert_array_equal(
                seq["metrics"][name]["per_user"], par["metrics"][name]["per_user"]
            )

    def test_unknown_metric_rejected(self, tmp_path):
        train_ds, test_ds = self.build(tmp_path)
        with pytest.raises(ValueError, match="unknown metric"):
            evaluate_ranking(CFParams.zeros(train_ds.n_items, 1), train_ds, test_ds, ["map@5"])


class TestParseMetric:
    def test_parses(self):
        assert parse_metric("ndcg@10")([5, 0] * 5) > 0
        assert parse_metric("err")([5, 1]) > 0
        with pytest.raises(ValueError):
            parse_metric("precision")
