"""Rating-log ingestion, splitting, popularity, and the synthetic generator."""

import numpy as np
import pytest
from numpy.testing import assert_array_equal

import cips.data as data
from cips.errors import ConfigError, RatingLogError

from conftest import dataset_from_pairs


def write_log(path, lines):
    path.write_text("".join(line + "\n" for line in lines))
    return str(path)


@pytest.fixture
def small_dataset(tmp_path):
    train = write_log(tmp_path / "train.txt", ["3 7 5", "3 2 2", "1 1 4", "2 7 1"])
    test = write_log(tmp_path / "test.txt", ["1 3 5", "2 4 1"])
    return data.load_rating_log(train, test)


class TestLoadRatingLog:
    def test_threshold_binarization(self, small_dataset):
        rows = {tuple(r[:2]): r[2] for r in small_dataset.train}
        assert rows[(2, 6)] == 1  # rating 5 -> positive
        assert rows[(2, 1)] == 0  # rating 2 -> negative
        assert rows[(0, 0)] == 1  # rating 4 sits exactly on the threshold
        assert rows[(1, 6)] == 0

    def test_dimensions_cover_both_sources(self, small_dataset):
        assert small_dataset.num_users == 3
        assert small_dataset.num_items == 7

    def test_user_features_built_from_train_only(self, small_dataset):
        feats = small_dataset.user_features
        assert feats.shape == (3, 7)
        assert feats[2, 6] == 1 and feats[2, 1] == 1
        assert feats[0, 2] == 0  # test-only pair stays out
        assert feats.sum() == len(small_dataset.train)

    def test_validation_starts_empty(self, small_dataset):
        assert len(small_dataset.validation) == 0

    def test_malformed_line_reports_number(self, tmp_path):
        train = write_log(tmp_path / "t.txt", ["1 1 5", "1 2"])
        test = write_log(tmp_path / "e.txt", ["1 1 5"])
        with pytest.raises(RatingLogError, match="line 2"):
            data.load_rating_log(train, test)

    def test_rating_out_of_range(self, tmp_path):
        train = write_log(tmp_path / "t.txt", ["1 1 6"])
        test = write_log(tmp_path / "e.txt", ["1 1 5"])
        with pytest.raises(RatingLogError, match="outside"):
            data.load_rating_log(train, test)

    def test_empty_file(self, tmp_path):
        train = write_log(tmp_path / "t.txt", [])
        test = write_log(tmp_path / "e.txt", ["1 1 5"])
        with pytest.raises(RatingLogError, match="empty"):
            data.load_rating_log(train, test)

    def test_duplicate_pair_rejected(self, tmp_path):
        train = write_log(tmp_path / "t.txt", ["1 1 5", "1 1 2"])
        test = write_log(tmp_path / "e.txt", ["1 1 5"])
        with pytest.raises(RatingLogError, match="duplicate"):
            data.load_rating_log(train, test)


class TestSplitValidation:
    def test_exact_nine_to_one(self):
        ds = dataset_from_pairs(2, 5, [(u, v, 1) for u in range(2) for v in range(5)])
        out = data.split_validation(ds, 0.9, seed=11)
        assert len(out.train) == 9
        assert len(out.validation) == 1

    def test_deterministic_given_seed(self):
        ds = dataset_from_pairs(4, 6, [(u, v, (u + v) % 2) for u in range(4) for v in range(6)])
        a = data.split_validation(ds, 0.75, seed=3)
        b = data.split_validation(ds, 0.75, seed=3)
        assert_array_equal(a.train, b.train)
        assert_array_equal(a.validation, b.validation)
        c = data.split_validation(ds, 0.75, seed=4)
        assert not np.array_equal(a.validation, c.validation)

    def test_union_preserved(self):
        ds = dataset_from_pairs(4, 6, [(u, v, (u * v) % 2) for u in range(4) for v in range(6)])
        out = data.split_validation(ds, 0.6, seed=9)
        merged = np.concatenate([out.train, out.validation])
        original = sorted(map(tuple, ds.train))
        assert sorted(map(tuple, merged)) == original

    def test_yahoo_sized_split_count(self):
        n = 311_704
        users = np.arange(n, dtype=np.int64) // 800
        items = np.arange(n, dtype=np.int64) % 800
        train = np.column_stack([users, items, np.ones(n, dtype=np.int64)])
        ds = data.InteractionDataset(
            num_users=int(users.max()) + 1, num_items=800, train=train,
            validation=np.empty((0, 3), dtype=np.int64),
            test_mar=np.empty((0, 3), dtype=np.int64),
            user_features=data.build_user_features(int(users.max()) + 1, 800, train),
        )
        out = data.split_validation(ds, 0.9, seed=0)
        assert len(out.train) in (280_533, 280_534)

    def test_features_rebuilt_from_reduced_train(self):
        ds = dataset_from_pairs(3, 4, [(0, 0, 1), (0, 1, 1), (1, 2, 0), (2, 3, 1)])
        out = data.split_validation(ds, 0.5, seed=2)
        assert out.user_features.sum() == len(out.train)
        for u, v, _ in out.validation:
            assert out.user_features[u, v] == 0

    def test_bad_ratio(self):
        ds = dataset_from_pairs(1, 2, [(0, 0, 1), (0, 1, 0)])
        for ratio in (0.0, 1.0, -0.3, 1.7):
            with pytest.raises(ConfigError):
                data.split_validation(ds, ratio, seed=0)


class TestItemPopularity:
    def test_direct_count(self):
        ds = dataset_from_pairs(2, 2, [(0, 0, 1), (1, 0, 0), (1, 1, 1)])
        assert_array_equal(data.item_popularity(ds), [2, 1])

    def test_untouched_item_counts_zero(self):
        ds = dataset_from_pairs(2, 3, [(0, 0, 1), (1, 0, 0)])
        assert_array_equal(data.item_popularity(ds), [2, 0, 0])

    def test_order_invariance(self):
        pairs = [(0, 0, 1), (1, 0, 0), (1, 1, 1), (0, 2, 0)]
        a = data.item_popularity(dataset_from_pairs(2, 3, pairs))
        b = data.item_popularity(dataset_from_pairs(2, 3, pairs[::-1]))
        assert_array_equal(a, b)


class TestGenerateSynthetic:
    def test_full_exposure_covers_grid(self):
        ds, _ = data.generate_synthetic(6, 5, 2, 3, seed=0, exposure_range=(1.0, 1.0))
        assert len(ds.train) == 30
        assert len(set(map(tuple, ds.train[:, :2]))) == 30

    def test_single_cluster_shares_exposure_row(self):
        _, truth = data.generate_synthetic(10, 8, 1, 2, seed=1)
        assert truth.exposure_prob.shape == (1, 8)
        assert (truth.true_cluster == 0).all()

    def test_every_cluster_non_empty(self):
        _, truth = data.generate_synthetic(11, 6, 4, 2, seed=5)
        assert (np.bincount(truth.true_cluster, minlength=4) > 0).all()

    def test_seed_reproducibility(self):
        a_ds, a_truth = data.generate_synthetic(40, 20, 3, 5, seed=9)
        b_ds, b_truth = data.generate_synthetic(40, 20, 3, 5, seed=9)
        assert_array_equal(a_ds.train, b_ds.train)
        assert_array_equal(a_ds.test_mar, b_ds.test_mar)
        assert_array_equal(a_truth.exposure_prob, b_truth.exposure_prob)

    def test_mar_test_shape(self):
        ds, _ = data.generate_synthetic(12, 9, 3, 4, seed=2)
        assert len(ds.test_mar) == 12 * 4
        per_user = np.bincount(ds.test_mar[:, 0], minlength=12)
        assert (per_user == 4).all()

    def test_empirical_exposure_matches_probabilities(self):
        """Law-of-large-numbers check: per-(cluster, item) observed rates sit
        inside 3-sigma binomial bounds for nearly every cell."""
        ds, truth = data.generate_synthetic(200, 50, 4, 5, seed=77)
        counts = np.zeros((4, 50))
        np.add.at(counts, (truth.true_cluster[ds.train[:, 0]], ds.train[:, 1]), 1.0)
        sizes = np.bincount(truth.true_cluster, minlength=4).astype(float)
        p = truth.exposure_prob
        sigma = np.sqrt(sizes[:, None] * p * (1 - p))
        deviations = np.abs(counts - sizes[:, None] * p)
        within = deviations <= 3.0 * sigma + 1e-9
        assert within.mean() > 0.985

    def test_degenerate_range_rejected(self):
        with pytest.raises(ConfigError, match="empty support"):
            data.generate_synthetic(5, 5, 2, 2, seed=0, exposure_range=(0.5, 0.2))

    def test_blocks_profile_separates_clusters(self):
        _, truth = data.generate_synthetic(40, 24, 4, 4, seed=3, profile="blocks")
        own = []
        off = []
        for c in range(4):
            block = np.arange(24) * 4 // 24 == c
            own.append(truth.relevance_prob[c, block].mean())
            off.append(truth.relevance_prob[c, ~block].mean())
        assert min(own) > max(off)


class TestRoundTrip:
    def test_dataset_save_load_identity(self, tmp_path):
        ds, _ = data.generate_synthetic(25, 12, 3, 4, seed=4)
        ds = data.split_validation(ds, 0.8, seed=4)
        out = tmp_path / "world"
        data.save_dataset(ds, str(out))
        back = data.load_dataset(str(out))
        assert back.num_users == ds.num_users
        assert back.num_items == ds.num_items
        assert_array_equal(np.sort(back.train, axis=0), np.sort(ds.train, axis=0))
        assert_array_equal(np.sort(back.validation, axis=0), np.sort(ds.validation, axis=0))
        assert_array_equal(np.sort(back.test_mar, axis=0), np.sort(ds.test_mar, axis=0))
        assert_array_equal(back.user_features, ds.user_features)

    def test_ground_truth_round_trip(self, tmp_path):
        _, truth = data.generate_synthetic(15, 9, 3, 2, seed=6)
        data.save_ground_truth(truth, str(tmp_path))
        back = data.load_ground_truth(str(tmp_path))
        assert_array_equal(back.true_cluster, truth.true_cluster)
        assert_array_equal(back.exposure_prob, truth.exposure_prob)
        assert_array_equal(back.relevance_prob, truth.relevance_prob)
