"""Interaction datasets: rating-log ingestion, validation splits, and a
synthetic missing-not-at-random world generator with known ground truth.

Rating logs are line-oriented ``user item rating`` records, whitespace
separated, ids 1-based on disk and 0-based in memory. Ratings at or above
the positive threshold become label 1, everything else label 0.
"""

import json
import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, RatingLogError

DEFAULT_POSITIVE_THRESHOLD = 4.0

# Generator defaults: spans sparse-to-dense regimes without zero-probability pairs.
DEFAULT_EXPOSURE_RANGE = (0.02, 0.6)
DEFAULT_RELEVANCE_RANGE = (0.05, 0.9)


@dataclass
class InteractionDataset:
    """Binary implicit-feedback data split into MNAR train, MNAR validation,
    and MAR test, plus per-user indicator features built from train only.

    Each split is an (n, 3) int64 array of [user, item, label] rows.
    """

    num_users: int
    num_items: int
    train: np.ndarray
    validation: np.ndarray
    test_mar: np.ndarray
    user_features: np.ndarray

    @property
    def shape(self):
        return self.num_users, self.num_items


@dataclass
class SyntheticGroundTruth:
    """The generating process behind a synthetic dataset.

    exposure_prob[c, v] is the probability that a user of true cluster c
    observes item v in the MNAR train split; relevance_prob[c, v] the
    probability the feedback is positive.
    """

    true_cluster: np.ndarray
    exposure_prob: np.ndarray
    relevance_prob: np.ndarray

    @property
    def num_clusters(self):
        return self.exposure_prob.shape[0]


def _empty_split():
    return np.empty((0, 3), dtype=np.int64)


def build_user_features(num_users, num_items, train):
    """0/1 indicator matrix: features[u, v] = 1 iff (u, v) is a train record."""
    feats = np.zeros((num_users, num_items), dtype=np.uint8)
    if len(train):
        feats[train[:, 0], train[:, 1]] = 1
    return feats


def _check_unique_pairs(split, name):
    if len(split) == 0:
        return
    keys = split[:, 0].astype(np.int64) * (split[:, 1].max() + 1) + split[:, 1]
    if len(np.unique(keys)) != len(keys):
        raise RatingLogError(f"duplicate (user, item) pair in {name} split")


def validate_dataset(dataset):
    """Raise if any structural invariant of the dataset is violated."""
    n, m = dataset.shape
    for name in ("train", "validation", "test_mar"):
        split = getattr(dataset, name)
        if len(split) == 0:
            continue
        if split[:, 0].min() < 0 or split[:, 0].max() >= n:
            raise RatingLogError(f"user id out of range in {name} split")
        if split[:, 1].min() < 0 or split[:, 1].max() >= m:
            raise RatingLogError(f"item id out of range in {name} split")
        if not np.isin(split[:, 2], (0, 1)).all():
            raise RatingLogError(f"labels must be 0/1 in {name} split")
        _check_unique_pairs(split, name)
    if len(dataset.train) and len(dataset.validation):
        train_keys = set(map(tuple, dataset.train[:, :2]))
        val_keys = set(map(tuple, dataset.validation[:, :2]))
        if train_keys & val_keys:
            raise RatingLogError("validation overlaps train")
    expected = build_user_features(n, m, dataset.train)
    if not np.array_equal(expected, dataset.user_features):
        raise RatingLogError("user_features inconsistent with train split")


def _parse_rating_file(path):
    """Read one rating log into (users, items, ratings), converting to 0-based ids."""
    users, items, ratings = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 3:
                raise RatingLogError(
                    f"expected 'user item rating', got {line.strip()!r}", lineno
                )
            try:
                u, v = int(parts[0]), int(parts[1])
                r = float(parts[2])
            except ValueError:
                raise RatingLogError(f"non-numeric field in {line.strip()!r}", lineno)
            if u < 1 or v < 1:
                raise RatingLogError(f"ids must be positive, got {u} {v}", lineno)
            if not 1.0 <= r <= 5.0:
                raise RatingLogError(f"rating {r} outside [1, 5]", lineno)
            users.append(u - 1)
            items.append(v - 1)
            ratings.append(r)
    if not users:
        raise RatingLogError(f"{path}: empty rating log")
    return (
        np.asarray(users, dtype=np.int64),
        np.asarray(items, dtype=np.int64),
        np.asarray(ratings, dtype=np.float64),
    )


def _binarize(users, items, ratings, threshold):
    labels = (ratings >= threshold).astype(np.int64)
    return np.column_stack([users, items, labels])


def load_rating_log(train_source, test_source, positive_threshold=DEFAULT_POSITIVE_THRESHOLD):
    """Build a dataset from MNAR train and MAR test rating logs.

    Validation starts empty; call :func:`split_validation` afterwards.
    """
    tr_u, tr_v, tr_r = _parse_rating_file(train_source)
    te_u, te_v, te_r = _parse_rating_file(test_source)
    num_users = int(max(tr_u.max(), te_u.max())) + 1
    num_items = int(max(tr_v.max(), te_v.max())) + 1
    dataset = InteractionDataset(
        num_users=num_users,
        num_items=num_items,
        train=_binarize(tr_u, tr_v, tr_r, positive_threshold),
        validation=_empty_split(),
        test_mar=_binarize(te_u, te_v, te_r, positive_threshold),
        user_features=None,
    )
    dataset.user_features = build_user_features(num_users, num_items, dataset.train)
    validate_dataset(dataset)
    return dataset


def split_validation(dataset, ratio, seed):
    """Move a uniform-random (1 - ratio) fraction of train pairs to validation.

    Deterministic given the seed; user features are rebuilt from the reduced
    train split so no held-out pair leaks into them.
    """
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"split ratio must lie in (0, 1), got {ratio}")
    if len(dataset.train) == 0:
        raise ConfigError("cannot split an empty train set")
    if len(dataset.validation):
        raise ConfigError("dataset already has a validation split")
    n = len(dataset.train)
    n_keep = int(round(ratio * n))
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    keep_idx = np.sort(perm[:n_keep])
    move_idx = np.sort(perm[n_keep:])
    new_train = dataset.train[keep_idx]
    return replace(
        dataset,
        train=new_train,
        validation=dataset.train[move_idx],
        user_features=build_user_features(dataset.num_users, dataset.num_items, new_train),
    )


def item_popularity(dataset):
    """Per-item train interaction counts (both label values)."""
    if len(dataset.train) == 0:
        raise ConfigError("item_popularity needs a non-empty train split")
    return np.bincount(dataset.train[:, 1], minlength=dataset.num_items).astype(np.int64)


def _check_range(name, lo, hi, low_ok=0.0, high_ok=1.0):
    if lo > hi:
        raise ConfigError(f"{name} range ({lo}, {hi}) has empty support")
    if lo < low_ok or hi > high_ok:
        raise ConfigError(f"{name} range ({lo}, {hi}) outside [{low_ok}, {high_ok}]")


def _block_of(items, num_items, num_clusters):
    return np.minimum(items * num_clusters // num_items, num_clusters - 1)


def _draw_probabilities(rng, num_clusters, num_items, profile, exposure_range,
                        relevance_range, options):
    """Per-(cluster, item) exposure and relevance matrices for one profile.

    'uniform' draws both uniformly from their ranges. 'blocks' partitions
    items into one contiguous block per cluster: relevance is high on the
    own block and low elsewhere, while exposure splits the own block into
    alternating hot and cold items, leaving other blocks barely exposed.
    Cold-but-relevant items are what an unweighted learner underrates.

    The optional neighbor ranges add taste overlap with an exposure gap:
    each cluster also likes the next cluster's block (neighbor_relevance)
    but almost never sees it (neighbor_exposure). Those items are globally
    popular, so a popularity-based propensity cannot flag them as
    under-exposed for the neighboring cluster; a cluster-level one can.
    """
    if profile == "uniform":
        exposure = rng.uniform(*exposure_range, size=(num_clusters, num_items))
        relevance = rng.uniform(*relevance_range, size=(num_clusters, num_items))
        return exposure, relevance
    if profile != "blocks":
        raise ConfigError(f"unknown synthetic profile {profile!r}")
    hot_exp = options.get("hot_exposure", (0.35, 0.55))
    cold_exp = options.get("cold_exposure", (0.02, 0.06))
    off_exp = options.get("off_exposure", (0.01, 0.04))
    hot_rel = options.get("hot_relevance", (0.65, 0.9))
    off_rel = options.get("off_relevance", (0.03, 0.12))
    neighbor_rel = options.get("neighbor_relevance")
    neighbor_exp = options.get("neighbor_exposure")
    for name, rng_pair in (("hot_exposure", hot_exp), ("cold_exposure", cold_exp),
                           ("off_exposure", off_exp), ("hot_relevance", hot_rel),
                           ("off_relevance", off_rel)):
        _check_range(name, *rng_pair)
    blocks = _block_of(np.arange(num_items), num_items, num_clusters)
    cluster_ids = np.arange(num_clusters)[:, None]
    own = blocks[None, :] == cluster_ids
    position = np.arange(num_items) % 2 == 0
    exposure = rng.uniform(*off_exp, size=(num_clusters, num_items))
    hot = own & position[None, :]
    cold = own & ~position[None, :]
    exposure[hot] = rng.uniform(*hot_exp, size=int(hot.sum()))
    exposure[cold] = rng.uniform(*cold_exp, size=int(cold.sum()))
    relevance = rng.uniform(*off_rel, size=(num_clusters, num_items))
    relevance[own] = rng.uniform(*hot_rel, size=int(own.sum()))
    if neighbor_rel is not None:
        _check_range("neighbor_relevance", *neighbor_rel)
        neighbor = blocks[None, :] == (cluster_ids + 1) % num_clusters
        relevance[neighbor] = rng.uniform(*neighbor_rel, size=int(neighbor.sum()))
        if neighbor_exp is not None:
            _check_range("neighbor_exposure", *neighbor_exp, low_ok=1e-12)
            exposure[neighbor] = rng.uniform(*neighbor_exp, size=int(neighbor.sum()))
    return exposure, relevance


def draw_full_labels(truth, rng):
    """One complete N x M 0/1 relevance draw from the ground-truth process."""
    probs = truth.relevance_prob[truth.true_cluster]
    return (rng.random(probs.shape) < probs).astype(np.int64)


def draw_observation_set(truth, labels, rng):
    """One MNAR observation split: Bernoulli-exposed pairs of a fixed label matrix."""
    probs = truth.exposure_prob[truth.true_cluster]
    mask = rng.random(probs.shape) < probs
    users, items = np.nonzero(mask)
    return np.column_stack([users, items, labels[users, items]])


def generate_synthetic(num_users, num_items, num_true_clusters, samples_per_user,
                       seed, exposure_range=DEFAULT_EXPOSURE_RANGE,
                       relevance_range=DEFAULT_RELEVANCE_RANGE,
                       profile="uniform", **profile_options):
    """Generate an MNAR world with known exposure and relevance probabilities.

    Train pairs are Bernoulli draws of the exposure matrix over the full
    user-item grid; the MAR test holds ``samples_per_user`` uniformly chosen
    items per user, labeled from the same underlying relevance draw.

    Returns (dataset, ground_truth).
    """
    if min(num_users, num_items, num_true_clusters, samples_per_user) < 1:
        raise ConfigError("all synthetic counts must be >= 1")
    if num_true_clusters > num_users:
        raise ConfigError("more true clusters than users")
    if samples_per_user > num_items:
        raise ConfigError("samples_per_user exceeds the item count")
    _check_range("exposure", *exposure_range, low_ok=1e-12)
    _check_range("relevance", *relevance_range)

    rng = np.random.default_rng(seed)
    true_cluster = rng.permutation(num_users) % num_true_clusters
    exposure, relevance = _draw_probabilities(
        rng, num_true_clusters, num_items, profile,
        exposure_range, relevance_range, profile_options,
    )
    truth = SyntheticGroundTruth(
        true_cluster=true_cluster,
        exposure_prob=exposure,
        relevance_prob=relevance,
    )
    labels = draw_full_labels(truth, rng)
    train = draw_observation_set(truth, labels, rng)
    test_rows = []
    for u in range(num_users):
        chosen = rng.choice(num_items, size=samples_per_user, replace=False)
        chosen = np.sort(chosen)
        test_rows.append(np.column_stack([
            np.full(samples_per_user, u, dtype=np.int64),
            chosen,
            labels[u, chosen],
        ]))
    dataset = InteractionDataset(
        num_users=num_users,
        num_items=num_items,
        train=train,
        validation=_empty_split(),
        test_mar=np.concatenate(test_rows, axis=0),
        user_features=None,
    )
    dataset.user_features = build_user_features(num_users, num_items, train)
    validate_dataset(dataset)
    return dataset, truth


def _write_split(path, split):
    with open(path, "w", encoding="utf-8") as fh:
        for u, v, label in split:
            rating = 5 if label else 1
            fh.write(f"{u + 1} {v + 1} {rating}\n")


def save_dataset(dataset, out_dir):
    """Persist all splits in the rating-log line format plus a meta file."""
    os.makedirs(out_dir, exist_ok=True)
    _write_split(os.path.join(out_dir, "train.txt"), dataset.train)
    _write_split(os.path.join(out_dir, "validation.txt"), dataset.validation)
    _write_split(os.path.join(out_dir, "test.txt"), dataset.test_mar)
    meta = {"num_users": dataset.num_users, "num_items": dataset.num_items}
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True)
        fh.write("\n")


def load_dataset(in_dir, positive_threshold=DEFAULT_POSITIVE_THRESHOLD):
    """Reload a directory written by :func:`save_dataset`."""
    dataset = load_rating_log(
        os.path.join(in_dir, "train.txt"),
        os.path.join(in_dir, "test.txt"),
        positive_threshold,
    )
    meta_path = os.path.join(in_dir, "meta.json")
    if os.path.exists(meta_path):
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        if meta["num_users"] < dataset.num_users or meta["num_items"] < dataset.num_items:
            raise RatingLogError("meta.json dimensions smaller than observed ids")
        dataset.num_users = meta["num_users"]
        dataset.num_items = meta["num_items"]
        dataset.user_features = build_user_features(
            dataset.num_users, dataset.num_items, dataset.train
        )
    val_path = os.path.join(in_dir, "validation.txt")
    if os.path.exists(val_path) and os.path.getsize(val_path):
        u, v, r = _parse_rating_file(val_path)
        if u.max() >= dataset.num_users or v.max() >= dataset.num_items:
            raise RatingLogError("validation ids exceed dataset dimensions")
        dataset.validation = _binarize(u, v, r, positive_threshold)
    validate_dataset(dataset)
    return dataset


def save_ground_truth(truth, out_dir):
    """Write the `cluster item exposure relevance` and `user cluster` tables."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "truth_cluster_item.txt"), "w", encoding="utf-8") as fh:
        fh.write("# cluster item exposure relevance\n")
        for c in range(truth.num_clusters):
            for v in range(truth.exposure_prob.shape[1]):
                fh.write(
                    f"{c} {v} {truth.exposure_prob[c, v]:.17g} "
                    f"{truth.relevance_prob[c, v]:.17g}\n"
                )
    with open(os.path.join(out_dir, "truth_user_cluster.txt"), "w", encoding="utf-8") as fh:
        fh.write("# user cluster\n")
        for u, c in enumerate(truth.true_cluster):
            fh.write(f"{u} {c}\n")


def load_ground_truth(in_dir):
    """Reload tables written by :func:`save_ground_truth`."""
    rows = np.loadtxt(
        os.path.join(in_dir, "truth_cluster_item.txt"), comments="#", ndmin=2
    )
    clusters = rows[:, 0].astype(np.int64)
    items = rows[:, 1].astype(np.int64)
    k, m = clusters.max() + 1, items.max() + 1
    exposure = np.zeros((k, m))
    relevance = np.zeros((k, m))
    exposure[clusters, items] = rows[:, 2]
    relevance[clusters, items] = rows[:, 3]
    user_rows = np.loadtxt(
        os.path.join(in_dir, "truth_user_cluster.txt"), comments="#", dtype=np.int64, ndmin=2
    )
    true_cluster = np.zeros(user_rows[:, 0].max() + 1, dtype=np.int64)
    true_cluster[user_rows[:, 0]] = user_rows[:, 1]
    return SyntheticGroundTruth(
        true_cluster=true_cluster, exposure_prob=exposure, relevance_prob=relevance
    )
