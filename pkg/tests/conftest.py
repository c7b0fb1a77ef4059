"""Shared test utilities: finite differences and small random instances."""

import numpy as np
import pytest

from cips.clustering import ClusterModel, encoder_forward
from cips.data import InteractionDataset, build_user_features


def l2_relative_error(analytic, numeric):
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    numeric = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return np.linalg.norm(analytic - numeric) / scale


def central_difference(loss_fn, array, step=1e-5):
    """Central finite-difference gradient of loss_fn() w.r.t. array, in place."""
    grad = np.zeros_like(array)
    flat = array.ravel()
    grad_flat = grad.ravel()
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        plus = loss_fn()
        flat[i] = original - step
        minus = loss_fn()
        flat[i] = original
        grad_flat[i] = (plus - minus) / (2.0 * step)
    return grad


def random_cluster_model(rng, num_items, hidden, dim, k, squared=False):
    """Random encoder parameters and cluster centers."""
    return ClusterModel(
        w1=rng.normal(scale=0.6, size=(num_items, hidden)),
        b1=rng.normal(scale=0.3, size=hidden),
        w2=rng.normal(scale=0.6, size=(hidden, dim)),
        b2=rng.normal(scale=0.3, size=dim),
        centers=rng.normal(scale=1.0, size=(k, dim)),
        squared_distance=squared,
    )


def features_clear_of_kinks(rng, model, n, kink_margin=1e-3, tries=200):
    """Random 0/1 feature rows whose layer-1 pre-activations avoid the kink."""
    m = model.w1.shape[0]
    for _ in range(tries):
        x = (rng.random((n, m)) < 0.5).astype(np.float64)
        z1, _, _ = encoder_forward(model, x)
        if np.abs(z1).min() > kink_margin:
            return x
    raise AssertionError("could not sample features away from the ReLU kink")


SEPARATED_WORLD = dict(
    profile="blocks",
    hot_exposure=(0.6, 0.8),
    cold_exposure=(0.3, 0.5),
    off_exposure=(0.02, 0.05),
)


def separated_world(seed, users=200, items=120, clusters=4, samples_per_user=4):
    """A 0/1 feature world whose clusters survive the random encoder
    projection: dense own-block exposure, near-empty elsewhere."""
    from cips.data import generate_synthetic

    return generate_synthetic(users, items, clusters, samples_per_user,
                              seed=seed, **SEPARATED_WORLD)


def cluster_purity(hard, true):
    """Fraction of users whose learned cluster's majority truth matches them."""
    hard = np.asarray(hard)
    true = np.asarray(true)
    total = sum(np.bincount(true[hard == c]).max() for c in np.unique(hard))
    return total / len(true)


def dataset_from_pairs(num_users, num_items, pairs):
    """Build a dataset directly from explicit train triples."""
    train = np.asarray(pairs, dtype=np.int64).reshape(-1, 3)
    return InteractionDataset(
        num_users=num_users,
        num_items=num_items,
        train=train,
        validation=np.empty((0, 3), dtype=np.int64),
        test_mar=np.empty((0, 3), dtype=np.int64),
        user_features=build_user_features(num_users, num_items, train),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)
