"""Self-training user clustering on encoder embeddings.

A two-layer encoder maps each user's item-indicator vector to a low-rank
embedding; cluster affinities follow inverse distance to learnable centers,
sharpened each epoch into a target distribution whose KL divergence against
the affinities is minimized by mini-batch adaptive gradient steps.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .container import load_container, save_container
from .errors import ClusterCollapseError, ConfigError
from .optim import adam_step, init_adam_state

CENTER_DISTINCT_TOL = 1e-8
MASS_TOL = 1e-12


@dataclass
class ClusterModel:
    """Two-layer encoder parameters plus learnable cluster centers."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    centers: np.ndarray
    squared_distance: bool = False

    @property
    def num_clusters(self):
        return self.centers.shape[0]

    @property
    def embedding_dim(self):
        return self.w2.shape[1]

    def params(self):
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2,
                "centers": self.centers}

    def copy(self):
        return ClusterModel(
            w1=self.w1.copy(), b1=self.b1.copy(), w2=self.w2.copy(),
            b2=self.b2.copy(), centers=self.centers.copy(),
            squared_distance=self.squared_distance,
        )


@dataclass
class Assignments:
    """Soft (N x K) and hard (N,) cluster assignments."""

    soft: np.ndarray
    hard: np.ndarray


def encoder_forward(model, x):
    """Forward pass returning the pre-activation, hidden, and output layers."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.w1.shape[0]:
        raise ValueError(
            f"feature width {x.shape[-1]} does not match encoder input {model.w1.shape[0]}"
        )
    z1 = x @ model.w1 + model.b1
    hidden = np.maximum(z1, 0.0)
    h = hidden @ model.w2 + model.b2
    return z1, hidden, h


def encoder_backward(model, x, z1, hidden, grad_h):
    """Gradients of the encoder parameters given upstream d loss / d h."""
    x = np.asarray(x, dtype=np.float64)
    grad_w2 = hidden.T @ grad_h
    grad_b2 = grad_h.sum(axis=0)
    grad_hidden = grad_h @ model.w2.T
    grad_z1 = grad_hidden * (z1 > 0.0)
    grad_w1 = x.T @ grad_z1
    grad_b1 = grad_z1.sum(axis=0)
    return {"w1": grad_w1, "b1": grad_b1, "w2": grad_w2, "b2": grad_b2}


def encode(model, x):
    """Embed one feature vector (M,) or a batch (B, M)."""
    single = np.ndim(x) == 1
    arr = np.atleast_2d(np.asarray(x, dtype=np.float64))
    _, _, h = encoder_forward(model, arr)
    if not np.isfinite(h).all():
        raise ValueError("encoder produced non-finite embeddings")
    return h[0] if single else h


def soft_assign(embeddings, centers, squared=False):
    """Inverse-distance cluster membership probabilities, rows summing to 1."""
    embeddings = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    centers = np.asarray(centers, dtype=np.float64)
    if embeddings.shape[1] != centers.shape[1]:
        raise ValueError("embedding and center widths differ")
    if not (np.isfinite(embeddings).all() and np.isfinite(centers).all()):
        raise ValueError("soft_assign requires finite inputs")
    dist = kernels.pairwise_distances(embeddings, centers)
    return kernels.soft_assign_from_distances(dist, squared)


def target_distribution(soft):
    """Sharpened self-training targets: square affinities, renormalize by
    cluster mass, then by row."""
    soft = np.asarray(soft, dtype=np.float64)
    mass = soft.sum(axis=0)
    if (mass == 0.0).any():
        raise ClusterCollapseError(
            f"clusters {np.nonzero(mass == 0.0)[0].tolist()} have zero assignment mass"
        )
    raw = soft**2 / mass
    return raw / raw.sum(axis=1, keepdims=True)


def kl_loss(targets, soft):
    """sum_u KL(target_u || soft_u), with 0 log 0 treated as 0."""
    targets = np.asarray(targets, dtype=np.float64)
    soft = np.asarray(soft, dtype=np.float64)
    if ((soft == 0.0) & (targets > 0.0)).any():
        raise ValueError("KL undefined: zero assignment where target has mass")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(targets > 0.0, targets / soft, 1.0)
    return float(np.sum(np.where(targets > 0.0, targets * np.log(ratio), 0.0)))


def hard_assign(soft):
    """Row argmax; ties resolve to the smallest cluster index."""
    return np.argmax(np.asarray(soft), axis=1).astype(np.int64)


def _kmeans_once(points, k, rng, iters):
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    centers[0] = points[rng.integers(n)]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[j] = points[rng.integers(n)]
            continue
        centers[j] = points[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((points - centers[j]) ** 2).sum(axis=1))
    for _ in range(iters):
        dist = kernels.pairwise_distances(points, centers)
        labels = np.argmin(dist, axis=1)
        for j in range(k):
            members = points[labels == j]
            if len(members):
                centers[j] = members.mean(axis=0)
            else:
                centers[j] = points[np.argmax(dist.min(axis=1))]
    dist = kernels.pairwise_distances(points, centers)
    return centers, float((dist.min(axis=1) ** 2).sum())


def _kmeans_plus_plus(points, k, rng, iters=20, restarts=4):
    """k-means++ seeding plus a fixed number of Lloyd iterations, keeping
    the lowest-inertia run of a few restarts.

    Emptied clusters are re-seeded with the point farthest from its center,
    so k distinct input points always yield k usable centers.
    """
    best, best_inertia = None, np.inf
    for _ in range(restarts):
        centers, inertia = _kmeans_once(points, k, rng, iters)
        if inertia < best_inertia:
            best, best_inertia = centers, inertia
    return best


def init_cluster_model(num_items, config, rng, features=None, squared_distance=False):
    """Uniform fan-balanced encoder init; centers from k-means++ on the
    initial embeddings when features are given, standard normal otherwise."""
    m, h, d, k = num_items, config.hidden_dim, config.embedding_dim, config.num_clusters
    lim1 = np.sqrt(6.0 / (m + h))
    lim2 = np.sqrt(6.0 / (h + d))
    model = ClusterModel(
        w1=rng.uniform(-lim1, lim1, size=(m, h)),
        b1=np.zeros(h),
        w2=rng.uniform(-lim2, lim2, size=(h, d)),
        b2=np.zeros(d),
        centers=np.empty((k, d)),
        squared_distance=squared_distance,
    )
    if features is not None:
        embeddings = encode(model, features)
        model.centers = _kmeans_plus_plus(embeddings, k, rng)
    else:
        model.centers = rng.standard_normal((k, d))
    return model


def _check_centers_distinct(centers):
    k = centers.shape[0]
    for i in range(k):
        for j in range(i + 1, k):
            if np.abs(centers[i] - centers[j]).max() < CENTER_DISTINCT_TOL:
                raise ClusterCollapseError(f"centers {i} and {j} collapsed onto each other")


def batch_kl_loss_and_grads(model, x, target_rows):
    """KL objective and gradients for one user mini-batch, targets frozen.

    Returns (loss, grads) with grads keyed like ``model.params()``.
    """
    z1, hidden, h = encoder_forward(model, x)
    dist = kernels.pairwise_distances(h, model.centers)
    soft = kernels.soft_assign_from_distances(dist, model.squared_distance)
    loss, grad_h, grad_centers = kernels.kl_grads(
        h, model.centers, dist, soft, target_rows, model.squared_distance
    )
    grads = encoder_backward(model, x, z1, hidden, grad_h)
    grads["centers"] = grad_centers
    return loss, grads


def train_clustering(dataset, config, initial_model=None, rng=None):
    """Alternating self-training: per epoch refresh all assignments and the
    target distribution once, then take mini-batch gradient steps on the KL
    objective, updating the encoder and centers together.

    Returns (model, assignments, per-epoch KL losses). Deterministic for a
    given seed.
    """
    n = dataset.num_users
    if config.num_clusters > n:
        raise ConfigError(f"K={config.num_clusters} exceeds the user count {n}")
    if config.cluster_epochs < 1:
        raise ConfigError("cluster_epochs must be >= 1")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    features = dataset.user_features.astype(np.float64)
    if initial_model is None:
        model = init_cluster_model(
            dataset.num_items, config, rng, features=features,
            squared_distance=config.squared_distance,
        )
    else:
        model = initial_model.copy()
    squared = model.squared_distance

    params = model.params()
    state = init_adam_state(params)
    losses = []
    for epoch in range(config.cluster_epochs):
        h_all = encode(model, features)
        soft = soft_assign(h_all, model.centers, squared)
        mass = soft.sum(axis=0)
        if (mass < MASS_TOL).any():
            dead = np.nonzero(mass < MASS_TOL)[0].tolist()
            raise ClusterCollapseError(f"epoch {epoch}: clusters {dead} collapsed")
        target = target_distribution(soft)
        losses.append(kl_loss(target, soft))

        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            _, grads = batch_kl_loss_and_grads(model, features[batch], target[batch])
            adam_step(params, grads, state, config.cluster_learning_rate)

    h_all = encode(model, features)
    soft = soft_assign(h_all, model.centers, squared)
    if config.num_clusters > 1:
        _check_centers_distinct(model.centers)
    assignments = Assignments(soft=soft, hard=hard_assign(soft))
    return model, assignments, losses


def save_cluster_model(model, path, meta=None):
    """Checkpoint encoder parameters and centers in the flat container format."""
    info = {"kind": "cluster_model", "version": 1,
            "squared_distance": bool(model.squared_distance)}
    if meta:
        info.update(meta)
    save_container(path, info, model.params())


def load_cluster_model(path):
    """Reload a checkpoint written by :func:`save_cluster_model`."""
    meta, arrays = load_container(path)
    if meta.get("kind") != "cluster_model":
        raise ValueError(f"{path}: not a clustering checkpoint")
    return ClusterModel(
        w1=arrays["w1"], b1=arrays["b1"], w2=arrays["w2"], b2=arrays["b2"],
        centers=arrays["centers"],
        squared_distance=bool(meta.get("squared_distance", False)),
    )
