"""Recommender models and training objectives.

Scores are sigmoid(user . item). The user side is either a free embedding
table (baselines) or the clustering encoder's output (tied mode), in which
case recommender gradients flow through the encoder weights. All variants
reduce to per-pair coefficients (alpha, beta) on -log(yhat) and
-log(1 - yhat), so one mini-batch engine trains them all:

    mf      alpha = o / n                 beta = (1 - o) / n
    wmf     positives additionally scaled by wmf_positive_weight
    relmf   alpha = (o / p) / n           beta = (1 - o / p) / n
    ips     alpha = o / (N M p)           beta = (1 - o) / (N M p)

with p the clipped propensity lookup for the pair.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .clustering import (
    ClusterModel,
    encode,
    encoder_backward,
    encoder_forward,
    init_cluster_model,
    train_clustering,
)
from .container import load_container, save_container
from .errors import ConfigError, DivergenceError
from .evaluation import snips_accuracy, snips_dcg_at_k
from .optim import adam_step, init_adam_state
from .propensity import (
    cluster_propensity,
    item_popularity_propensity,
    lookup_pairs,
    user_level_propensity,
)

PREDICT_EPS = 1e-12
INIT_SCALE = 0.1

MODE_TIED = "encoder_tied"
MODE_FREE = "free"

BASELINE_VARIANTS = ("mf", "wmf", "relmf")


@dataclass
class RecModel:
    """User/item embeddings plus, in tied mode, the encoder that produced
    the user side. ``user_embeddings`` is always materialized for scoring."""

    user_embeddings: np.ndarray
    item_embeddings: np.ndarray
    encoder: object = None

    @property
    def mode(self):
        return MODE_FREE if self.encoder is None else MODE_TIED

    @property
    def shape(self):
        return self.user_embeddings.shape[0], self.item_embeddings.shape[0]

    def score_pairs(self, users, items):
        """Raw dot-product scores for parallel id arrays."""
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        return kernels.dot_rows(self.user_embeddings[users], self.item_embeddings[items])

    def predict_pairs(self, users, items):
        """Sigmoid scores, clipped into the open interval (0, 1)."""
        probs = kernels.sigmoid(self.score_pairs(users, items))
        return np.clip(probs, PREDICT_EPS, 1.0 - PREDICT_EPS)


def predict(model, u, v):
    """Preference probability for a single (user, item) pair."""
    n, m = model.shape
    if not (0 <= u < n and 0 <= v < m):
        raise IndexError(f"pair ({u}, {v}) outside {n} x {m}")
    return float(model.predict_pairs([u], [v])[0])


def _pair_terms(model, pairs, alpha, beta):
    z = model.score_pairs(pairs[:, 0], pairs[:, 1])
    if not np.isfinite(z).all():
        raise ValueError("model produced non-finite scores")
    terms, _ = kernels.bce_terms_and_grad(z, alpha, beta)
    return float(terms.sum())


def naive_loss(model, pairs):
    """Mean binary cross entropy over the observed pairs."""
    if len(pairs) == 0:
        raise ValueError("naive_loss needs at least one pair")
    o = pairs[:, 2].astype(np.float64)
    n = len(pairs)
    return _pair_terms(model, pairs, o / n, (1.0 - o) / n)


def ideal_loss(model, full_label_matrix):
    """Mean binary cross entropy over the complete user-item grid.

    Only computable when every label is known (synthetic worlds).
    """
    labels = np.asarray(full_label_matrix, dtype=np.float64)
    if labels.shape != (model.shape[0], model.shape[1]):
        raise ValueError(f"label matrix must be complete with shape {model.shape}")
    if not np.isin(labels, (0.0, 1.0)).all():
        raise ValueError("label matrix must be fully observed 0/1 values")
    z = model.user_embeddings @ model.item_embeddings.T
    terms = labels * kernels.softplus(-z) + (1.0 - labels) * kernels.softplus(z)
    return float(terms.mean())


def ips_loss(model, pairs, propensity_table):
    """Inverse-propensity-weighted cross entropy with the full-grid
    normalization, making its expectation comparable to ideal_loss."""
    if len(pairs) == 0:
        raise ValueError("ips_loss needs at least one pair")
    n, m = model.shape
    p = lookup_pairs(propensity_table, pairs[:, 0], pairs[:, 1])
    o = pairs[:, 2].astype(np.float64)
    w = 1.0 / (n * m * p)
    return _pair_terms(model, pairs, o * w, (1.0 - o) * w)


def variant_loss(model, dataset, variant, config, propensity_table=None, pairs=None):
    """The training objective of one variant evaluated on given pairs
    (defaults to the train split)."""
    if pairs is None:
        pairs = dataset.train
    if len(pairs) == 0:
        raise ValueError("variant_loss needs at least one pair")
    alpha, beta = _coefficients(variant, dataset, pairs, config, propensity_table)
    return _pair_terms(model, pairs, alpha, beta)


def _sample_unlabeled(dataset, count, rng):
    """Uniform unobserved grid pairs, labeled 0, without duplicates."""
    n, m = dataset.shape
    observed = set((u * m + v) for u, v in dataset.train[:, :2])
    if count > n * m - len(observed):
        raise ConfigError("unlabeled_ratio asks for more pairs than the grid holds")
    picked = []
    seen = set()
    while len(picked) < count:
        for flat in rng.integers(0, n * m, size=2 * count):
            flat = int(flat)
            if flat in observed or flat in seen:
                continue
            seen.add(flat)
            picked.append(flat)
            if len(picked) == count:
                break
    flat = np.asarray(picked, dtype=np.int64)
    return np.column_stack([flat // m, flat % m, np.zeros(count, dtype=np.int64)])


def _training_pairs(dataset, config, rng):
    pairs = dataset.train
    if config.unlabeled_ratio > 0:
        count = int(round(config.unlabeled_ratio * len(pairs)))
        if count:
            pairs = np.concatenate([pairs, _sample_unlabeled(dataset, count, rng)])
    return pairs


def _coefficients(variant, dataset, pairs, config, propensity_table):
    o = pairs[:, 2].astype(np.float64)
    count = len(pairs)
    if variant == "mf":
        w = np.full(count, 1.0 / count)
        return w * o, w * (1.0 - o)
    if variant == "wmf":
        w = np.where(o == 1.0, config.wmf_positive_weight, 1.0) / count
        return w * o, w * (1.0 - o)
    if variant == "relmf":
        table = item_popularity_propensity(dataset, config.relmf_exponent, config.clip_floor)
        r = o / lookup_pairs(table, pairs[:, 0], pairs[:, 1])
        return r / count, (1.0 - r) / count
    if variant == "ips":
        if propensity_table is None:
            raise ConfigError("ips training requires a propensity table")
        p = lookup_pairs(propensity_table, pairs[:, 0], pairs[:, 1])
        w = 1.0 / (dataset.num_users * dataset.num_items * p)
        return w * o, w * (1.0 - o)
    raise ConfigError(f"unknown training variant {variant!r}")


def _selection_propensities(dataset, config, propensity_table):
    if config.selection_propensity == "cluster" and propensity_table is not None:
        table = propensity_table
    else:
        table = item_popularity_propensity(dataset, config.relmf_exponent, config.clip_floor)
    val = dataset.validation
    return lookup_pairs(table, val[:, 0], val[:, 1])


def batch_pair_loss_and_grads(params, bu, bv, alpha, beta, encoder=None, features=None):
    """Loss and gradients for one mini-batch of (user, item) pairs.

    ``params`` holds "items" plus either "users" (free mode) or the encoder
    weight arrays (tied mode, with ``encoder``/``features`` supplied so the
    user side is recomputed through the network and gradients flow back).
    """
    if encoder is not None:
        x = features[bu]
        z1, hidden, su = encoder_forward(encoder, x)
    else:
        su = params["users"][bu]
    sv = params["items"][bv]
    z = kernels.dot_rows(su, sv)
    terms, dz = kernels.bce_terms_and_grad(z, alpha, beta)
    loss = float(terms.sum())
    gu = dz[:, None] * sv
    gv = dz[:, None] * su
    item_grad = np.zeros_like(params["items"])
    kernels.scatter_add_rows(item_grad, bv, gv)
    grads = {"items": item_grad}
    if encoder is not None:
        grads.update(encoder_backward(encoder, x, z1, hidden, gu))
    else:
        user_grad = np.zeros_like(params["users"])
        kernels.scatter_add_rows(user_grad, bu, gu)
        grads["users"] = user_grad
    return loss, grads


def _train(dataset, config, rng, variant, propensity_table=None, encoder=None,
           item_init=None):
    """Shared mini-batch engine. Returns (RecModel, per-epoch history).

    With a validation split present, the returned model is the epoch
    snapshot with the best SNIPS-validated selection metric; otherwise the
    final epoch's parameters.
    """
    config.validate()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    n_users, n_items = dataset.shape
    d = config.embedding_dim

    tied = encoder is not None
    if tied:
        enc = encoder.copy()
        d = enc.embedding_dim
        features = dataset.user_features.astype(np.float64)
        params = {k: v for k, v in enc.params().items() if k != "centers"}
    else:
        enc, features = None, None
        params = {"users": INIT_SCALE * rng.standard_normal((n_users, d))}
    if item_init is not None:
        params["items"] = item_init.copy()
    else:
        params["items"] = INIT_SCALE * rng.standard_normal((n_items, d))

    pairs = _training_pairs(dataset, config, rng)
    alpha, beta = _coefficients(variant, dataset, pairs, config, propensity_table)
    p_users, p_items = pairs[:, 0], pairs[:, 1]

    have_validation = len(dataset.validation) > 0
    if have_validation:
        val = dataset.validation
        val_props = _selection_propensities(dataset, config, propensity_table)

    def current_model():
        if tied:
            return RecModel(encode(enc, features), params["items"], enc)
        return RecModel(params["users"], params["items"])

    state = init_adam_state(params)
    history = []
    best_key, best_params = None, None
    n = len(pairs)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for batch_index, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            batch_loss, grads = batch_pair_loss_and_grads(
                params, p_users[idx], p_items[idx], alpha[idx], beta[idx],
                encoder=enc if tied else None,
                features=features if tied else None,
            )
            if not np.isfinite(batch_loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch {batch_index}"
                )
            adam_step(params, grads, state, config.learning_rate,
                      weight_decay=config.weight_decay)

        model = current_model()
        entry = {"epoch": epoch, "loss": _pair_terms(model, pairs, alpha, beta)}
        if have_validation:
            probs = model.predict_pairs(val[:, 0], val[:, 1])
            entry["snips_dcg3"] = snips_dcg_at_k(
                val[:, 0], val[:, 1], val[:, 2], probs, val_props, k=3
            )
            entry["snips_accuracy"] = snips_accuracy(val[:, 2], probs, val_props)
            key = entry["snips_dcg3" if config.selection_metric == "dcg" else "snips_accuracy"]
            if best_key is None or key > best_key:
                best_key = key
                best_params = {name: arr.copy() for name, arr in params.items()}
        history.append(entry)

    if best_params is not None:
        for name, arr in best_params.items():
            np.copyto(params[name], arr)
    return current_model(), history


def train_recommender(dataset, propensity_table, cluster_model, config, rng=None,
                      item_init=None):
    """IPS-weighted training; ties the user side to ``cluster_model``'s
    encoder when one is given, tracking the best SNIPS-validated epoch."""
    return _train(dataset, config, rng, "ips", propensity_table=propensity_table,
                  encoder=cluster_model, item_init=item_init)


def train_baseline(dataset, variant, config, rng=None):
    """MF / WMF / Rel-MF training on a free user embedding table."""
    if variant not in BASELINE_VARIANTS:
        raise ConfigError(f"variant must be one of {BASELINE_VARIANTS}, got {variant!r}")
    return _train(dataset, config, rng, variant)


def _outer_score(history, metric):
    name = "snips_dcg3" if metric == "dcg" else "snips_accuracy"
    keys = [e[name] for e in history if name in e]
    return max(keys) if keys else None


def _compact_clusters(hard):
    """Renumber hard assignments contiguously, dropping unused cluster ids.

    Self-training with more centers than natural groups can leave centers
    that win no user; strata are only meaningful where users exist.
    """
    used, compact = np.unique(hard, return_inverse=True)
    return compact.astype(np.int64)


def train_cips(dataset, config):
    """Alternating pipeline: cluster users, estimate cluster-level
    propensities from the hard assignments, then train the recommender
    with shared embeddings; repeat up to ``outer_iterations`` times.

    Setting K equal to the user count skips the clustering phase entirely
    and estimates user-level propensities (one stratum per user); K = 1
    degenerates to a single shared stratum.

    Returns (rec_model, cluster_model, propensity_table, history). With a
    validation split and early stopping enabled, the artifacts come from
    the best-scoring outer iteration.
    """
    config.validate()
    if config.num_clusters > dataset.num_users:
        raise ConfigError("num_clusters exceeds the user count")
    root = np.random.SeedSequence(config.seed)
    streams = root.spawn(1 + 2 * config.outer_iterations)
    init_rng = np.random.default_rng(streams[0])
    features = dataset.user_features.astype(np.float64)

    if config.num_clusters == dataset.num_users:
        enc = init_cluster_model(dataset.num_items, config, init_rng,
                                 squared_distance=config.squared_distance)
        enc.centers = encode(enc, features)
        items = INIT_SCALE * init_rng.standard_normal(
            (dataset.num_items, config.embedding_dim)
        )
        table = user_level_propensity(dataset, config.clip_floor)
        rec, rec_history = train_recommender(
            dataset, table, enc, config,
            rng=np.random.default_rng(streams[2]), item_init=items,
        )
        history = [dict(entry, outer=0) for entry in rec_history]
        return rec, rec.encoder, table, history

    enc = init_cluster_model(dataset.num_items, config, init_rng, features=features,
                             squared_distance=config.squared_distance)
    items = INIT_SCALE * init_rng.standard_normal(
        (dataset.num_items, config.embedding_dim)
    )
    history = []
    best = None
    best_score = None
    for it in range(config.outer_iterations):
        cluster_rng = np.random.default_rng(streams[1 + 2 * it])
        rec_rng = np.random.default_rng(streams[2 + 2 * it])
        enc, assignments, _ = train_clustering(
            dataset, config, initial_model=enc, rng=cluster_rng
        )
        table = cluster_propensity(
            dataset, _compact_clusters(assignments.hard), config.clip_floor,
            normalizer=config.propensity_normalizer,
        )
        rec, rec_history = train_recommender(
            dataset, table, enc, config, rng=rec_rng, item_init=items
        )
        history.extend(dict(entry, outer=it) for entry in rec_history)
        enc = rec.encoder
        items = rec.item_embeddings
        score = _outer_score(rec_history, config.selection_metric)
        if not config.early_stop_outer or score is None:
            best = (rec, enc, table)
            continue
        if best_score is None or score > best_score:
            best_score = score
            best = (rec, enc, table)
        else:
            break
    rec, enc, table = best
    return rec, enc, table, history


def save_model(model, path, meta=None):
    """Checkpoint a RecModel in the flat container format; tied mode adds
    the encoder blocks and centers next to the embedding tables."""
    info = {"kind": "rec_model", "version": 1, "mode": model.mode}
    if meta:
        info.update(meta)
    arrays = {
        "user_embeddings": model.user_embeddings,
        "item_embeddings": model.item_embeddings,
    }
    if model.encoder is not None:
        info["squared_distance"] = bool(model.encoder.squared_distance)
        for name, arr in model.encoder.params().items():
            arrays[f"encoder_{name}"] = arr
    save_container(path, info, arrays)


def load_model(path):
    """Reload a checkpoint written by :func:`save_model`.

    Returns (model, meta)."""
    meta, arrays = load_container(path)
    if meta.get("kind") != "rec_model":
        raise ValueError(f"{path}: not a recommender checkpoint")
    encoder = None
    if meta["mode"] == MODE_TIED:
        encoder = ClusterModel(
            w1=arrays["encoder_w1"], b1=arrays["encoder_b1"],
            w2=arrays["encoder_w2"], b2=arrays["encoder_b2"],
            centers=arrays["encoder_centers"],
            squared_distance=bool(meta.get("squared_distance", False)),
        )
    model = RecModel(arrays["user_embeddings"], arrays["item_embeddings"], encoder)
    return model, meta
