"""Observation-propensity estimation from interaction frequencies.

The cluster-level estimator pools the train interactions of all users in a
stratum and normalizes each item's count by the stratum's most-interacted
item, so every stored value lies in [0, 1] with at least one exact 1 per
cluster. Setting one stratum per user recovers user-level scores; the
item-popularity table is the usual global baseline. Lookups apply a
clipping floor so inverse weights stay bounded.
"""

from dataclasses import dataclass

import numpy as np

from .data import item_popularity
from .errors import ConfigError, PropensityError

DEFAULT_CLIP_FLOOR = 0.05

MODE_CLUSTER = "cluster"
MODE_USER_LEVEL = "user_level"
MODE_ITEM_POPULARITY = "item_popularity"

NORMALIZER_PER_CLUSTER = "per_cluster"
NORMALIZER_PER_ITEM = "per_item"


@dataclass
class PropensityTable:
    """Estimated observation probabilities, looked up per (user, item)."""

    mode: str
    values: np.ndarray
    cluster_of: np.ndarray
    clip_floor: float
    normalizer: str = NORMALIZER_PER_CLUSTER

    @property
    def num_clusters(self):
        return self.values.shape[0]


def _validate_floor(clip_floor):
    if not 0.0 < clip_floor < 1.0:
        raise ConfigError(f"clip_floor must lie in (0, 1), got {clip_floor}")


def cluster_propensity(dataset, cluster_of, clip_floor=DEFAULT_CLIP_FLOOR,
                       normalizer=NORMALIZER_PER_CLUSTER):
    """Frequency-ratio propensities over (cluster, item) cells.

    values[c, v] = count[c, v] / max_v' count[c, v'] under the default
    normalizer; the 'per_item' alternative divides by the item's maximum
    count across clusters instead.
    """
    _validate_floor(clip_floor)
    cluster_of = np.asarray(cluster_of, dtype=np.int64)
    if len(cluster_of) != dataset.num_users:
        raise PropensityError("cluster_of must assign every user")
    if cluster_of.min() < 0:
        raise PropensityError("negative cluster id")
    k = int(cluster_of.max()) + 1
    sizes = np.bincount(cluster_of, minlength=k)
    if (sizes == 0).any():
        raise PropensityError(
            f"empty clusters: {np.nonzero(sizes == 0)[0].tolist()}"
        )
    counts = np.zeros((k, dataset.num_items), dtype=np.float64)
    np.add.at(counts, (cluster_of[dataset.train[:, 0]], dataset.train[:, 1]), 1.0)
    totals = counts.sum(axis=1)
    if (totals == 0).any():
        dead = np.nonzero(totals == 0)[0].tolist()
        raise PropensityError(f"clusters {dead} have no interactions; propensity undefined")
    if normalizer == NORMALIZER_PER_CLUSTER:
        values = counts / counts.max(axis=1, keepdims=True)
    elif normalizer == NORMALIZER_PER_ITEM:
        item_max = counts.max(axis=0, keepdims=True)
        values = np.divide(counts, item_max, out=np.zeros_like(counts),
                           where=item_max > 0)
    else:
        raise ConfigError(f"unknown propensity normalizer {normalizer!r}")
    return PropensityTable(
        mode=MODE_CLUSTER, values=values, cluster_of=cluster_of,
        clip_floor=clip_floor, normalizer=normalizer,
    )


def user_level_propensity(dataset, clip_floor=DEFAULT_CLIP_FLOOR):
    """Cluster estimator with one stratum per user."""
    identity = np.arange(dataset.num_users, dtype=np.int64)
    try:
        table = cluster_propensity(dataset, identity, clip_floor)
    except PropensityError as exc:
        raise PropensityError(f"user-level propensity undefined: {exc}") from exc
    table.mode = MODE_USER_LEVEL
    return table


def item_popularity_propensity(dataset, exponent, clip_floor=DEFAULT_CLIP_FLOOR):
    """Global popularity-power propensities: (count / max count) ** exponent."""
    _validate_floor(clip_floor)
    if not 0.0 < exponent <= 1.0:
        raise ConfigError(f"exponent must lie in (0, 1], got {exponent}")
    counts = item_popularity(dataset).astype(np.float64)
    top = counts.max()
    if top == 0:
        raise PropensityError("no interactions; popularity propensity undefined")
    values = (counts / top) ** exponent
    return PropensityTable(
        mode=MODE_ITEM_POPULARITY, values=values[None, :],
        cluster_of=np.zeros(dataset.num_users, dtype=np.int64),
        clip_floor=clip_floor,
    )


def lookup_pairs(table, users, items):
    """Clipped propensities for parallel arrays of user and item ids."""
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    if users.size and (users.min() < 0 or users.max() >= len(table.cluster_of)):
        raise IndexError("user id out of range")
    if items.size and (items.min() < 0 or items.max() >= table.values.shape[1]):
        raise IndexError("item id out of range")
    if table.mode == MODE_ITEM_POPULARITY:
        raw = table.values[0, items]
    else:
        raw = table.values[table.cluster_of[users], items]
    return np.maximum(raw, table.clip_floor)


def lookup(table, u, v):
    """Clipped propensity for one (user, item) pair."""
    return float(lookup_pairs(table, [u], [v])[0])


def save_table(table, path):
    """Export as `cluster item propensity` lines under a describing header."""
    k, m = table.values.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            f"# mode={table.mode} clip_floor={table.clip_floor:.17g} K={k}\n"
        )
        for c in range(k):
            for v in range(m):
                fh.write(f"{c} {v} {table.values[c, v]:.17g}\n")
