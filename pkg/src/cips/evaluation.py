"""Ranking metrics, SNIPS estimation, and the MAR-test evaluation protocol.

Every test user's candidate list is their own MAR test items, ranked by
predicted score (ties broken by item id). DCG averages over all users with
at least one candidate; Recall and MAP skip users with no relevant
candidate, where they are undefined.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .data import item_popularity

METRICS = ("DCG", "Recall", "MAP")
DEFAULT_KS = (1, 3, 5)
SEGMENT_ALL = "all"
SEGMENT_NON_POPULAR = "non_popular"


@dataclass
class EvalRow:
    model: str
    metric: str
    k: int
    segment: str
    value: float
    seed: int


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)

    def value(self, metric, k, segment):
        for row in self.rows:
            if (row.metric, row.k, row.segment) == (metric, k, segment):
                return row.value
        raise KeyError((metric, k, segment))


def dcg_at_k(ranked_relevance, k):
    """Discounted cumulative gain over the top k of a binary relevance list."""
    total = 0.0
    for i, rel in enumerate(ranked_relevance[:k]):
        if rel:
            total += 1.0 / math.log2(i + 2)
    return total


def recall_at_k(ranked_relevance, total_relevant, k):
    """Fraction of the user's relevant items captured in the top k."""
    if total_relevant <= 0:
        raise ValueError("recall undefined for a user with no relevant items")
    hits = 0
    for rel in ranked_relevance[:k]:
        if rel:
            hits += 1
    return hits / total_relevant


def map_at_k(ranked_relevance, total_relevant, k):
    """Average precision at k, normalized by min(k, total_relevant)."""
    if total_relevant <= 0:
        raise ValueError("average precision undefined with no relevant items")
    hits = 0
    score = 0.0
    for i, rel in enumerate(ranked_relevance[:k]):
        if rel:
            hits += 1
            score += hits / (i + 1)
    return score / min(k, total_relevant)


def snips_estimate(values, propensities):
    """Self-normalized inverse-propensity mean: (sum v/p) / (sum 1/p)."""
    values = np.asarray(values, dtype=np.float64)
    propensities = np.asarray(propensities, dtype=np.float64)
    if values.size == 0:
        raise ValueError("snips_estimate needs at least one value")
    if (propensities <= 0).any():
        raise ValueError("propensities must be strictly positive")
    inv = 1.0 / propensities
    return float(np.sum(values * inv) / np.sum(inv))


def rank_order(items, scores):
    """Indices sorting by descending score, then ascending item id."""
    return np.lexsort((items, -np.asarray(scores, dtype=np.float64)))


def _group_by_user(split):
    order = np.lexsort((split[:, 1], split[:, 0]))
    rows = split[order]
    boundaries = np.nonzero(np.diff(rows[:, 0]))[0] + 1
    return [chunk for chunk in np.split(rows, boundaries)]


def snips_dcg_at_k(users, items, labels, scores, propensities, k=3):
    """SNIPS-weighted DCG over biased feedback pairs.

    Each pair's value is its discount contribution given the within-user
    ranking of the scored pairs (0 beyond position k); the weighted mean
    self-normalizes over the pairs' inverse propensities.
    """
    split = np.column_stack([users, items, labels])
    scores = np.asarray(scores, dtype=np.float64)
    props = np.asarray(propensities, dtype=np.float64)
    order = np.lexsort((split[:, 1], split[:, 0]))
    inverse = np.argsort(order)
    sorted_rows = split[order]
    sorted_scores = scores[order]
    boundaries = np.nonzero(np.diff(sorted_rows[:, 0]))[0] + 1
    starts = np.concatenate([[0], boundaries, [len(split)]])
    out = np.empty(len(split), dtype=np.float64)
    for a, b in zip(starts[:-1], starts[1:]):
        rows = sorted_rows[a:b]
        ranking = rank_order(rows[:, 1], sorted_scores[a:b])
        contrib = np.zeros(b - a)
        for pos, idx in enumerate(ranking[:k]):
            if rows[idx, 2]:
                contrib[idx] = 1.0 / math.log2(pos + 2)
        out[a:b] = contrib
    values = out[inverse]
    return snips_estimate(values, props)


def snips_accuracy(labels, probs, propensities):
    """SNIPS-weighted 0/1 accuracy of thresholded predictions."""
    correct = ((np.asarray(probs) >= 0.5).astype(np.int64) == np.asarray(labels))
    return snips_estimate(correct.astype(np.float64), propensities)


def non_popular_items(dataset, segment_size):
    """The segment_size least train-interacted items, ties toward small ids."""
    if not 1 <= segment_size <= dataset.num_items:
        raise ValueError(
            f"segment size {segment_size} outside [1, {dataset.num_items}]"
        )
    counts = item_popularity(dataset)
    order = np.lexsort((np.arange(dataset.num_items), counts))
    return np.sort(order[:segment_size])


def _metrics_for_users(user_chunks, model, ks):
    accs = {(metric, k): [] for metric in METRICS for k in ks}
    for chunk in user_chunks:
        items = chunk[:, 1]
        labels = chunk[:, 2]
        scores = model.predict_pairs(chunk[:, 0], items)
        ranked = labels[rank_order(items, scores)]
        total_relevant = int(labels.sum())
        for k in ks:
            accs[("DCG", k)].append(dcg_at_k(ranked, k))
            if total_relevant > 0:
                accs[("Recall", k)].append(recall_at_k(ranked, total_relevant, k))
                accs[("MAP", k)].append(map_at_k(ranked, total_relevant, k))
    return accs


def evaluate(model, dataset, segment_size=None, ks=DEFAULT_KS, model_name="model",
             seed=0):
    """Full metric grid over the MAR test split: every metric at every k for
    the 'all' and 'non_popular' item segments."""
    if len(dataset.test_mar) == 0:
        raise ValueError("evaluate requires a non-empty MAR test split")
    if segment_size is None:
        segment_size = min(dataset.num_items, 500)
    segment = non_popular_items(dataset, segment_size)
    report = EvalReport()
    for name, keep in ((SEGMENT_ALL, None), (SEGMENT_NON_POPULAR, segment)):
        split = dataset.test_mar
        if keep is not None:
            split = split[np.isin(split[:, 1], keep)]
        if len(split) == 0:
            raise ValueError(f"segment {name!r} has no test records")
        accs = _metrics_for_users(_group_by_user(split), model, ks)
        for metric in METRICS:
            for k in ks:
                values = accs[(metric, k)]
                value = float(np.mean(values)) if values else 0.0
                report.rows.append(EvalRow(model_name, metric, k, name, value, seed))
    return report


def write_report(report, path, append=False):
    """Emit `model,metric,K,segment,value,seed` CSV rows (header once)."""
    mode = "a" if append else "w"
    write_header = not append
    with open(path, mode, encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        if write_header:
            writer.writerow(["model", "metric", "K", "segment", "value", "seed"])
        for row in report.rows:
            writer.writerow(
                [row.model, row.metric, row.k, row.segment, f"{row.value:.17g}", row.seed]
            )


def read_report(path):
    report = EvalReport()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for record in csv.DictReader(fh):
            report.rows.append(EvalRow(
                record["model"], record["metric"], int(record["K"]),
                record["segment"], float(record["value"]), int(record["seed"]),
            ))
    return report
