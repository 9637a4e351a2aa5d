"""Retrieval, pair-classification, clustering and k-NN evaluation metrics.

Neighbour search is exact brute force throughout.
"""

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from sklearn.cluster import KMeans
from sklearn.metrics import normalized_mutual_info_score

from marlvm.errors import InvalidArgumentError


def _sorted_neighbours(queries, corpus, exclude_self):
    d = cdist(np.atleast_2d(queries), np.atleast_2d(corpus), "sqeuclidean")
    if exclude_self:
        if d.shape[0] != d.shape[1]:
            raise InvalidArgumentError("exclude_self requires the corpus to be the query set")
        np.fill_diagonal(d, np.inf)
    return np.argsort(d, axis=1, kind="stable")


def precision_at_k(query_reprs, corpus_reprs, query_labels, corpus_labels, k, exclude_self=False):
    """Mean fraction of each query's ``k`` nearest corpus items sharing its label."""
    corpus_labels = np.asarray(corpus_labels)
    query_labels = np.asarray(query_labels)
    available = len(corpus_labels) - (1 if exclude_self else 0)
    if k < 1 or k > available:
        raise InvalidArgumentError(f"k={k} invalid for a corpus of {available} items")
    order = _sorted_neighbours(query_reprs, corpus_reprs, exclude_self)[:, :k]
    hits = corpus_labels[order] == query_labels[:, None]
    return float(np.mean(np.mean(hits, axis=1)))


def average_precision_pairs(pair_distances, pair_labels):
    """AP of ranking pairs by ascending distance, similar pairs (label 1) positive.

    Tied distances use mid-ranks: a positive in a tie group is credited with
    the average rank and average positive count of that group.
    """
    d = np.asarray(pair_distances, dtype=float)
    y = np.asarray(pair_labels).astype(bool)
    if d.shape != y.shape or d.ndim != 1:
        raise InvalidArgumentError("distances and labels must be 1-D of equal length")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise InvalidArgumentError("average precision needs both similar and dissimilar pairs")
    order = np.argsort(d, kind="stable")
    d, y = d[order], y[order]
    _, starts, sizes = np.unique(d, return_index=True, return_counts=True)
    p = np.add.reduceat(y.astype(np.int64), starts)
    pos_before = np.cumsum(p) - p
    prec = (pos_before + (p + 1) / 2.0) / (starts + (sizes + 1) / 2.0)
    return float(np.sum(p * prec) / n_pos)


def kmeans(X, k, restarts=10, seed=0):
    """Lloyd's k-means with k-means++ seeding; best of ``restarts`` by inertia."""
    X = np.asarray(X, dtype=float)
    if k < 1 or k > len(X):
        raise InvalidArgumentError(f"k={k} invalid for {len(X)} points")
    km = KMeans(n_clusters=k, init="k-means++", n_init=restarts, algorithm="lloyd", random_state=seed)
    return km.fit_predict(X)


def _check_pair(pred, truth):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise InvalidArgumentError("prediction and truth lengths differ")
    return pred, truth


def contingency(pred, truth):
    pred, truth = _check_pair(pred, truth)
    _, pi = np.unique(pred, return_inverse=True)
    _, ti = np.unique(truth, return_inverse=True)
    table = np.zeros((pi.max() + 1, ti.max() + 1), dtype=np.int64)
    np.add.at(table, (pi, ti), 1)
    return table


def clustering_accuracy(pred, truth):
    """Accuracy under the best one-to-one matching of clusters to classes."""
    table = contingency(pred, truth)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum() / table.sum())


def nmi(pred, truth):
    """Mutual information normalized by the geometric mean of the entropies."""
    pred, truth = _check_pair(pred, truth)
    return float(normalized_mutual_info_score(truth, pred, average_method="geometric"))


def knn_predict(train_reprs, train_labels, test_reprs, k=3):
    train_labels = np.asarray(train_labels)
    if k < 1 or k > len(train_labels):
        raise InvalidArgumentError(f"k={k} invalid for {len(train_labels)} training points")
    order = _sorted_neighbours(test_reprs, train_reprs, False)[:, :k]
    preds = []
    for row in train_labels[order]:
        values, counts = np.unique(row, return_counts=True)
        tied = set(values[counts == counts.max()].tolist())
        # tie: take the tied label whose member is nearest
        preds.append(next(lbl for lbl in row.tolist() if lbl in tied))
    return np.asarray(preds)


def knn_accuracy(train_reprs, train_labels, test_reprs, test_labels, k=3):
    pred = knn_predict(train_reprs, train_labels, test_reprs, k)
    return float(np.mean(pred == np.asarray(test_labels)))
