"""Proposal quality targets, pairwise clustering metrics and a K-means baseline."""

from dataclasses import dataclass

import numpy as np

from .numerics import make_rng


@dataclass(frozen=True)
class QualityScores:
    iou: float
    iop: float


@dataclass(frozen=True)
class PairwiseMetrics:
    precision: float
    recall: float
    fscore: float
    num_clusters: int

    def format_line(self):
        return (
            f"precision={self.precision:.4f} recall={self.recall:.4f} "
            f"fscore={self.fscore:.4f} clusters={self.num_clusters}"
        )


class ClusterSet:
    """Per-vertex cluster ids; ``-1`` marks a vertex not (yet) covered."""

    def __init__(self, assignment):
        a = np.asarray(assignment, dtype=np.int64).reshape(-1)
        if a.size and a.min() < -1:
            raise ValueError("cluster ids must be >= 0 (or -1 for uncovered)")
        self.assignment = a

    @classmethod
    def from_clusters(cls, clusters, n):
        a = -np.ones(n, dtype=np.int64)
        for cid, members in enumerate(clusters):
            members = np.asarray(members, dtype=np.int64)
            if np.any(a[members] >= 0):
                raise ValueError(f"cluster {cid} overlaps an earlier cluster")
            a[members] = cid
        return cls(a)

    @property
    def n(self):
        return self.assignment.size

    @property
    def num_clusters(self):
        a = self.assignment
        return int(np.unique(a[a >= 0]).size)

    def is_total(self):
        return bool(np.all(self.assignment >= 0))

    def clusters(self):
        """Member arrays ordered by cluster id."""
        a = self.assignment
        idx = np.flatnonzero(a >= 0)
        order = np.argsort(a[idx], kind="stable")
        idx = idx[order]
        cuts = np.flatnonzero(np.diff(a[idx])) + 1
        return np.split(idx, cuts) if idx.size else []

    def __eq__(self, other):
        return isinstance(other, ClusterSet) and np.array_equal(self.assignment, other.assignment)

    def __repr__(self):
        return f"ClusterSet(n={self.n}, clusters={self.num_clusters})"


def majority_label(p, labels):
    """Most frequent label in ``p``; ties go to the smallest label."""
    counts = np.bincount(np.asarray(labels)[np.asarray(p, dtype=np.int64)])
    return int(np.argmax(counts))


def quality_scores(p, labels, class_sizes=None):
    """IoU and IoP of a proposal against its majority class.

    ``class_sizes`` (``np.bincount(labels)``) may be passed to avoid a full
    scan when scoring many proposals.
    """
    labels = np.asarray(labels)
    p = np.asarray(p, dtype=np.int64)
    counts = np.bincount(labels[p])
    maj = int(np.argmax(counts))
    inter = int(counts[maj])
    total = int(class_sizes[maj]) if class_sizes is not None else int(np.sum(labels == maj))
    union = p.size + total - inter
    return QualityScores(iou=inter / union, iop=inter / p.size)


def _pairs(counts):
    counts = counts.astype(np.int64)
    return int(np.sum(counts * (counts - 1) // 2))


def pairwise_metrics(pred, labels):
    """Pairwise precision/recall/F over unordered vertex pairs.

    Uncovered vertices (id ``-1``) count as singletons.
    """
    a = pred.assignment if isinstance(pred, ClusterSet) else np.asarray(pred, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if a.shape != labels.shape:
        raise ValueError(f"prediction has {a.size} vertices, labels have {labels.size}")
    a = a.copy()
    loose = a < 0
    a[loose] = a.max(initial=-1) + 1 + np.arange(loose.sum())
    _, pred_ids = np.unique(a, return_inverse=True)
    _, true_ids = np.unique(labels, return_inverse=True)
    pred_pairs = _pairs(np.bincount(pred_ids))
    true_pairs = _pairs(np.bincount(true_ids))
    joint = pred_ids.astype(np.int64) * (true_ids.max() + 1) + true_ids
    tp = _pairs(np.unique(joint, return_counts=True)[1])
    precision = tp / pred_pairs if pred_pairs else 0.0
    recall = tp / true_pairs if true_pairs else 0.0
    f = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return PairwiseMetrics(precision, recall, f, int(pred_ids.max() + 1) if a.size else 0)


def kmeans_baseline(emb, k, seed=0, max_iter=100, tol=1e-6, return_inertia=False):
    """Lloyd's K-means from ``k`` distinct random data points.

    A center that loses all its points is moved to the point currently
    farthest from its own center.
    """
    x = emb.features if hasattr(emb, "features") else np.asarray(emb, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    rng = make_rng(seed)
    centers = x[rng.choice(n, size=k, replace=False)].copy()
    sq = np.einsum("ij,ij->i", x, x)
    prev = np.inf
    for _ in range(max_iter):
        d2 = sq[:, None] - 2.0 * x @ centers.T + np.einsum("ij,ij->i", centers, centers)[None, :]
        d2 = np.maximum(d2, 0.0)
        assign = np.argmin(d2, axis=1)
        dist = d2[np.arange(n), assign]
        counts = np.bincount(assign, minlength=k)
        for c in np.flatnonzero(counts == 0):
            far = int(np.argmax(np.where(counts[assign] > 1, dist, -1.0)))
            counts[assign[far]] -= 1
            assign[far] = c
            counts[c] = 1
            dist[far] = -1.0
        for c in range(k):
            centers[c] = x[assign == c].mean(axis=0)
        inertia = float(np.sum((x - centers[assign]) ** 2))
        if prev < np.inf and abs(prev - inertia) <= tol * max(prev, 1e-300):
            break
        prev = inertia
    _, dense = np.unique(assign, return_inverse=True)
    out = ClusterSet(dense)
    if return_inertia:
        return out, inertia
    return out
