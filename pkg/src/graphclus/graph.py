"""Cosine KNN affinity graph and the component machinery built on it."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .config import worker_count


@dataclass(frozen=True)
class EmbeddingSet:
    """``n x d`` feature matrix; rows are normalized to unit length on construction."""

    features: np.ndarray

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] == 0:
            raise ValueError(f"embeddings must be a non-empty 2-D array, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("embeddings contain non-finite values")
        norms = np.linalg.norm(x, axis=1)
        bad = np.flatnonzero(norms == 0)
        if bad.size:
            raise ValueError(f"embedding row {bad[0]} has zero norm")
        x /= norms[:, None]
        x.setflags(write=False)
        object.__setattr__(self, "features", x)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]


@dataclass(frozen=True)
class AffinityGraph:
    """Symmetric weighted graph in CSR form, no self-loops.

    Row ``i`` owns ``indices[indptr[i]:indptr[i+1]]`` (sorted) and the
    matching ``weights``.
    """

    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray

    @property
    def n(self):
        return self.indptr.shape[0] - 1

    @property
    def num_edges(self):
        return self.indices.shape[0] // 2

    def degree(self):
        return np.diff(self.indptr)

    def neighbors(self, i):
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.weights[lo:hi]

    def edge_list(self):
        """Directed edge triples ``(src, dst, w)``, both orientations included."""
        src = np.repeat(np.arange(self.n), self.degree())
        return src, self.indices, self.weights

    @classmethod
    def from_edges(cls, n, src, dst, w):
        """Build from undirected edges given once each (``src != dst``)."""
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        w = np.asarray(w, dtype=np.float64)
        if np.any(src == dst):
            raise ValueError("self-loops are not stored")
        a = np.concatenate([src, dst])
        b = np.concatenate([dst, src])
        ww = np.concatenate([w, w])
        order = np.lexsort((b, a))
        a, b, ww = a[order], b[order], ww[order]
        if a.size > 1:
            dup = (a[1:] == a[:-1]) & (b[1:] == b[:-1])
            if np.any(dup):
                raise ValueError("duplicate edge")
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(a, minlength=n), out=indptr[1:])
        return cls(indptr, b, ww)


def _topk_rows(x, rows, k):
    sims = x[rows] @ x.T
    sims[np.arange(len(rows)), rows] = -np.inf
    # stable sort keeps tie-breaking by vertex id
    return np.argsort(-sims, axis=1, kind="stable")[:, :k]


def build_knn_graph(emb, k, chunk=512):
    """Connect every vertex to its ``k`` most cosine-similar others.

    An edge exists when either endpoint picked the other, so degrees are
    bounded by ``2k``. Weights are the cosine similarities.
    """
    n = emb.n
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < n, got k={k}, n={n}")
    x = emb.features
    blocks = [np.arange(s, min(s + chunk, n)) for s in range(0, n, chunk)]
    workers = min(worker_count(), len(blocks))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            picked = list(pool.map(lambda r: _topk_rows(x, r, k), blocks))
    else:
        picked = [_topk_rows(x, r, k) for r in blocks]
    nbr = np.concatenate(picked)
    src = np.repeat(np.arange(n), k)
    dst = nbr.reshape(-1)
    lo = np.minimum(src, dst)
    hi = np.maximum(src, dst)
    key = np.unique(lo * n + hi)
    lo, hi = key // n, key % n
    # one dot product per unordered pair, so both orientations share a weight
    w = np.clip(np.einsum("ij,ij->i", x[lo], x[hi]), -1.0, 1.0)
    return AffinityGraph.from_edges(n, lo, hi, w)


def prune_edges(g, e_tau):
    """Drop edges with weight strictly below ``e_tau``."""
    keep = g.weights >= e_tau
    src = np.repeat(np.arange(g.n), g.degree())[keep]
    indptr = np.zeros(g.n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=g.n), out=indptr[1:])
    return AffinityGraph(indptr, g.indices[keep], g.weights[keep])


def _labels_to_sets(labels):
    idx = np.flatnonzero(labels >= 0)
    lab = labels[idx]
    order = np.argsort(lab, kind="stable")
    idx, lab = idx[order], lab[order]
    cuts = np.flatnonzero(np.diff(lab)) + 1
    return np.split(idx, cuts) if idx.size else []


def connected_components(g, restrict=None, min_weight=-np.inf):
    """Maximal connected components, ordered by smallest member.

    ``restrict`` limits the search to a vertex subset (edges leaving it are
    ignored); ``min_weight`` ignores edges lighter than the threshold without
    materializing a pruned graph.
    """
    if restrict is None:
        active = np.ones(g.n, dtype=np.bool_)
    else:
        restrict = np.asarray(restrict, dtype=np.int64)
        if restrict.size and (restrict.min() < 0 or restrict.max() >= g.n):
            raise IndexError("restrict contains vertex ids outside the graph")
        active = np.zeros(g.n, dtype=np.bool_)
        active[restrict] = True
    labels = _kernels.connected_labels(g.indptr, g.indices, g.weights, active, min_weight)
    return _labels_to_sets(labels)


def induced_subgraph(g, v):
    """Dense affinity block among ``v`` plus the local-to-global id map."""
    v = np.asarray(v, dtype=np.int64)
    m = v.size
    if m > 1 and np.any(np.diff(v) <= 0):
        raise ValueError("vertex ids must be strictly increasing")
    starts = g.indptr[v]
    deg = g.indptr[v + 1] - starts
    rows = np.repeat(np.arange(m), deg)
    pos = np.repeat(starts - np.cumsum(deg) + deg, deg) + np.arange(deg.sum())
    cols_global = g.indices[pos]
    loc = np.searchsorted(v, cols_global)
    loc = np.minimum(loc, m - 1)
    hit = v[loc] == cols_global
    adj = np.zeros((m, m))
    adj[rows[hit], loc[hit]] = g.weights[pos][hit]
    return adj, v.copy()


def vertex_set(ids):
    """Validate and return a sorted, unique, nonempty id array."""
    v = np.asarray(ids, dtype=np.int64).reshape(-1)
    if v.size == 0:
        raise ValueError("vertex set must be nonempty")
    if v.size > 1 and np.any(np.diff(v) <= 0):
        v = np.unique(v)
    return v
