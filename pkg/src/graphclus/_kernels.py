"""Hot loops, each in a numba and a pure-numpy flavour.

The numba versions are used by default. Set ``GRAPHCLUS_DISABLE_NUMBA=1``
(or run without numba installed) to route everything through the numpy
versions. Both flavours are always importable so they can be tested and
benchmarked against each other.

Proposal families are passed around in flattened form: ``flat`` holds the
concatenated vertex ids and ``offsets`` (length ``m + 1``) delimits
proposal ``i`` as ``flat[offsets[i]:offsets[i + 1]]``.
"""

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda fn: fn


def _env_disabled():
    return os.environ.get("GRAPHCLUS_DISABLE_NUMBA", "").strip().lower() in (
        "1", "true", "yes", "on",
    )


USE_NUMBA = HAVE_NUMBA and not _env_disabled()


def backend():
    return "numba" if USE_NUMBA else "numpy"


# --------------------------------------------------------------------------
# connected components over a CSR graph, with edge threshold and vertex mask
# --------------------------------------------------------------------------

@njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True)
def components_numba(indptr, indices, weights, active, min_weight):
    n = indptr.shape[0] - 1
    parent = np.arange(n)
    for i in range(n):
        if not active[i]:
            continue
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            if j <= i or not active[j] or weights[p] < min_weight:
                continue
            ri = _find(parent, i)
            rj = _find(parent, j)
            if ri != rj:
                if ri < rj:
                    parent[rj] = ri
                else:
                    parent[ri] = rj
    # ascending scan hands out ids in order of each component's smallest member
    labels = -np.ones(n, dtype=np.int64)
    root_label = -np.ones(n, dtype=np.int64)
    count = 0
    for i in range(n):
        if not active[i]:
            continue
        r = _find(parent, i)
        if root_label[r] < 0:
            root_label[r] = count
            count += 1
        labels[i] = root_label[r]
    return labels


def components_numpy(indptr, indices, weights, active, min_weight):
    n = indptr.shape[0] - 1
    src = np.repeat(np.arange(n), np.diff(indptr))
    keep = (src < indices) & active[src] & active[indices] & (weights >= min_weight)
    a = src[keep]
    b = indices[keep]
    lab = np.arange(n)
    # min-label propagation with pointer jumping; converges to the smallest id
    while True:
        prev = lab
        lab = lab.copy()
        np.minimum.at(lab, a, prev[b])
        np.minimum.at(lab, b, prev[a])
        lab = lab[lab]
        if np.array_equal(lab, prev):
            break
    labels = -np.ones(n, dtype=np.int64)
    idx = np.flatnonzero(active)
    _, dense = np.unique(lab[idx], return_inverse=True)
    labels[idx] = dense
    return labels


# --------------------------------------------------------------------------
# de-overlapping: strip vertices claimed by higher-ranked proposals
# --------------------------------------------------------------------------

@njit(cache=True)
def deoverlap_numba(flat, offsets, n, min_keep):
    assign = -np.ones(n, dtype=np.int64)
    seen = np.zeros(n, dtype=np.bool_)
    m = offsets.shape[0] - 1
    cid = 0
    for i in range(m):
        lo = offsets[i]
        hi = offsets[i + 1]
        fresh = 0
        for p in range(lo, hi):
            if not seen[flat[p]]:
                fresh += 1
        if fresh == 0:
            continue
        if min_keep > 0.0 and fresh < min_keep * (hi - lo):
            continue
        for p in range(lo, hi):
            v = flat[p]
            if not seen[v]:
                seen[v] = True
                assign[v] = cid
        cid += 1
    return assign


def deoverlap_numpy(flat, offsets, n, min_keep):
    assign = -np.ones(n, dtype=np.int64)
    if flat.size == 0:
        return assign
    if min_keep <= 0.0:
        owner = np.repeat(np.arange(offsets.shape[0] - 1), np.diff(offsets))
        verts, first = np.unique(flat, return_index=True)
        win = owner[first]
        _, cid = np.unique(win, return_inverse=True)
        assign[verts] = cid
        return assign
    seen = np.zeros(n, dtype=bool)
    cid = 0
    for i in range(offsets.shape[0] - 1):
        p = flat[offsets[i]:offsets[i + 1]]
        fresh = p[~seen[p]]
        if fresh.size == 0 or fresh.size < min_keep * p.size:
            continue
        seen[fresh] = True
        assign[fresh] = cid
        cid += 1
    return assign


# --------------------------------------------------------------------------
# greedy set-NMS; accepted sets are indexed per vertex through linked lists
# --------------------------------------------------------------------------

@njit(cache=True)
def nms_numba(flat, offsets, n, iou_threshold):
    m = offsets.shape[0] - 1
    assign = -np.ones(n, dtype=np.int64)
    head = -np.ones(n, dtype=np.int64)
    nxt = np.empty(flat.shape[0], dtype=np.int64)
    node_prop = np.empty(flat.shape[0], dtype=np.int64)
    nodes = 0
    inter = np.zeros(m, dtype=np.int64)
    touched = np.empty(m, dtype=np.int64)
    accepted = 0
    cid = 0
    for i in range(m):
        lo = offsets[i]
        hi = offsets[i + 1]
        size_i = hi - lo
        suppress = accepted > 0 and iou_threshold <= 0.0
        nt = 0
        if not suppress:
            for p in range(lo, hi):
                node = head[flat[p]]
                while node >= 0:
                    a = node_prop[node]
                    if inter[a] == 0:
                        touched[nt] = a
                        nt += 1
                    inter[a] += 1
                    node = nxt[node]
            for t in range(nt):
                a = touched[t]
                size_a = offsets[a + 1] - offsets[a]
                iou = inter[a] / (size_i + size_a - inter[a])
                if iou >= iou_threshold:
                    suppress = True
                inter[a] = 0
        if suppress:
            continue
        accepted += 1
        took = False
        for p in range(lo, hi):
            v = flat[p]
            nxt[nodes] = head[v]
            node_prop[nodes] = i
            head[v] = nodes
            nodes += 1
            if assign[v] < 0:
                assign[v] = cid
                took = True
        if took:
            cid += 1
    return assign


def nms_numpy(flat, offsets, n, iou_threshold):
    m = offsets.shape[0] - 1
    sizes = np.diff(offsets)
    assign = -np.ones(n, dtype=np.int64)
    member = [[] for _ in range(n)]
    accepted = 0
    cid = 0
    for i in range(m):
        p = flat[offsets[i]:offsets[i + 1]]
        if accepted and iou_threshold <= 0.0:
            continue
        hits = [a for v in p.tolist() for a in member[v]]
        if hits:
            others, inter = np.unique(hits, return_counts=True)
            iou = inter / (sizes[i] + sizes[others] - inter)
            if np.any(iou >= iou_threshold):
                continue
        accepted += 1
        for v in p.tolist():
            member[v].append(i)
        fresh = p[assign[p] < 0]
        if fresh.size:
            assign[fresh] = cid
            cid += 1
    return assign


def connected_labels(indptr, indices, weights, active, min_weight):
    fn = components_numba if USE_NUMBA else components_numpy
    return fn(indptr, indices, weights, active, float(min_weight))


def deoverlap_assign(flat, offsets, n, min_keep):
    fn = deoverlap_numba if USE_NUMBA else deoverlap_numpy
    return fn(flat, offsets, int(n), float(min_keep))


def nms_assign(flat, offsets, n, iou_threshold):
    fn = nms_numba if USE_NUMBA else nms_numpy
    return fn(flat, offsets, int(n), float(iou_threshold))


def flatten(sets):
    """Pack a list of int arrays into ``(flat, offsets)``."""
    sizes = np.fromiter((len(s) for s in sets), dtype=np.int64, count=len(sets))
    offsets = np.zeros(len(sets) + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    if len(sets):
        flat = np.concatenate([np.asarray(s, dtype=np.int64) for s in sets])
    else:
        flat = np.zeros(0, dtype=np.int64)
    return flat, offsets

