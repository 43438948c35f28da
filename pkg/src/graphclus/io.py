"""On-disk formats for embeddings, labels, proposals, clusters and models.

Embeddings: ``b"EMB1"``, little-endian ``u32 n``, ``u32 d``, then ``n*d``
``f32`` values row-major. Labels: one non-negative integer per line.
Clusters: ``vertex_id<TAB>cluster_id`` lines. Proposals: ``iter:<i> id id ...``
lines. Models: ``b"GCNM"``, a version byte, a kind byte (``D``/``S``), a flag
byte, three ``u32`` dims, then every parameter as ``f64`` little-endian in
declaration order.
"""

import struct

import numpy as np

from .evaluation import ClusterSet
from .gcn import POOLINGS, GcnDetModel, GcnSegModel
from .graph import EmbeddingSet
from .proposals import ProposalSet

EMB_MAGIC = b"EMB1"
MODEL_MAGIC = b"GCNM"
MODEL_VERSION = 1


class FormatError(ValueError):
    pass


def _read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


def _text_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if line:
                yield lineno, line


def _parse_int(tok, path, lineno):
    try:
        v = int(tok)
    except ValueError:
        raise FormatError(f"{path}:{lineno}: expected an integer, got {tok!r}") from None
    if v < 0:
        raise FormatError(f"{path}:{lineno}: negative id {v}")
    return v


# ---------------------------------------------------------------- embeddings

def write_embeddings(path, emb):
    x = emb.features if isinstance(emb, EmbeddingSet) else np.asarray(emb)
    n, d = x.shape
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(struct.pack("<II", n, d))
        fh.write(np.ascontiguousarray(x, dtype="<f4").tobytes())


def read_embeddings(path):
    """Load an EMB1 file; rows are renormalized after widening to f64."""
    raw = _read_bytes(path)
    if raw[:4] != EMB_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {EMB_MAGIC!r}")
    if len(raw) < 12:
        raise FormatError(f"{path}: truncated header")
    n, d = struct.unpack_from("<II", raw, 4)
    need = 12 + 4 * n * d
    if len(raw) != need:
        raise FormatError(f"{path}: expected {need} bytes for {n}x{d}, found {len(raw)}")
    x = np.frombuffer(raw, dtype="<f4", offset=12).reshape(n, d).astype(np.float64)
    return EmbeddingSet(x)


# -------------------------------------------------------------------- labels

def write_labels(path, labels):
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(f"{int(v)}\n" for v in labels)


def read_labels(path):
    return np.array([_parse_int(line, path, i) for i, line in _text_lines(path)], dtype=np.int64)


# ------------------------------------------------------------------ clusters

def write_clusters(path, clusters):
    a = clusters.assignment if isinstance(clusters, ClusterSet) else np.asarray(clusters)
    with open(path, "w", encoding="utf-8") as fh:
        for v, c in enumerate(a):
            if c >= 0:
                fh.write(f"{v}\t{int(c)}\n")


def read_clusters(path, n=None):
    """Vertices absent from the file are left uncovered (``-1``)."""
    pairs = []
    for lineno, line in _text_lines(path):
        parts = line.split("\t")
        if len(parts) != 2:
            raise FormatError(f"{path}:{lineno}: expected 'vertex<TAB>cluster', got {line!r}")
        pairs.append((_parse_int(parts[0], path, lineno), _parse_int(parts[1], path, lineno)))
    top = max((v for v, _ in pairs), default=-1) + 1
    if n is None:
        n = top
    elif top > n:
        raise FormatError(f"{path}: vertex id {top - 1} out of range for n={n}")
    a = -np.ones(n, dtype=np.int64)
    for v, c in pairs:
        if a[v] >= 0:
            raise FormatError(f"{path}: vertex {v} assigned twice")
        a[v] = c
    return ClusterSet(a)


# ----------------------------------------------------------------- proposals

def write_proposals(path, proposals):
    with open(path, "w", encoding="utf-8") as fh:
        for p, it in zip(proposals.proposals, proposals.iteration):
            fh.write(f"iter:{it} " + " ".join(str(int(v)) for v in p) + "\n")


def read_proposals(path, n=None):
    out = ProposalSet()
    for lineno, line in _text_lines(path):
        head, _, rest = line.partition(" ")
        if not head.startswith("iter:"):
            raise FormatError(f"{path}:{lineno}: line must start with 'iter:<i>'")
        it = _parse_int(head[5:], path, lineno)
        ids = np.array([_parse_int(t, path, lineno) for t in rest.split()], dtype=np.int64)
        if ids.size == 0:
            raise FormatError(f"{path}:{lineno}: empty proposal")
        if n is not None and ids.max() >= n:
            raise FormatError(f"{path}:{lineno}: vertex id {ids.max()} out of range for n={n}")
        out.proposals.append(ids)
        out.iteration.append(it)
    return out


# -------------------------------------------------------------------- models

def _param_shapes(kind, dims):
    d_in, h1, h2 = dims
    if kind == b"D":
        return {"w1": (d_in, h1), "w2": (h1, h2), "iou_w": (h2,), "iou_b": (1,),
                "iop_w": (h2,), "iop_b": (1,)}
    return {"w1": (d_in, h1), "w2": (h1, h2), "out_w": (h2,), "out_b": (1,)}


def write_model(path, model):
    if isinstance(model, GcnDetModel):
        flag = POOLINGS.index(model.pooling)
    elif isinstance(model, GcnSegModel):
        flag = int(model.seed_relative)
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC + bytes([MODEL_VERSION]) + model.KIND + bytes([flag]))
        fh.write(struct.pack("<III", *model.dims))
        for name in model.PARAM_NAMES:
            fh.write(np.ascontiguousarray(getattr(model, name), dtype="<f8").tobytes())


def read_model(path):
    raw = _read_bytes(path)
    if raw[:4] != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {MODEL_MAGIC!r}")
    if len(raw) < 19:
        raise FormatError(f"{path}: truncated header")
    if raw[4] != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported model version {raw[4]}")
    kind, flag = raw[5:6], raw[6]
    if kind not in (b"D", b"S"):
        raise FormatError(f"{path}: unknown model kind {kind!r}")
    dims = struct.unpack_from("<III", raw, 7)
    shapes = _param_shapes(kind, dims)
    need = 19 + 8 * sum(int(np.prod(s)) for s in shapes.values())
    if len(raw) != need:
        raise FormatError(f"{path}: expected {need} bytes for dims {dims}, found {len(raw)}")
    params, off = {}, 19
    for name, shape in shapes.items():
        count = int(np.prod(shape))
        params[name] = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(shape).copy()
        off += 8 * count
    if kind == b"D":
        if flag >= len(POOLINGS):
            raise FormatError(f"{path}: unknown pooling code {flag}")
        return GcnDetModel(**params, pooling=POOLINGS[flag])
    return GcnSegModel(**params, seed_relative=bool(flag))
