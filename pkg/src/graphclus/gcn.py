"""Graph convolutional detector and segmenter with hand-written gradients.

Both networks stack two propagation layers ``relu(D^-1 (A + I) X W)`` where
``D_ii = 1 + sum_j A_ij``. The detector pools the vertex embeddings into a
single vector and regresses IoU and IoP with two linear heads; the
segmenter appends a seed indicator column to the input features and emits
a per-vertex membership probability.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import config
from .evaluation import QualityScores
from .graph import induced_subgraph
from .numerics import make_rng, relu, sigmoid

POOLINGS = ("max", "mean", "sum")


def propagation_matrix(adj):
    adj = np.asarray(adj, dtype=np.float64)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {adj.shape}")
    if not np.allclose(adj, adj.T, rtol=0.0, atol=1e-12):
        raise ValueError("adjacency must be symmetric")
    if np.any(np.diag(adj) != 0):
        raise ValueError("adjacency diagonal must be zero; self-loops are added here")
    deg = 1.0 + adj.sum(axis=1)
    if np.any(deg <= 0):
        raise ValueError("degree 1 + sum(A_i) must be positive for every vertex")
    p = adj.copy()
    np.fill_diagonal(p, 1.0)
    return p / deg[:, None]


def gcn_layer_forward(x, adj, w, activate=True):
    out = propagation_matrix(adj) @ np.asarray(x, dtype=np.float64) @ np.asarray(w, dtype=np.float64)
    return relu(out) if activate else out


@dataclass
class SubGraphInstance:
    features: np.ndarray
    adjacency: np.ndarray
    ids: np.ndarray = None
    _prop: np.ndarray = field(default=None, repr=False, compare=False)
    _px: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.adjacency = np.asarray(self.adjacency, dtype=np.float64)
        if self.features.shape[0] != self.adjacency.shape[0]:
            raise ValueError(
                f"{self.features.shape[0]} feature rows for a "
                f"{self.adjacency.shape[0]}-vertex adjacency"
            )
        if self.ids is None:
            self.ids = np.arange(self.size)

    @property
    def size(self):
        return self.features.shape[0]

    @property
    def propagation(self):
        if self._prop is None:
            self._prop = propagation_matrix(self.adjacency)
        return self._prop

    @property
    def propagated_features(self):
        # first-layer input never changes, so P @ X is cached
        if self._px is None:
            self._px = self.propagation @ self.features
        return self._px

    def permuted(self, perm):
        perm = np.asarray(perm)
        return SubGraphInstance(
            self.features[perm], self.adjacency[np.ix_(perm, perm)], self.ids[perm]
        )


def make_instance(g, emb, vertices, center=False, scale=None):
    """Cut a proposal out of the full graph.

    Negative affinities are clamped to zero so propagation stays an
    averaging operator. Features are multiplied by ``scale`` (default
    ``sqrt(d)``, which gives unit-length rows roughly unit-variance
    coordinates); ``center`` also subtracts the proposal's mean feature.
    """
    adj, ids = induced_subgraph(g, vertices)
    np.maximum(adj, 0.0, out=adj)
    feats = emb.features[ids]
    if center:
        feats = feats - feats.mean(axis=0)
    if scale is None:
        scale = math.sqrt(emb.d)
    return SubGraphInstance(feats * scale, adj, ids)


def rotate_instance(inst, q):
    """Same graph, features multiplied by the orthogonal matrix ``q``.

    Targets depend only on vertex ids, so rotated copies are free extra
    training data that stop a network from memorizing class directions.
    """
    return SubGraphInstance(inst.features @ q, inst.adjacency, inst.ids, _prop=inst._prop)


def random_rotations(d, count, seed=0):
    """``count`` orthogonal ``d x d`` matrices; the first is the identity."""
    rng = make_rng(seed)
    out = [np.eye(d)]
    while len(out) < count:
        q, r = np.linalg.qr(rng.standard_normal((d, d)))
        out.append(q * np.sign(np.diag(r)))
    return out[:count]


def _uniform(rng, fan_in, shape):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class GcnDetModel:
    w1: np.ndarray
    w2: np.ndarray
    iou_w: np.ndarray
    iou_b: np.ndarray
    iop_w: np.ndarray
    iop_b: np.ndarray
    pooling: str = "max"

    PARAM_NAMES = ("w1", "w2", "iou_w", "iou_b", "iop_w", "iop_b")
    KIND = b"D"

    def __post_init__(self):
        if self.pooling not in POOLINGS:
            raise ValueError(f"pooling must be one of {POOLINGS}, got {self.pooling!r}")

    @classmethod
    def init(cls, d_in, hidden=config.HIDDEN_DIMS, seed=0, pooling="max"):
        rng = make_rng(seed)
        h1, h2 = hidden
        return cls(
            w1=_uniform(rng, d_in, (d_in, h1)),
            w2=_uniform(rng, h1, (h1, h2)),
            iou_w=_uniform(rng, h2, (h2,)),
            iou_b=np.zeros(1),
            iop_w=_uniform(rng, h2, (h2,)),
            iop_b=np.zeros(1),
            pooling=pooling,
        )

    @property
    def dims(self):
        return (self.w1.shape[0], self.w1.shape[1], self.w2.shape[1])

    def params(self):
        return {name: getattr(self, name) for name in self.PARAM_NAMES}

    def copy(self):
        return type(self)(**{k: v.copy() for k, v in self.params().items()}, pooling=self.pooling)


@dataclass
class GcnSegModel:
    w1: np.ndarray
    w2: np.ndarray
    out_w: np.ndarray
    out_b: np.ndarray
    seed_relative: bool = True

    PARAM_NAMES = ("w1", "w2", "out_w", "out_b")
    KIND = b"S"

    @classmethod
    def init(cls, d_in, hidden=config.HIDDEN_DIMS, seed=0, seed_relative=True):
        """``d_in`` is the raw feature width; one seed channel is added.

        With ``seed_relative`` the seed's own feature row is subtracted from
        every row before the first layer, so the network sees each vertex
        as an offset from the seed.
        """
        rng = make_rng(seed)
        h1, h2 = hidden
        return cls(
            w1=_uniform(rng, d_in + 1, (d_in + 1, h1)),
            w2=_uniform(rng, h1, (h1, h2)),
            out_w=_uniform(rng, h2, (h2,)),
            out_b=np.zeros(1),
            seed_relative=seed_relative,
        )

    @property
    def dims(self):
        return (self.w1.shape[0], self.w1.shape[1], self.w2.shape[1])

    def params(self):
        return {name: getattr(self, name) for name in self.PARAM_NAMES}

    def copy(self):
        return type(self)(**{k: v.copy() for k, v in self.params().items()},
                          seed_relative=self.seed_relative)


def _check_dims(w1, inst, extra=0):
    if inst.features.shape[1] + extra != w1.shape[0]:
        raise ValueError(
            f"instance features have {inst.features.shape[1]} columns, "
            f"model expects {w1.shape[0] - extra}"
        )


# ---------------------------------------------------------------- detector

def _det_forward(model, inst):
    _check_dims(model.w1, inst)
    p = inst.propagation
    px = inst.propagated_features
    z1 = px @ model.w1
    h1 = relu(z1)
    ph1 = p @ h1
    z2 = ph1 @ model.w2
    h2 = relu(z2)
    if model.pooling == "max":
        arg = np.argmax(h2, axis=0)
        g = h2[arg, np.arange(h2.shape[1])]
    elif model.pooling == "mean":
        arg = None
        g = h2.mean(axis=0)
    else:
        arg = None
        g = h2.sum(axis=0)
    iou = float(g @ model.iou_w + model.iou_b[0])
    iop = float(g @ model.iop_w + model.iop_b[0])
    return iou, iop, (p, px, z1, ph1, z2, g, arg)


def det_forward(model, inst, clamp=True):
    """Predicted quality of one proposal; clamped to [0, 1] unless ``clamp=False``."""
    iou, iop, _ = _det_forward(model, inst)
    if clamp:
        iou = min(max(iou, 0.0), 1.0)
        iop = min(max(iop, 0.0), 1.0)
    return QualityScores(iou, iop)


def _target(t):
    if isinstance(t, QualityScores):
        return t.iou, t.iop
    return float(t[0]), float(t[1])


def det_loss_and_grads(model, batch):
    """Mean over the batch of ``((iou - t_iou)^2 + (iop - t_iop)^2) / 2``."""
    if not batch:
        raise ValueError("empty batch")
    grads = {k: np.zeros_like(v) for k, v in model.params().items()}
    scale = 1.0 / len(batch)
    loss = 0.0
    for inst, target in batch:
        t_iou, t_iop = _target(target)
        iou, iop, (p, px, z1, ph1, z2, g, arg) = _det_forward(model, inst)
        e_iou, e_iop = iou - t_iou, iop - t_iop
        loss += 0.5 * (e_iou * e_iou + e_iop * e_iop) * scale
        d_iou, d_iop = e_iou * scale, e_iop * scale
        grads["iou_w"] += d_iou * g
        grads["iou_b"] += d_iou
        grads["iop_w"] += d_iop * g
        grads["iop_b"] += d_iop
        dg = d_iou * model.iou_w + d_iop * model.iop_w
        if model.pooling == "max":
            dh2 = np.zeros_like(z2)
            dh2[arg, np.arange(z2.shape[1])] = dg
        elif model.pooling == "mean":
            dh2 = np.broadcast_to(dg / z2.shape[0], z2.shape)
        else:
            dh2 = np.broadcast_to(dg, z2.shape)
        dz2 = dh2 * (z2 > 0)
        grads["w2"] += ph1.T @ dz2
        dz1 = (p.T @ (dz2 @ model.w2.T)) * (z1 > 0)
        grads["w1"] += px.T @ dz1
    return loss, grads


# --------------------------------------------------------------- segmenter

def _check_seed(inst, seed_vertex):
    if not 0 <= seed_vertex < inst.size:
        raise IndexError(f"seed vertex {seed_vertex} out of range for {inst.size} vertices")


def _seg_forward(model, inst, seed_vertex):
    _check_dims(model.w1, inst, extra=1)
    _check_seed(inst, seed_vertex)
    p = inst.propagation
    # P @ [X | e_s] = [P X | P e_s]; rows of P sum to one, so
    # P @ (X - 1 x_s) = P X - x_s
    px_feat = inst.propagated_features
    if model.seed_relative:
        px_feat = px_feat - inst.features[seed_vertex]
    px = np.hstack([px_feat, p[:, seed_vertex:seed_vertex + 1]])
    z1 = px @ model.w1
    h1 = relu(z1)
    ph1 = p @ h1
    z2 = ph1 @ model.w2
    h2 = relu(z2)
    logits = h2 @ model.out_w + model.out_b[0]
    return logits, (p, px, z1, ph1, z2, h2)


def seg_forward(model, inst, seed_vertex):
    """Per-vertex probability of sharing the seed vertex's class."""
    logits, _ = _seg_forward(model, inst, seed_vertex)
    return sigmoid(logits)


def seg_loss_and_grads(model, batch):
    """Binary cross-entropy, averaged over vertices and then over the batch.

    Computed from logits as ``max(z, 0) - z t + log(1 + exp(-|z|))``.
    """
    if not batch:
        raise ValueError("empty batch")
    grads = {k: np.zeros_like(v) for k, v in model.params().items()}
    scale = 1.0 / len(batch)
    loss = 0.0
    for inst, seed_vertex, target in batch:
        t = np.asarray(target, dtype=np.float64)
        z, (p, px, z1, ph1, z2, h2) = _seg_forward(model, inst, seed_vertex)
        m = z.shape[0]
        loss += scale * float(np.mean(np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))))
        dz = (sigmoid(z) - t) * (scale / m)
        grads["out_w"] += h2.T @ dz
        grads["out_b"] += dz.sum()
        dz2 = np.outer(dz, model.out_w) * (z2 > 0)
        grads["w2"] += ph1.T @ dz2
        dz1 = (p.T @ (dz2 @ model.w2.T)) * (z1 > 0)
        grads["w1"] += px.T @ dz1
    return loss, grads


def seg_training_samples(p, labels, num_seeds, rng):
    """Random seeds inside a proposal with their same-class target vectors.

    Seeds are local indices into ``p``; at most ``len(p)`` distinct seeds
    are drawn.
    """
    if num_seeds < 1:
        raise ValueError("num_seeds must be at least 1")
    lab = np.asarray(labels)[np.asarray(p, dtype=np.int64)]
    rng = make_rng(rng)
    seeds = rng.choice(lab.size, size=min(num_seeds, lab.size), replace=False)
    return [(int(s), (lab == lab[s]).astype(np.float64)) for s in seeds]


# ---------------------------------------------------------------- training

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = config.LEARNING_RATE
    momentum: float = config.MOMENTUM
    epochs: int = 50
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


class TrainingDiverged(RuntimeError):
    pass


def loss_fn_for(model):
    return det_loss_and_grads if isinstance(model, GcnDetModel) else seg_loss_and_grads


def dataset_loss(model, dataset, batch_size=256):
    """Mean per-sample loss over the whole dataset (no parameter change)."""
    fn = loss_fn_for(model)
    total = 0.0
    for s in range(0, len(dataset), batch_size):
        chunk = dataset[s:s + batch_size]
        total += fn(model, chunk)[0] * len(chunk)
    return total / len(dataset)


def train(model, dataset, cfg, log=None):
    """Momentum SGD over shuffled mini-batches.

    ``velocity = momentum * velocity - lr * grad; param += velocity``.
    Returns a trained copy of ``model`` and the per-epoch mean batch loss.
    """
    if not dataset:
        raise ValueError("empty training set")
    model = model.copy()
    fn = loss_fn_for(model)
    rng = make_rng(cfg.seed)
    params = model.params()
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    trace = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(dataset))
        epoch_loss = 0.0
        for b, s in enumerate(range(0, len(dataset), cfg.batch_size)):
            batch = [dataset[i] for i in order[s:s + cfg.batch_size]]
            loss, grads = fn(model, batch)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch {b}")
            epoch_loss += loss * len(batch)
            for k, v in params.items():
                vel = velocity[k]
                vel *= cfg.momentum
                vel -= cfg.learning_rate * grads[k]
                v += vel
        trace.append(epoch_loss / len(dataset))
        if log is not None:
            log(epoch, trace[-1])
    return model, trace
