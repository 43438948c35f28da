"""Training-set construction for the detector and segmenter.

Both builders cut proposals out of a labeled graph, attach ground-truth
targets, and add rotated copies of each instance. A rotation leaves the
graph and the targets untouched, so the copies cost nothing to label and
keep the networks from keying on where the training classes happen to sit.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import config
from .gcn import (GcnDetModel, GcnSegModel, TrainConfig, make_instance,
                  random_rotations, rotate_instance, seg_training_samples, train)
from .graph import build_knn_graph
from .numerics import make_rng
from .pipeline import proposal_targets
from .proposals import SuperVertexConfig, generate_proposal_grid


@dataclass(frozen=True)
class Recipe:
    """Everything needed to go from labeled embeddings to trained models."""

    k: int = config.KNN_K
    s_max_values: tuple = config.WIDE_S_MAX_GRID
    e_taus: tuple = config.WIDE_E_TAU_GRID
    iterations: int = config.PROPOSAL_ITERATIONS
    min_size: int = config.MIN_PROPOSAL_SIZE
    det_rotations: int = config.DET_ROTATIONS
    det_epochs: int = config.DET_EPOCHS
    seg_rotations: int = config.SEG_ROTATIONS
    seg_epochs: int = config.SEG_EPOCHS
    pure_keep: float = 0.3
    impure_seeds: int = 4
    seed_fraction: float = 0.1
    batch_size: int = 16
    learning_rate: float = config.LEARNING_RATE
    momentum: float = config.MOMENTUM
    hidden: tuple = config.HIDDEN_DIMS

    def sv_config(self):
        return SuperVertexConfig(k=self.k, iterations=self.iterations)


def build_proposals(emb, recipe):
    """KNN graph plus the recipe's proposal grid."""
    g = build_knn_graph(emb, min(recipe.k, emb.n - 1))
    ps = generate_proposal_grid(g, emb, recipe.sv_config(), recipe.s_max_values, recipe.e_taus)
    return g, ps


def detector_dataset(graph, emb, labels, proposals, rotations=1, min_size=1, seed=0):
    """``(instance, QualityScores)`` pairs, ``rotations`` copies per proposal."""
    kept = [p for p in proposals if len(p) >= min_size]
    if not kept:
        raise ValueError(f"no proposal has at least {min_size} vertices")
    targets = proposal_targets(kept, labels)
    base = [make_instance(graph, emb, p) for p in kept]
    out = []
    for q in random_rotations(emb.d, rotations, seed):
        out.extend((rotate_instance(inst, q), t) for inst, t in zip(base, targets))
    return out


def segmenter_dataset(graph, emb, labels, proposals, rotations=1, min_size=2,
                      pure_keep=0.3, impure_seeds=4, seed=0, seed_fraction=0.0):
    """``(instance, seed, target)`` triples.

    Pure proposals have an all-ones target whatever the seed, so only a
    ``pure_keep`` fraction of them is used, with one seed each; impure
    proposals get ``max(impure_seeds, ceil(seed_fraction * size))`` seeds.
    """
    rng = make_rng(seed)
    labels = np.asarray(labels)
    picked = []
    for p in proposals:
        if len(p) < min_size:
            continue
        pure = np.unique(labels[p]).size == 1
        if pure and rng.random() >= pure_keep:
            continue
        ns = 1 if pure else max(impure_seeds, math.ceil(seed_fraction * len(p)))
        picked.append((p, make_instance(graph, emb, p), ns))
    if not picked:
        raise ValueError("no proposal selected for segmenter training")
    out = []
    for q in random_rotations(emb.d, rotations, seed):
        for p, inst, ns in picked:
            rinst = rotate_instance(inst, q)
            out.extend((rinst, s, t) for s, t in seg_training_samples(p, labels, ns, rng))
    return out


def _train_cfg(recipe, epochs, seed):
    return TrainConfig(learning_rate=recipe.learning_rate, momentum=recipe.momentum,
                       epochs=epochs, batch_size=recipe.batch_size, seed=seed)


def train_detector(emb, labels, recipe=Recipe(), seed=0, pooling="max", log=None, prepared=None):
    """Train a detector from scratch; returns ``(model, loss trace)``.

    ``prepared`` may carry a ``(graph, proposals)`` pair to skip proposal
    generation when several models are trained on the same data.
    """
    g, ps = prepared or build_proposals(emb, recipe)
    data = detector_dataset(g, emb, labels, ps, recipe.det_rotations, recipe.min_size, seed)
    model = GcnDetModel.init(emb.d, recipe.hidden, seed=seed, pooling=pooling)
    return train(model, data, _train_cfg(recipe, recipe.det_epochs, seed), log)


def train_segmenter(emb, labels, recipe=Recipe(), seed=0, log=None, prepared=None):
    g, ps = prepared or build_proposals(emb, recipe)
    data = segmenter_dataset(g, emb, labels, ps, recipe.seg_rotations, recipe.min_size,
                             recipe.pure_keep, recipe.impure_seeds, seed, recipe.seed_fraction)
    model = GcnSegModel.init(emb.d, recipe.hidden, seed=seed)
    return train(model, data, _train_cfg(recipe, recipe.seg_epochs, seed), log)
