"""Gaussian-blob embeddings on the unit sphere for desk-scale experiments."""

from dataclasses import dataclass

import numpy as np

from .graph import EmbeddingSet
from .numerics import make_rng


@dataclass(frozen=True)
class SynthConfig:
    num_classes: int = 20
    points_per_class: object = 50  # int, or (lo, hi) inclusive range per class
    dim: int = 32
    intra_class_noise: float = 0.15
    outlier_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError("num_classes must be at least 1")
        if self.dim < 2:
            raise ValueError("dim must be at least 2")
        if self.intra_class_noise < 0:
            raise ValueError("intra_class_noise must be non-negative")
        if not 0 <= self.outlier_fraction < 1:
            raise ValueError("outlier_fraction must be in [0, 1)")


def _unit(x):
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def synth_dataset(cfg):
    """Return ``(EmbeddingSet, labels)``.

    Each class gets a random unit center; members are the center plus
    per-coordinate Gaussian noise, renormalized. A random ``outlier_fraction``
    of points is then replaced by uniform directions, keeping their labels.
    """
    rng = make_rng(cfg.seed)
    centers = _unit(rng.standard_normal((cfg.num_classes, cfg.dim)))
    if isinstance(cfg.points_per_class, (tuple, list)):
        lo, hi = cfg.points_per_class
        counts = rng.integers(lo, hi + 1, size=cfg.num_classes)
    else:
        counts = np.full(cfg.num_classes, int(cfg.points_per_class))
    labels = np.repeat(np.arange(cfg.num_classes), counts)
    n = labels.size
    x = centers[labels] + cfg.intra_class_noise * rng.standard_normal((n, cfg.dim))
    n_out = int(round(cfg.outlier_fraction * n))
    if n_out:
        idx = rng.choice(n, size=n_out, replace=False)
        x[idx] = rng.standard_normal((n_out, cfg.dim))
    return EmbeddingSet(_unit(x)), labels


def split_by_class(emb, labels, train_fraction, seed=0):
    """Split into two datasets with disjoint class ids.

    Returns ``((train_emb, train_labels), (test_emb, test_labels))``; labels
    are renumbered from zero within each side.
    """
    labels = np.asarray(labels)
    classes = np.unique(labels)
    rng = make_rng(seed)
    picked = rng.permutation(classes)[: int(round(train_fraction * classes.size))]
    mask = np.isin(labels, picked)

    def side(m):
        _, lab = np.unique(labels[m], return_inverse=True)
        return EmbeddingSet(emb.features[m]), lab

    return side(mask), side(~mask)
