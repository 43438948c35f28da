"""Builders shared by unit and acceptance tests."""

import numpy as np

from graphclus.gcn import (GcnDetModel, GcnSegModel, SubGraphInstance, det_loss_and_grads,
                           seg_loss_and_grads)
from graphclus.numerics import grad_check


def random_instance(rng, m, d, density=0.6, allow_negative=False):
    a = rng.uniform(-1.0 if allow_negative else 0.0, 1.0, (m, m))
    a = np.triu(a * (rng.random((m, m)) < density), 1)
    adj = a + a.T
    if allow_negative:
        # keep every degree positive so propagation stays defined
        if np.any(adj.sum(axis=1) <= -0.5):
            adj = np.abs(adj)
    return SubGraphInstance(rng.standard_normal((m, d)), adj)


def max_grad_error(model, batch, step=1e-6):
    """Worst finite-difference error over every parameter of ``model``."""
    if isinstance(model, GcnDetModel):
        fn = det_loss_and_grads
    else:
        fn = seg_loss_and_grads
    _, grads = fn(model, batch)
    worst = 0.0
    for name in model.PARAM_NAMES:
        orig = getattr(model, name)

        def loss_at(p, name=name):
            setattr(model, name, p)
            try:
                return fn(model, batch)[0]
            finally:
                setattr(model, name, orig)

        worst = max(worst, grad_check(loss_at, grads[name], orig, step))
    return worst


def small_models(rng, d, hidden=(6, 5), pooling="max", seed=0):
    det = GcnDetModel.init(d, hidden, seed=seed, pooling=pooling)
    seg = GcnSegModel.init(d, hidden, seed=seed)
    # non-zero biases so every head parameter is exercised
    det.iou_b[:] = rng.normal()
    det.iop_b[:] = rng.normal()
    seg.out_b[:] = rng.normal()
    return det, seg
