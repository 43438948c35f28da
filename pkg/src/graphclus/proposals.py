"""Multi-scale cluster proposals built from super-vertices."""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import config
from .graph import EmbeddingSet, build_knn_graph, connected_components


@dataclass(frozen=True)
class SuperVertexConfig:
    e_tau: float = config.E_TAU_GRID[0]
    s_max: int = config.S_MAX
    delta: float = config.THRESHOLD_STEP
    iterations: int = config.PROPOSAL_ITERATIONS
    k: int = config.KNN_K
    max_proposal_size: int = config.MAX_PROPOSAL_SIZE

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.s_max < 2:
            raise ValueError("s_max must be at least 2")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.k < 1:
            raise ValueError("k must be at least 1")

    def max_rounds(self):
        """Upper bound on threshold escalations before every edge is pruned."""
        return max(0, math.ceil((1.0 - self.e_tau) / self.delta)) + 1


@dataclass
class ProposalSet:
    proposals: list = field(default_factory=list)
    iteration: list = field(default_factory=list)

    def __len__(self):
        return len(self.proposals)

    def __iter__(self):
        return iter(self.proposals)

    def add(self, vertices, it, _seen=None):
        """Append unless a set-equal proposal is already present."""
        key = _key(vertices)
        if _seen is None:
            _seen = {_key(p) for p in self.proposals}
        if key in _seen:
            return False
        _seen.add(key)
        self.proposals.append(vertices)
        self.iteration.append(it)
        return True

    def merge(self, other):
        seen = {_key(p) for p in self.proposals}
        for p, it in zip(other.proposals, other.iteration):
            self.add(p, it, seen)
        return self

    def sizes(self):
        return np.array([len(p) for p in self.proposals], dtype=np.int64)


def _key(v):
    return np.asarray(v, dtype=np.int64).tobytes()


def generate_super_vertices(g, cfg, return_rounds=False):
    """Partition the graph into components smaller than ``cfg.s_max``.

    Components that are still too large are re-split on the remaining
    vertices with the threshold raised by ``cfg.delta`` each round.
    """
    accepted = []
    remainder = None
    rounds = 0
    while True:
        e_tau = cfg.e_tau + rounds * cfg.delta
        comps = connected_components(g, restrict=remainder, min_weight=e_tau)
        rounds += 1
        big = []
        for c in comps:
            (accepted if len(c) < cfg.s_max else big).append(c)
        if not big:
            break
        remainder = np.concatenate(big)
    accepted.sort(key=lambda c: c[0])
    if return_rounds:
        return accepted, rounds
    return accepted


def average_center(emb, v, name=None):
    """Unit-length mean of the member rows."""
    mean = emb.features[np.asarray(v, dtype=np.int64)].mean(axis=0)
    norm = np.linalg.norm(mean)
    if not norm > 1e-12:
        label = name if name is not None else f"of size {len(v)}"
        raise ValueError(f"proposal {label} has a zero-norm mean feature")
    return mean / norm


def generate_proposals(g, emb, cfg):
    """Super-vertices plus ``cfg.iterations - 1`` levels of merged proposals.

    Each level averages the features of the current groups, links the
    centers with a KNN graph, splits that graph into super-vertices and
    flattens every resulting group back onto base vertices. Flattened
    groups larger than ``cfg.max_proposal_size`` are discarded.
    """
    out = ProposalSet()
    seen = set()
    level = generate_super_vertices(g, cfg)
    for it in range(cfg.iterations):
        for p in level:
            out.add(p, it, seen)
        if it == cfg.iterations - 1 or len(level) < 2:
            break
        centers = np.stack([average_center(emb, p, name=i) for i, p in enumerate(level)])
        k = min(cfg.k, len(level) - 1)
        top = build_knn_graph(EmbeddingSet(centers), k)
        groups = generate_super_vertices(top, cfg)
        merged = []
        for grp in groups:
            members = np.sort(np.concatenate([level[j] for j in grp]))
            if len(members) <= cfg.max_proposal_size:
                merged.append(members)
        level = merged
    return out


def generate_multi_threshold(g, emb, cfg, e_taus=config.E_TAU_GRID):
    """Union of proposals generated at each starting threshold."""
    out = ProposalSet()
    for e in e_taus:
        out.merge(generate_proposals(g, emb, replace(cfg, e_tau=e)))
    return out


def generate_proposal_grid(g, emb, cfg, s_max_values, e_taus=config.E_TAU_GRID):
    """Union of multi-threshold proposals over several size caps.

    Small caps give tight, pure groups; large caps give whole-class
    candidates. The detector then picks among scales.
    """
    out = ProposalSet()
    for s in s_max_values:
        out.merge(generate_multi_threshold(g, emb, replace(cfg, s_max=int(s)), e_taus))
    return out
