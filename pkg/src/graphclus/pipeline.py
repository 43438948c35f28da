"""End-to-end inference: propose, detect, segment, de-overlap."""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, config
from .evaluation import ClusterSet, pairwise_metrics, quality_scores
from .gcn import det_forward, make_instance, seg_forward
from .graph import build_knn_graph
from .numerics import make_rng
from .proposals import SuperVertexConfig, generate_multi_threshold, generate_proposal_grid

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScoredProposal:
    vertices: np.ndarray
    pred_iou: float
    pred_iop: float


@dataclass(frozen=True)
class PipelineConfig:
    iop_low: float = config.IOP_LOW
    iop_high: float = config.IOP_HIGH
    det_iou_min: float = 0.0
    seg_keep_threshold: float = config.SEG_KEEP_THRESHOLD
    num_hypotheses: int = config.NUM_HYPOTHESES
    deoverlap_iou_min: float = 0.0
    use_segmentation: bool = True
    post_process: str = "deoverlap"
    nms_threshold: float = 0.3
    min_proposal_size: int = config.MIN_PROPOSAL_SIZE
    center_features: bool = False
    feature_scale: float = None

    def __post_init__(self):
        if not 0 <= self.iop_low <= self.iop_high <= 1:
            raise ValueError("need 0 <= iop_low <= iop_high <= 1")
        if self.num_hypotheses < 1:
            raise ValueError("num_hypotheses must be at least 1")
        if self.post_process not in ("deoverlap", "nms"):
            raise ValueError(f"unknown post_process {self.post_process!r}")


def score_proposals(model, proposals, graph, emb, det_iou_min=0.0, center=False,
                    min_size=1, scale=None):
    """Detector scores for every proposal with at least ``min_size`` vertices.

    Smaller proposals are dropped; their vertices end up as singletons
    unless another proposal claims them.
    """
    out = []
    for p in proposals:
        if len(p) < min_size:
            continue
        q = det_forward(model, make_instance(graph, emb, p, center, scale))
        if q.iou >= det_iou_min:
            out.append(ScoredProposal(np.asarray(p, dtype=np.int64), q.iou, q.iop))
    return out


def segment_proposal(model, sp, graph, emb, cfg, rng):
    """Strip outliers from a moderately pure proposal.

    Several seeds are tried; the hypothesis keeping the most vertices wins.
    Proposals outside the IoP window, or whose best hypothesis keeps
    nothing, come back unchanged.
    """
    if not cfg.iop_low <= sp.pred_iop <= cfg.iop_high:
        return sp.vertices
    inst = make_instance(graph, emb, sp.vertices, cfg.center_features, cfg.feature_scale)
    rng = make_rng(rng)
    seeds = rng.choice(inst.size, size=min(cfg.num_hypotheses, inst.size), replace=False)
    best = None
    for s in seeds:
        keep = seg_forward(model, inst, int(s)) >= cfg.seg_keep_threshold
        if best is None or keep.sum() > best.sum():
            best = keep
    if not best.any():
        return sp.vertices
    return sp.vertices[best]


def rank_proposals(scored):
    """Stable sort by predicted IoU, highest first."""
    order = sorted(range(len(scored)), key=lambda i: -scored[i].pred_iou)
    return [scored[i] for i in order]


def _check_sorted(ranked):
    ious = np.array([sp.pred_iou for sp in ranked])
    if ious.size > 1 and np.any(np.diff(ious) > 0):
        raise ValueError("proposals must be sorted by pred_iou, descending")


def _vertices(ranked):
    return [sp.vertices if isinstance(sp, ScoredProposal) else sp for sp in ranked]


def _infer_n(sets, n):
    if n is not None:
        return n
    return int(max((int(np.max(s)) for s in sets if len(s)), default=-1)) + 1


def de_overlap(ranked, n=None, min_keep=0.0):
    """Assign each vertex to the first ranked proposal containing it.

    A proposal whose unclaimed fraction falls below ``min_keep`` is skipped
    and claims nothing. Uncovered vertices stay at ``-1``.
    """
    _check_sorted([sp for sp in ranked if isinstance(sp, ScoredProposal)])
    sets = _vertices(ranked)
    flat, offsets = _kernels.flatten(sets)
    return ClusterSet(_kernels.deoverlap_assign(flat, offsets, _infer_n(sets, n), min_keep))


def nms(ranked, iou_threshold, n=None):
    """Greedy set-NMS followed by first-accepted-wins vertex assignment."""
    _check_sorted([sp for sp in ranked if isinstance(sp, ScoredProposal)])
    sets = _vertices(ranked)
    flat, offsets = _kernels.flatten(sets)
    return ClusterSet(_kernels.nms_assign(flat, offsets, _infer_n(sets, n), iou_threshold))


def finalize(partial, n=None):
    """Make every vertex belong to exactly one cluster.

    ``partial`` is a ClusterSet (``-1`` = uncovered) or a list of disjoint
    vertex arrays. Uncovered vertices become singletons; ids are renumbered
    in order of first appearance by vertex id.
    """
    if isinstance(partial, ClusterSet):
        a = partial.assignment.copy()
        if n is not None and n != a.size:
            raise ValueError(f"partial assignment covers {a.size} vertices, expected {n}")
    else:
        if n is None:
            raise ValueError("n is required when finalizing a list of clusters")
        a = -np.ones(n, dtype=np.int64)
        for cid, members in enumerate(partial):
            members = np.asarray(members, dtype=np.int64)
            if np.any(a[members] >= 0) or np.unique(members).size != members.size:
                raise ValueError(f"vertex covered twice (cluster {cid})")
            a[members] = cid
    loose = np.flatnonzero(a < 0)
    a[loose] = a.max(initial=-1) + 1 + np.arange(loose.size)
    _, first = np.unique(a, return_index=True)
    remap = np.empty(first.size, dtype=np.int64)
    remap[np.argsort(first)] = np.arange(first.size)
    _, dense = np.unique(a, return_inverse=True)
    return ClusterSet(remap[dense])


@dataclass
class StageRecord:
    name: str
    count: int
    metrics: object = None
    seconds: float = 0.0

    def format_line(self):
        line = f"stage={self.name} count={self.count} seconds={self.seconds:.3f}"
        if self.metrics is not None:
            line += " " + self.metrics.format_line()
        return line


@dataclass
class PipelineReport:
    stages: list = field(default_factory=list)

    def add(self, *args, **kw):
        rec = StageRecord(*args, **kw)
        self.stages.append(rec)
        log.info(rec.format_line())
        return rec

    def lines(self):
        return [s.format_line() for s in self.stages]

    def __getitem__(self, name):
        for s in self.stages:
            if s.name == name:
                return s
        raise KeyError(name)


def run_pipeline(det, seg, emb, labels=None, graph=None, sv_cfg=None,
                 e_taus=config.E_TAU_GRID, cfg=None, seed=0, proposals=None,
                 s_max_values=None):
    """Cluster ``emb`` with trained detector/segmenter models.

    ``seg`` may be None (or ``cfg.use_segmentation`` False) to skip the
    refinement stage. Proposals come from ``proposals`` if given, else from
    the threshold grid ``e_taus`` at ``sv_cfg.s_max`` (or at every size in
    ``s_max_values``). Returns the total ClusterSet and a per-stage report.
    """
    sv_cfg = sv_cfg or SuperVertexConfig()
    cfg = cfg or PipelineConfig()
    report = PipelineReport()
    n = emb.n

    def metrics_of(sets):
        if labels is None:
            return None
        return pairwise_metrics(finalize(de_overlap(sets, n), n), labels)

    t0 = time.perf_counter()
    if graph is None:
        graph = build_knn_graph(emb, min(sv_cfg.k, n - 1))
    if proposals is None and s_max_values is not None:
        proposals = generate_proposal_grid(graph, emb, sv_cfg, s_max_values, e_taus)
    elif proposals is None:
        proposals = generate_multi_threshold(graph, emb, sv_cfg, e_taus)
    report.add("propose", len(proposals), seconds=time.perf_counter() - t0)

    t0 = time.perf_counter()
    scored = score_proposals(det, proposals, graph, emb, cfg.det_iou_min, cfg.center_features,
                             cfg.min_proposal_size, cfg.feature_scale)
    ranked = rank_proposals(scored)
    report.add("detect", len(ranked), metrics_of(ranked), time.perf_counter() - t0)

    if seg is not None and cfg.use_segmentation:
        t0 = time.perf_counter()
        rng = make_rng(seed)
        refined = []
        for sp in ranked:
            v = segment_proposal(seg, sp, graph, emb, cfg, rng)
            refined.append(ScoredProposal(v, sp.pred_iou, sp.pred_iop))
        ranked = refined
        report.add("segment", len(ranked), metrics_of(ranked), time.perf_counter() - t0)

    t0 = time.perf_counter()
    if cfg.post_process == "nms":
        partial = nms(ranked, cfg.nms_threshold, n)
    else:
        partial = de_overlap(ranked, n, cfg.deoverlap_iou_min)
    report.add(cfg.post_process, partial.num_clusters, seconds=time.perf_counter() - t0)
    clusters = finalize(partial, n)
    report.add("final", clusters.num_clusters,
               pairwise_metrics(clusters, labels) if labels is not None else None)
    return clusters, report


def proposal_targets(proposals, labels):
    """Ground-truth IoU/IoP for each proposal."""
    labels = np.asarray(labels)
    sizes = np.bincount(labels)
    return [quality_scores(p, labels, sizes) for p in proposals]
