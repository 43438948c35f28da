import dataclasses
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphclus.evaluation import ClusterSet
from graphclus.gcn import GcnDetModel, GcnSegModel, TrainConfig, make_instance, train
from graphclus.graph import EmbeddingSet, build_knn_graph
from graphclus.pipeline import (PipelineConfig, ScoredProposal, de_overlap, finalize, nms,
                                proposal_targets, rank_proposals, run_pipeline, score_proposals,
                                segment_proposal)
from graphclus.synth import SynthConfig, synth_dataset
from graphclus.training import Recipe, train_detector
from oracles import deoverlap_oracle


def sp(ids, iou, iop=1.0):
    return ScoredProposal(np.asarray(ids, dtype=np.int64), iou, iop)


def _clusters(cs):
    return [c.tolist() for c in cs.clusters()]


@pytest.fixture(scope="module")
def small_world():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((40, 4))
    emb = EmbeddingSet(x)
    return build_knn_graph(emb, 6), emb


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(iop_low=0.8, iop_high=0.2)
    with pytest.raises(ValueError):
        PipelineConfig(num_hypotheses=0)
    with pytest.raises(ValueError):
        PipelineConfig(post_process="merge")


def test_score_proposals_counts(small_world):
    g, emb = small_world
    det = GcnDetModel.init(4, (6, 3), seed=0)
    props = [np.array([0, 1, 2]), np.array([3]), np.array([4, 5])]
    assert score_proposals(det, [], g, emb) == []
    assert len(score_proposals(det, props, g, emb, det_iou_min=0.0)) == 3
    assert score_proposals(det, props, g, emb, det_iou_min=1.0 + 1e-9) == []
    assert len(score_proposals(det, props, g, emb, min_size=2)) == 2


def test_rank_is_stable():
    ranked = rank_proposals([sp([0], 0.5), sp([1], 0.9), sp([2], 0.5)])
    assert [p.vertices[0] for p in ranked] == [1, 0, 2]


def test_segment_passthrough_outside_window(small_world):
    g, emb = small_world
    seg = GcnSegModel.init(4, (6, 3))
    p = sp([0, 1, 2, 3], 0.5, 0.9)
    assert segment_proposal(seg, p, g, emb, PipelineConfig(), 0) is p.vertices


def test_segment_never_empty(small_world):
    g, emb = small_world
    seg = GcnSegModel.init(4, (6, 3))
    seg.out_w[:] = 0
    seg.out_b[:] = -50.0
    p = sp([0, 1, 2, 3], 0.5, 0.5)
    assert segment_proposal(seg, p, g, emb, PipelineConfig(), 0).tolist() == [0, 1, 2, 3]


def test_segment_overfit_model_keeps_seed_class():
    # 6 class-A vertices near e0, 2 class-B vertices near e1, all linked
    rng = np.random.default_rng(1)
    x = np.vstack([np.eye(3)[0] + 0.05 * rng.standard_normal((6, 3)),
                   np.eye(3)[1] + 0.05 * rng.standard_normal((2, 3))])
    emb = EmbeddingSet(x)
    labels = np.array([0] * 6 + [1] * 2)
    g = build_knn_graph(emb, 7)
    p = np.arange(8)
    inst = make_instance(g, emb, p)
    data = [(inst, s, (labels == labels[s]).astype(float)) for s in range(8)]
    seg, trace = train(GcnSegModel.init(3, (16, 8), seed=0), data,
                       TrainConfig(epochs=200, batch_size=1))
    assert trace[-1] < 0.05
    out = segment_proposal(seg, sp(p, 0.5, 0.5), g, emb, PipelineConfig(num_hypotheses=8), 0)
    assert out.tolist() == [0, 1, 2, 3, 4, 5]


def test_deoverlap_examples():
    disjoint = [sp([0, 1], 0.9), sp([2], 0.8), sp([3, 4], 0.7)]
    assert _clusters(de_overlap(disjoint, 5)) == [[0, 1], [2], [3, 4]]
    overlap = [sp([0, 1, 2], 0.9), sp([1, 2, 3], 0.8)]
    assert _clusters(de_overlap(overlap, 4)) == [[0, 1, 2], [3]]
    nested = [sp([0, 1, 2], 0.9), sp([1, 2], 0.8)]
    assert _clusters(de_overlap(nested, 3)) == [[0, 1, 2]]


def test_deoverlap_min_keep():
    ranked = [sp([0, 1, 2], 0.9), sp([1, 2, 3], 0.8)]
    assert _clusters(de_overlap(ranked, 4, min_keep=0.5)) == [[0, 1, 2]]


def test_unsorted_input_rejected():
    with pytest.raises(ValueError, match="sorted"):
        de_overlap([sp([0], 0.1), sp([1], 0.9)], 2)
    with pytest.raises(ValueError, match="sorted"):
        nms([sp([0], 0.1), sp([1], 0.9)], 0.3, 2)


def test_nms_examples():
    a, b = sp([0, 1, 2, 3], 0.9), sp([1, 2, 3, 4], 0.8)  # IoU 3/5
    assert _clusters(nms([a, b], 0.5, 5)) == [[0, 1, 2, 3]]
    assert _clusters(nms([a, b], 1.0, 5)) == [[0, 1, 2, 3], [4]]
    dup = [sp([0, 1], 0.9), sp([0, 1], 0.8)]
    assert _clusters(nms(dup, 1.0, 2)) == [[0, 1]]
    disjoint = [sp([0], 0.9), sp([1, 2], 0.8), sp([3], 0.1)]
    for thr in (0.01, 0.3, 1.0):
        assert _clusters(nms(disjoint, thr, 4)) == [[0], [1, 2], [3]]


def test_finalize_examples():
    full = finalize(ClusterSet([3, 3, 1]))
    assert full.assignment.tolist() == [0, 0, 1]
    assert finalize(ClusterSet([-1, -1, -1])).assignment.tolist() == [0, 1, 2]
    assert _clusters(finalize([[0, 1]], 3)) == [[0, 1], [2]]
    with pytest.raises(ValueError, match="twice"):
        finalize([[0, 1], [1]], 3)
    with pytest.raises(ValueError):
        finalize([[0]])
    with pytest.raises(ValueError):
        finalize(ClusterSet([0, 1]), 3)


families = st.integers(1, 40).flatmap(lambda n: st.tuples(
    st.just(n),
    st.lists(st.sets(st.integers(0, n - 1), min_size=1, max_size=n).map(sorted),
             min_size=0, max_size=20)))


@settings(max_examples=200, deadline=None)
@given(families)
def test_deoverlap_disjoint_cover_and_finalize_total(fam):
    n, props = fam
    ranked = [sp(p, 1.0 - i / 100) for i, p in enumerate(props)]
    part = de_overlap(ranked, n)
    got = _clusters(part)
    assert got == deoverlap_oracle(props)
    covered = sorted(v for c in got for v in c)
    assert covered == sorted({v for p in props for v in p})
    total = finalize(part, n)
    assert total.is_total() and sorted(set(total.assignment)) == list(range(total.num_clusters))


def test_deoverlap_scales_linearly():
    rng = np.random.default_rng(2)

    def family(m):
        n = 10 * m
        return [sp(np.sort(rng.choice(n, 30, replace=False)), 1.0) for _ in range(m)], n

    small, n_small = family(2000)
    big, n_big = family(20000)
    de_overlap(small, n_small)

    def timed(r, n):
        best = np.inf
        for _ in range(3):
            t0 = time.perf_counter()
            de_overlap(r, n)
            best = min(best, time.perf_counter() - t0)
        return best

    assert timed(big, n_big) <= 3 * 10 * timed(small, n_small) + 0.05


def test_proposal_targets():
    t = proposal_targets([np.array([0, 1]), np.array([1, 2])], np.array([0, 0, 1]))
    assert [(q.iou, q.iop) for q in t] == [(1.0, 1.0), (1 / 3, 0.5)]


@pytest.fixture(scope="module")
def separated():
    r = dataclasses.replace(Recipe(), k=10, det_epochs=5, det_rotations=2, hidden=(32, 16))
    cfg = SynthConfig(num_classes=6, points_per_class=15, dim=16, intra_class_noise=0.02)
    tr = synth_dataset(dataclasses.replace(cfg, seed=1))
    te = synth_dataset(dataclasses.replace(cfg, seed=2))
    det, _ = train_detector(*tr, r)
    return r, det, te


def test_pipeline_perfect_on_separated_data(separated):
    r, det, (emb, labels) = separated
    clusters, report = run_pipeline(det, None, emb, labels, sv_cfg=r.sv_config(), e_taus=r.e_taus,
                                    s_max_values=r.s_max_values)
    assert report["final"].metrics.fscore == 1.0
    assert [s.name for s in report.stages] == ["propose", "detect", "deoverlap", "final"]
    with pytest.raises(KeyError):
        report["segment"]


def test_pipeline_deterministic_with_segmenter(separated):
    r, det, (emb, labels) = separated
    seg = GcnSegModel.init(emb.d, (8, 4), seed=0)
    cfg = PipelineConfig(iop_low=0.0, iop_high=1.0)
    runs = [run_pipeline(det, seg, emb, labels, sv_cfg=r.sv_config(), e_taus=r.e_taus,
                         s_max_values=r.s_max_values, cfg=cfg, seed=4) for _ in range(2)]
    assert runs[0][0] == runs[1][0]
    assert "segment" in [s.name for s in runs[0][1].stages]
    assert runs[0][0].is_total()


def test_pipeline_nms_and_default_grid(separated):
    r, det, (emb, labels) = separated
    clusters, report = run_pipeline(det, None, emb, labels, sv_cfg=r.sv_config(),
                                    cfg=PipelineConfig(post_process="nms"))
    assert clusters.is_total() and report.stages[2].name == "nms"
    assert all(line.startswith("stage=") for line in report.lines())
