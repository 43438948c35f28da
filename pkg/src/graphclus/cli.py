"""``graphclus`` command line: synthesize, propose, train, infer, evaluate."""

import argparse
import logging
import sys

import numpy as np

from . import config, io
from .evaluation import kmeans_baseline, pairwise_metrics
from .gcn import POOLINGS
from .pipeline import PipelineConfig, run_pipeline
from .synth import SynthConfig, synth_dataset
from .training import Recipe, build_proposals, train_detector, train_segmenter


def _floats(text):
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _per_class(text):
    if ":" in text:
        lo, hi = text.split(":", 1)
        return (int(lo), int(hi))
    return int(text)


def _add_proposal_flags(p):
    p.add_argument("--k", type=int, default=config.KNN_K, help="neighbors per vertex")
    p.add_argument("--s-max", type=_ints, default=config.WIDE_S_MAX_GRID,
                   help="comma-separated component size caps")
    p.add_argument("--e-tau", type=_floats, default=config.WIDE_E_TAU_GRID,
                   help="comma-separated starting thresholds")
    p.add_argument("--iterations", type=int, default=config.PROPOSAL_ITERATIONS)


def _recipe(args, **extra):
    return Recipe(k=args.k, s_max_values=args.s_max, e_taus=args.e_tau,
                  iterations=args.iterations, **extra)


def _write_trace(path, trace):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.writelines(f"{i}\t{v:.8g}\n" for i, v in enumerate(trace))


def _log_epoch(epoch, loss):
    logging.info("epoch %d loss %.6f", epoch, loss)


def cmd_synth(args):
    cfg = SynthConfig(num_classes=args.classes, points_per_class=args.per_class, dim=args.dim,
                      intra_class_noise=args.noise, outlier_fraction=args.outliers, seed=args.seed)
    emb, labels = synth_dataset(cfg)
    io.write_embeddings(args.out_emb, emb)
    io.write_labels(args.out_labels, labels)
    print(f"vertices={emb.n} dim={emb.d} classes={np.unique(labels).size}")


def cmd_propose(args):
    emb = io.read_embeddings(args.emb)
    g, ps = build_proposals(emb, _recipe(args))
    io.write_proposals(args.out, ps)
    sizes = ps.sizes()
    print(f"proposals={len(ps)} edges={g.num_edges} "
          f"min_size={sizes.min()} median_size={int(np.median(sizes))} max_size={sizes.max()}")


def cmd_train_det(args):
    emb, labels = io.read_embeddings(args.emb), io.read_labels(args.labels)
    _check_labels(emb, labels)
    recipe = _recipe(args, det_epochs=args.epochs, det_rotations=args.rotations)
    model, trace = train_detector(emb, labels, recipe, seed=args.seed, pooling=args.pooling,
                                  log=_log_epoch)
    io.write_model(args.out, model)
    _write_trace(args.trace, trace)
    print(f"final_loss={trace[-1]:.6f} epochs={len(trace)}")


def cmd_train_seg(args):
    emb, labels = io.read_embeddings(args.emb), io.read_labels(args.labels)
    _check_labels(emb, labels)
    recipe = _recipe(args, seg_epochs=args.epochs, seg_rotations=args.rotations)
    model, trace = train_segmenter(emb, labels, recipe, seed=args.seed, log=_log_epoch)
    io.write_model(args.out, model)
    _write_trace(args.trace, trace)
    print(f"final_loss={trace[-1]:.6f} epochs={len(trace)}")


def cmd_infer(args):
    emb = io.read_embeddings(args.emb)
    det = io.read_model(args.det)
    seg = io.read_model(args.seg) if args.seg else None
    if det.KIND != b"D" or (seg is not None and seg.KIND != b"S"):
        raise ValueError("--det needs a detector checkpoint and --seg a segmenter checkpoint")
    labels = io.read_labels(args.labels) if args.labels else None
    if labels is not None:
        _check_labels(emb, labels)
    proposals = io.read_proposals(args.proposals, emb.n) if args.proposals else None
    recipe = _recipe(args)
    cfg = PipelineConfig(post_process=args.post_process, nms_threshold=args.nms_threshold,
                         use_segmentation=seg is not None)
    clusters, report = run_pipeline(det, seg, emb, labels, sv_cfg=recipe.sv_config(),
                                    e_taus=recipe.e_taus, s_max_values=recipe.s_max_values,
                                    cfg=cfg, seed=args.seed, proposals=proposals)
    io.write_clusters(args.out, clusters)
    for line in report.lines():
        print(line)


def cmd_eval(args):
    labels = io.read_labels(args.labels)
    pred = io.read_clusters(args.pred, labels.size)
    print(pairwise_metrics(pred, labels).format_line())


def cmd_baseline_kmeans(args):
    emb = io.read_embeddings(args.emb)
    clusters = kmeans_baseline(emb, args.k, seed=args.seed)
    if args.out:
        io.write_clusters(args.out, clusters)
    if args.labels:
        labels = io.read_labels(args.labels)
        _check_labels(emb, labels)
        print(pairwise_metrics(clusters, labels).format_line())
    else:
        print(f"clusters={clusters.num_clusters}")


def cmd_ablate_pooling(args):
    tr_emb, tr_lab = io.read_embeddings(args.train_emb), io.read_labels(args.train_labels)
    te_emb, te_lab = io.read_embeddings(args.test_emb), io.read_labels(args.test_labels)
    _check_labels(tr_emb, tr_lab)
    _check_labels(te_emb, te_lab)
    recipe = _recipe(args, det_epochs=args.epochs)
    train_side = build_proposals(tr_emb, recipe)
    g, ps = build_proposals(te_emb, recipe)
    print(f"{'pooling':<8} {'precision':>9} {'recall':>9} {'fscore':>9}")
    for pooling in POOLINGS:
        det, _ = train_detector(tr_emb, tr_lab, recipe, seed=args.seed, pooling=pooling,
                                prepared=train_side)
        _, report = run_pipeline(det, None, te_emb, te_lab, graph=g, proposals=ps.proposals,
                                 cfg=PipelineConfig(use_segmentation=False), seed=args.seed)
        m = report["final"].metrics
        print(f"{pooling:<8} {m.precision:>9.4f} {m.recall:>9.4f} {m.fscore:>9.4f}")


def _check_labels(emb, labels):
    if labels.size != emb.n:
        raise ValueError(f"{labels.size} labels for {emb.n} embeddings")


def build_parser():
    parser = argparse.ArgumentParser(prog="graphclus", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic labeled embedding set")
    p.add_argument("--classes", type=int, default=20)
    p.add_argument("--per-class", type=_per_class, default=50, help="count, or lo:hi")
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--noise", type=float, default=0.15)
    p.add_argument("--outliers", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-emb", required=True)
    p.add_argument("--out-labels", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("propose", help="write multi-scale cluster proposals")
    p.add_argument("--emb", required=True)
    p.add_argument("--out", required=True)
    _add_proposal_flags(p)
    p.set_defaults(func=cmd_propose)

    for name, func, epochs, rotations in (
        ("train-det", cmd_train_det, config.DET_EPOCHS, config.DET_ROTATIONS),
        ("train-seg", cmd_train_seg, config.SEG_EPOCHS, config.SEG_ROTATIONS),
    ):
        p = sub.add_parser(name, help=f"train the {'detector' if name == 'train-det' else 'segmenter'}")
        p.add_argument("--emb", required=True)
        p.add_argument("--labels", required=True)
        p.add_argument("--out", required=True, help="checkpoint path")
        p.add_argument("--trace", help="write the per-epoch loss here")
        p.add_argument("--epochs", type=int, default=epochs)
        p.add_argument("--rotations", type=int, default=rotations,
                       help="rotated copies of each training proposal")
        p.add_argument("--seed", type=int, default=0)
        if name == "train-det":
            p.add_argument("--pooling", choices=POOLINGS, default="max")
        _add_proposal_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("infer", help="cluster embeddings with trained models")
    p.add_argument("--emb", required=True)
    p.add_argument("--det", required=True)
    p.add_argument("--seg", help="segmenter checkpoint; omit to skip refinement")
    p.add_argument("--out", required=True)
    p.add_argument("--labels", help="add pairwise metrics to the stage report")
    p.add_argument("--proposals", help="use these proposals instead of generating them")
    p.add_argument("--post-process", choices=("deoverlap", "nms"), default="deoverlap")
    p.add_argument("--nms-threshold", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    _add_proposal_flags(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="print pairwise precision/recall/F")
    p.add_argument("--pred", required=True)
    p.add_argument("--labels", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("baseline-kmeans", help="K-means clustering baseline")
    p.add_argument("--emb", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out")
    p.add_argument("--labels")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_baseline_kmeans)

    p = sub.add_parser("ablate-pooling", help="compare max/mean/sum detector pooling")
    p.add_argument("--train-emb", required=True)
    p.add_argument("--train-labels", required=True)
    p.add_argument("--test-emb", required=True)
    p.add_argument("--test-labels", required=True)
    p.add_argument("--epochs", type=int, default=config.DET_EPOCHS)
    p.add_argument("--seed", type=int, default=0)
    _add_proposal_flags(p)
    p.set_defaults(func=cmd_ablate_pooling)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except (OSError, ValueError, TypeError, IndexError, RuntimeError, FloatingPointError) as exc:
        print(f"graphclus {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
