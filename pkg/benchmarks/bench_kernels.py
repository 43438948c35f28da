"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--proposals 10000]

Each kernel is run once untimed so numba compilation is excluded, then the
best of ``--repeat`` runs is reported. Outputs of the two backends are
checked for equality before timing.
"""

import argparse
import time

import numpy as np

from graphclus import _kernels
from graphclus.graph import EmbeddingSet, build_knn_graph
from graphclus.synth import SynthConfig, synth_dataset


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def random_proposals(n, m, rng):
    sizes = rng.integers(2, 60, size=m)
    sets = [np.sort(rng.choice(n, size=s, replace=False)) for s in sizes]
    return _kernels.flatten(sets)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--vertices", type=int, default=5000)
    ap.add_argument("--proposals", type=int, default=10000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)

    emb, _ = synth_dataset(SynthConfig(num_classes=50, points_per_class=args.vertices // 50, seed=args.seed))
    g = build_knn_graph(EmbeddingSet(emb.features), 20)
    active = np.ones(g.n, dtype=bool)
    flat, offsets = random_proposals(g.n, args.proposals, rng)

    cases = [
        ("components", _kernels.components_numba, _kernels.components_numpy,
         (g.indptr, g.indices, g.weights, active, 0.6)),
        ("deoverlap", _kernels.deoverlap_numba, _kernels.deoverlap_numpy,
         (flat, offsets, g.n, 0.0)),
        ("deoverlap_min_keep", _kernels.deoverlap_numba, _kernels.deoverlap_numpy,
         (flat, offsets, g.n, 0.5)),
        ("nms", _kernels.nms_numba, _kernels.nms_numpy, (flat, offsets, g.n, 0.3)),
    ]
    print(f"vertices={g.n} edges={g.num_edges} proposals={args.proposals} numba={_kernels.HAVE_NUMBA}")
    print(f"{'kernel':<20} {'numba_ms':>10} {'numpy_ms':>10} {'speedup':>8}")
    for name, fast, slow, call_args in cases:
        if not np.array_equal(fast(*call_args), slow(*call_args)):
            raise SystemExit(f"{name}: backends disagree")
        tf = best_of(lambda: fast(*call_args), args.repeat)
        ts = best_of(lambda: slow(*call_args), args.repeat)
        print(f"{name:<20} {tf * 1e3:>10.2f} {ts * 1e3:>10.2f} {ts / tf:>7.1f}x")


if __name__ == "__main__":
    main()
