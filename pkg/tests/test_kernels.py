"""Both kernel backends against brute-force oracles and each other."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphclus import _kernels
from graphclus.graph import AffinityGraph
from conftest import BACKENDS
from oracles import bfs_components, deoverlap_oracle, nms_oracle

backends = pytest.mark.parametrize("name", sorted(BACKENDS))


def _graph(n, edges):
    if not edges:
        return AffinityGraph(np.zeros(n + 1, dtype=np.int64), np.zeros(0, np.int64), np.zeros(0))
    a, b, w = zip(*edges)
    return AffinityGraph.from_edges(n, a, b, w)


def _components_from_labels(labels):
    groups = {}
    for v, c in enumerate(labels):
        if c >= 0:
            groups.setdefault(int(c), []).append(v)
    return [tuple(groups[c]) for c in sorted(groups)]


edge_lists = st.integers(1, 25).flatmap(
    lambda n: st.tuples(
        st.just(n),
        st.lists(
            st.tuples(st.integers(0, n - 1), st.integers(0, n - 1),
                      st.sampled_from([-0.5, 0.1, 0.5, 0.7, 0.9])),
            max_size=40,
        ),
        st.lists(st.booleans(), min_size=n, max_size=n),
        st.sampled_from([-np.inf, 0.5, 0.8]),
    )
)


def _dedupe(edges):
    seen, out = set(), []
    for a, b, w in edges:
        key = (min(a, b), max(a, b))
        if a != b and key not in seen:
            seen.add(key)
            out.append((a, b, w))
    return out


@backends
@settings(max_examples=150, deadline=None)
@given(edge_lists)
def test_components_match_bfs(name, case):
    n, edges, mask, min_w = case
    edges = _dedupe(edges)
    g = _graph(n, edges)
    active = np.array(mask, dtype=np.bool_)
    labels = BACKENDS[name][0](g.indptr, g.indices, g.weights, active, float(min_w))
    expect = bfs_components(n, edges, np.flatnonzero(active), min_w)
    assert _components_from_labels(labels) == expect
    assert np.all(labels[~active] == -1)


proposal_families = st.integers(1, 30).flatmap(
    lambda n: st.tuples(
        st.just(n),
        st.lists(st.sets(st.integers(0, n - 1), min_size=1, max_size=n).map(sorted), max_size=15),
    )
)


def _clusters(assign):
    return [list(c) for c in _components_from_labels(assign)]


@backends
@settings(max_examples=200, deadline=None)
@given(proposal_families, st.sampled_from([0.0, 0.3, 0.6]))
def test_deoverlap_matches_oracle(name, fam, min_keep):
    n, props = fam
    flat, offsets = _kernels.flatten(props)
    assign = BACKENDS[name][1](flat, offsets, n, min_keep)
    assert _clusters(assign) == deoverlap_oracle(props, min_keep)


@backends
@settings(max_examples=200, deadline=None)
@given(proposal_families, st.sampled_from([0.0, 0.2, 0.3, 0.5, 1.0]))
def test_nms_matches_oracle(name, fam, thr):
    n, props = fam
    flat, offsets = _kernels.flatten(props)
    assign = BACKENDS[name][2](flat, offsets, n, thr)
    if thr <= 0.0:
        expect = deoverlap_oracle(props[:1])
    else:
        expect = nms_oracle(props, thr)
    assert _clusters(assign) == expect


def test_backends_agree_on_large_random_family():
    rng = np.random.default_rng(5)
    n = 800
    props = [np.sort(rng.choice(n, size=rng.integers(1, 40), replace=False)) for _ in range(600)]
    flat, offsets = _kernels.flatten(props)
    for mk in (0.0, 0.5):
        assert np.array_equal(_kernels.deoverlap_numba(flat, offsets, n, mk),
                              _kernels.deoverlap_numpy(flat, offsets, n, mk))
    assert np.array_equal(_kernels.nms_numba(flat, offsets, n, 0.3),
                          _kernels.nms_numpy(flat, offsets, n, 0.3))


def test_flatten_empty():
    flat, offsets = _kernels.flatten([])
    assert flat.size == 0 and offsets.tolist() == [0]


def test_backend_flag(monkeypatch):
    monkeypatch.setattr(_kernels, "USE_NUMBA", False)
    assert _kernels.backend() == "numpy"
    monkeypatch.setattr(_kernels, "USE_NUMBA", True)
    assert _kernels.backend() == "numba"


@pytest.mark.parametrize("value,expect", [("1", True), ("yes", True), ("0", False), ("", False)])
def test_env_flag_parsing(monkeypatch, value, expect):
    monkeypatch.setenv("GRAPHCLUS_DISABLE_NUMBA", value)
    assert _kernels._env_disabled() is expect
