from __future__ import annotations

from collections import deque
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from percolab import _kernels as K
from percolab.core import (Connected, Junction, Predicate, as_event, build_clusters, event_E, event_F,
                           find_junctions, sample_configuration)
from percolab.lattice import BondConfiguration, LatticeBox
from percolab.rng import trial_key


def bfs_components(conf: BondConfiguration) -> list[set[int]]:
    box = conf.box
    adj = [[] for _ in range(box.n_sites)]
    for e in np.flatnonzero(conf.open):
        u, v = int(box.edge_u[e]), int(box.edge_v[e])
        adj[u].append(v)
        adj[v].append(u)
    seen, comps = set(), []
    for s in range(box.n_sites):
        if s in seen:
            continue
        comp, dq = {s}, deque([s])
        while dq:
            a = dq.popleft()
            for b in adj[a]:
                if b not in comp:
                    comp.add(b)
                    dq.append(b)
        seen |= comp
        comps.append(comp)
    return comps


def simple_paths(adj, src, dst):
    out, stack = [], [(src, (src,))]
    while stack:
        a, path = stack.pop()
        if a == dst:
            out.append(path)
            continue
        for b in adj[a]:
            if b not in path:
                stack.append((b, path + (b,)))
    return out


def brute_F(conf: BondConfiguration, k, targets) -> bool:
    box = conf.box
    adj = {s: [] for s in range(box.n_sites)}
    for e in np.flatnonzero(conf.open):
        u, v = int(box.edge_u[e]), int(box.edge_v[e])
        adj[u].append(v)
        adj[v].append(u)
    ki = box.index(k)
    ps = [[set(p) for p in simple_paths(adj, ki, box.index(t))] for t in targets]
    for a, b, c in product(*ps):
        if a & b == {ki} and a & c == {ki} and b & c == {ki}:
            return True
    return False


configs = st.builds(
    lambda shape, p, seed, trial: sample_configuration(p, LatticeBox.from_shape(shape), seed, trial),
    st.tuples(st.integers(2, 6), st.integers(2, 6)), st.sampled_from([0.2, 0.45, 0.6, 0.8]),
    st.integers(0, 2**32), st.integers(0, 1000))


@settings(max_examples=60, deadline=None)
@given(configs)
def test_clusters_match_bfs(conf):
    part = build_clusters(conf)
    comps = bfs_components(conf)
    assert part.n_clusters == len(comps)
    for comp in comps:
        labels = {int(part.labels[s]) for s in comp}
        assert labels == {min(comp)}  # cluster id is the smallest site index


def test_sampling_is_deterministic_and_keyed():
    box = LatticeBox.parse("6x6")
    a = sample_configuration(0.5, box, 11, 3)
    assert np.array_equal(a.open, sample_configuration(0.5, box, 11, 3).open)
    assert not np.array_equal(a.open, sample_configuration(0.5, box, 11, 4).open)
    assert sample_configuration(0.0, box, 1, 1).n_open == 0
    assert sample_configuration(1.0, box, 1, 1).n_open == box.n_edges


def test_sampling_frequency():
    box = LatticeBox.parse("10x10")
    tot = sum(sample_configuration(0.3, box, 2, t).n_open for t in range(200))
    n = 200 * box.n_edges
    assert abs(tot / n - 0.3) < 5 * np.sqrt(0.21 / n)


def test_event_E_and_errors():
    box = LatticeBox.parse("3x3")
    conf = BondConfiguration.from_paths(box, [[(0, 0), (1, 0), (2, 0), (2, 1)]])
    assert event_E(conf, (0, 0), (2, 0), (2, 1))
    assert not event_E(conf, (0, 0), (2, 0), (0, 2))
    with pytest.raises(ValueError):
        event_E(conf, (0, 0), (2, 0), (5, 5))
    with pytest.raises(ValueError):
        event_E(conf, (0, 0), (0, 0), (2, 1))


def test_event_F_witness_on_plus_shape():
    box = LatticeBox.parse("-2,-2:2,2")
    conf = BondConfiguration.from_paths(box, [[(-2, 0), (-1, 0), (0, 0), (1, 0), (2, 0)],
                                              [(0, 0), (0, 1), (0, 2)]])
    w = event_F(conf, (0, 0), (2, 0), (0, 2), (-2, 0))
    assert w is not None
    assert [p[-1] for p in w.paths] == [(2, 0), (0, 2), (-2, 0)]
    assert all(p[0] == (0, 0) for p in w.paths)
    inner = [set(p[1:]) for p in w.paths]
    assert not (inner[0] & inner[1]) and not (inner[0] & inner[2]) and not (inner[1] & inner[2])
    for p in w.paths:
        assert all(conf.open[box.edge_index(a, b)] for a, b in zip(p, p[1:]))
    # a T-junction elsewhere does not serve as k
    assert event_F(conf, (1, 0), (2, 0), (0, 2), (-2, 0)) is None


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from([0.5, 0.65, 0.8]))
def test_event_F_matches_path_enumeration(seed, p):
    box = LatticeBox.parse("3x3")
    conf = sample_configuration(p, box, seed, 0)
    targets = [(0, 0), (2, 2), (0, 2)]
    for k in [(1, 1), (1, 0), (2, 1)]:
        w = event_F(conf, k, *targets)
        assert (w is not None) == brute_F(conf, k, targets)
    js = find_junctions(conf, *targets)
    brute = {box.site(s) for s in range(box.n_sites)
             if box.site(s) not in targets and brute_F(conf, box.site(s), targets)}
    assert js == brute


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from([0.3, 0.5, 0.7]))
def test_lazy_exploration_matches_full_sample(seed, p):
    box = LatticeBox.parse("-4,-4:4,4")
    conf = sample_configuration(p, box, seed, 5)
    start = box.index((0, 0))
    n = box.n_sites
    mark = np.full(n, -1, dtype=np.int64)
    posn = np.empty(n, dtype=np.int64)
    sites = np.empty(n, dtype=np.int64)
    eu = np.empty(box.n_edges, dtype=np.int64)
    ev = np.empty(box.n_edges, dtype=np.int64)
    ns, ne = K.explore(np.uint64(trial_key(seed, 5)), p, np.array(box.shape, dtype=np.int64), box.strides,
                       box.edge_fwd, start, mark, 0, posn, sites, eu, ev)
    members = set(build_clusters(conf).members((0, 0)).tolist())
    assert set(sites[:ns].tolist()) == members
    got = {tuple(sorted((int(sites[a]), int(sites[b])))) for a, b in zip(eu[:ne], ev[:ne])}
    want = {(int(box.edge_u[e]), int(box.edge_v[e])) for e in np.flatnonzero(conf.open)
            if int(box.edge_u[e]) in members}
    assert got == want and ne == len(want)


def test_event_descriptors():
    box = LatticeBox.parse("3x3")
    conf = BondConfiguration.from_paths(box, [[(0, 0), (1, 0)]])
    assert Connected(((0, 0), (1, 0)))(conf)
    assert not Junction((1, 1), ((0, 0), (2, 2), (0, 2)))(conf)
    ev = as_event(lambda c: c.n_open == 1)
    assert isinstance(ev, Predicate) and ev(conf)
    with pytest.raises(TypeError):
        as_event(3)
