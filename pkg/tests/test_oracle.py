from __future__ import annotations

import itertools
from collections import deque
from fractions import Fraction

import numpy as np
import pytest

from percolab.core import Connected, Junction, Predicate, find_junctions
from percolab.lattice import BondConfiguration, LatticeBox
from percolab.oracle import (GuardError, MAX_EDGES, exact_h_f, exact_histogram, exact_probability,
                             poly_value, verify_renewal)


def bfs_connected(config: BondConfiguration, a, b) -> bool:
    box = config.box
    adj: dict[int, list[int]] = {}
    for e in np.flatnonzero(config.open):
        u, v = int(box.edge_u[e]), int(box.edge_v[e])
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    s, t = box.index(a), box.index(b)
    seen, q = {s}, deque([s])
    while q:
        x = q.popleft()
        for y in adj.get(x, []):
            if y not in seen:
                seen.add(y)
                q.append(y)
    return t in seen


def brute_probability(box: LatticeBox, p: Fraction, event) -> Fraction:
    total = Fraction(0)
    for bits in itertools.product([False, True], repeat=box.n_edges):
        c = BondConfiguration(box, np.array(bits), float(p))
        if event(c):
            j = sum(bits)
            total += p**j * (1 - p)**(box.n_edges - j)
    return total


def test_unit_square_corners_is_seven_sixteenths():
    box = LatticeBox.parse("0,0:1,1")
    r = exact_probability(box, 0.5, Connected(((0, 0), (1, 1))))
    assert r.exact == Fraction(7, 16)
    assert r.probability == 7 / 16
    assert r.m == 4


@pytest.mark.parametrize("p", ["0.1", "0.25", "0.3", "0.45", "0.9"])
def test_unit_square_polynomial(p):
    q = Fraction(p)
    box = LatticeBox.parse("0,0:1,1")
    r = exact_probability(box, float(p), Connected(((0, 0), (1, 1))))
    assert r.exact == 2 * q**2 - q**4


def test_single_edge_and_series_chain():
    assert exact_probability(LatticeBox.parse("0,0:1,0"), 0.3, Connected(((0, 0), (1, 0)))).exact == Fraction(3, 10)
    chain = LatticeBox.parse("0,0:3,0")
    assert exact_probability(chain, 0.3, Connected(((0, 0), (3, 0)))).exact == Fraction(27, 1000)


def test_trivial_probabilities():
    box = LatticeBox.parse("0,0:2,1")
    ev = Connected(((0, 0), (2, 1)))
    assert exact_probability(box, 0, ev).exact == 0
    assert exact_probability(box, 1, ev).exact == 1
    with pytest.raises(ValueError):
        exact_probability(box, 1.5, ev)


def test_histogram_sums_match_brute_force_on_3x2():
    box = LatticeBox.parse("0,0:2,1")
    p = Fraction(3, 10)
    ev = lambda c: bfs_connected(c, (0, 0), (2, 1))
    assert exact_probability(box, "0.3", Connected(((0, 0), (2, 1)))).exact == brute_probability(box, p, ev)


def test_kernel_and_python_histograms_agree():
    box = LatticeBox.parse("0,0:2,2")
    sites = ((0, 0), (2, 2), (2, 0))
    kern = exact_histogram(box, Connected(sites))
    py = exact_histogram(box, Predicate(lambda c: all(bfs_connected(c, sites[0], s) for s in sites[1:])))
    assert np.array_equal(kern, py)


def test_junction_histogram_matches_find_junctions():
    box = LatticeBox.parse("0,0:2,2")
    k, ts = (1, 1), ((0, 1), (2, 1), (1, 0))
    kern = exact_histogram(box, Junction(k, ts))
    py = exact_histogram(box, Predicate(lambda c: k in find_junctions(c, *ts)))
    assert np.array_equal(kern, py)


@pytest.mark.parametrize("chunks", [2, 3, 7, 64])
def test_chunking_does_not_change_histogram(chunks):
    box = LatticeBox.parse("0,0:3,2")
    ev = Connected(((0, 0), (3, 2)))
    assert np.array_equal(exact_histogram(box, ev), exact_histogram(box, ev, chunks=chunks))


def test_guard_refuses_large_boxes():
    box = LatticeBox.parse("0,0:4,4")
    assert box.n_edges == 40 > MAX_EDGES
    with pytest.raises(GuardError) as info:
        exact_probability(box, 0.3, Connected(((0, 0), (4, 4))))
    assert info.value.m == 40


def test_increasing_event_is_monotone_in_p():
    box = LatticeBox.parse("0,0:2,2")
    hist = exact_histogram(box, Connected(((0, 0), (2, 2))))
    vals = [poly_value(hist, Fraction(i, 20)) for i in range(21)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_reflection_symmetry():
    box = LatticeBox.parse("0,0:3,2")
    a = exact_probability(box, 0.3, Connected(((0, 0), (3, 1)))).exact
    b = exact_probability(box, 0.3, Connected(((3, 2), (0, 1)))).exact
    assert a == b


def test_result_json_fields():
    r = exact_probability(LatticeBox.parse("0,0:1,1"), 0.5, Connected(((0, 0), (1, 1))))
    js = r.to_json()
    assert js["exact"] == "7/16" and js["m"] == 4
    assert js["decimal"].startswith("0.4375")


def test_h_f_at_coincident_points():
    v = exact_h_f(LatticeBox.parse("0,0:3,1"), 0.3, (1, 0), None, (1, 0), (1, 0))
    assert (v.h, v.f, v.h_eta, v.f_eta) == (1, 0, 1, 0)


def test_h_f_ordering():
    strip = LatticeBox.parse("0,0:5,1")
    v = exact_h_f(strip, 0.3, (1, 0), None, (0, 0), (5, 0))
    assert 0 <= v.f <= v.h <= 1
    assert 0 <= v.f_eta <= v.h_eta <= v.h


def test_unit_step_connection_functions():
    # k and n adjacent: the edge k-n is open and the rung at k is closed, so (0, 1)
    # stays out of the cluster at the levels of k and n; no interior site can break
    v = exact_h_f(LatticeBox.parse("0,0:1,1"), 0.3, (1, 0), None, (0, 0), (1, 0))
    assert v.m == 3
    assert v.h == v.f == Fraction(3, 10) * Fraction(7, 10)


@pytest.mark.parametrize("L", [1, 2, 3, 4])
@pytest.mark.parametrize("p", [0.2, 0.3])
def test_renewal_identity_is_exact(L, p):
    chk = verify_renewal(LatticeBox.from_shape((L + 1, 2)), p, (1, 0), None, (L, 0))
    assert chk.exact_residual == 0
    assert chk.lhs == chk.rhs


def test_renewal_rejects_wide_strips():
    with pytest.raises(ValueError):
        verify_renewal(LatticeBox.from_shape((3, 4)), 0.3, (1, 0), None, (2, 0))
