"""Slab views, h/f connection classes and break points of a cluster.

Conventions for the strip cluster C^t_{k,n} (the component of k inside the slab
{(t,k) <= (t,x) <= (t,n)}):

* inequalities are non-strict, exactly as in the definitions;
* edges lying entirely in the terminal hyperplane (t,x) = (t,n) are not part of
  the slab graph.  With this half-open convention the slab graphs of [k,b] and
  [b,n] share no edge, which is what makes the first-break-point decomposition
  an exact partition on finite strips.

Directions are snapped to rationals with denominator <= 10^6 and levels (t,x)
are compared as exact integers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import lcm
from typing import Sequence

import numpy as np

from .core import build_clusters
from .lattice import BondConfiguration, LatticeBox
from .norms import DirectionalNorm, dual_point, in_polar_body, in_surcharge_cone

Site = tuple[int, ...]


@dataclass(frozen=True)
class SlabSpec:
    """S^t_{a,b} = {x : (t,a) <= (t,x) <= (t,b)} with t snapped to rationals."""

    t: tuple[float, ...]
    a: Site
    b: Site
    max_den: int = 10**6

    @property
    def rational_t(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(v).limit_denominator(self.max_den) for v in self.t)

    @property
    def integer_t(self) -> np.ndarray:
        """T = L * t_rational with L the common denominator; levels are T . x."""
        rt = self.rational_t
        L = lcm(*[f.denominator for f in rt])
        return np.array([int(f * L) for f in rt], dtype=np.int64)

    @property
    def snap_error(self) -> float:
        return float(max(abs(float(f) - v) for f, v in zip(self.rational_t, self.t)))

    def level(self, x: Sequence[int]) -> int:
        return int(np.dot(self.integer_t, np.asarray(x, dtype=np.int64)))

    def contains(self, x: Sequence[int]) -> bool:
        return self.level(self.a) <= self.level(x) <= self.level(self.b)


def choose_axis(t: Sequence[float]) -> int:
    """First coordinate axis maximizing (t, e_i)."""
    return int(np.argmax(np.asarray(t, dtype=float)))


def _unit(d: int, a: int) -> np.ndarray:
    e = np.zeros(d, dtype=np.int64)
    e[a] = 1
    return e


@dataclass
class StripResult:
    connected: bool
    h: bool
    f: bool
    h_eta: bool
    f_eta: bool
    t_breaks: list[int]
    eta_breaks: list[int]
    cluster: list[int]


class StripGraph:
    """Slab graph between k and n inside a box, with precomputed cone tables.

    ``evaluate(state)`` takes open/closed states of the slab edges (in the order
    of ``edge_ids``) and returns every strip-based flag.  Local site indices
    refer to ``sites``.
    """

    def __init__(self, box: LatticeBox, t: Sequence[float], k: Sequence[int], n: Sequence[int],
                 xi: DirectionalNorm | None = None, eta: float | None = None, K: float | None = None,
                 axis: int | None = None) -> None:
        self.box = box
        self.t = np.asarray(t, dtype=float)
        self.k = tuple(int(v) for v in k)
        self.n = tuple(int(v) for v in n)
        for x in (self.k, self.n):
            if not box.contains(x):
                raise ValueError(f"site {x} outside box")
        self.slab = SlabSpec(tuple(self.t), self.k, self.n)
        T = self.slab.integer_t
        self.axis = choose_axis(self.t) if axis is None else int(axis)
        self.e = _unit(box.d, self.axis)
        self.le = int(T[self.axis])
        lev_all = box.coords @ T
        self.lo = int(T @ np.array(self.k))
        self.hi = int(T @ np.array(self.n))
        if self.hi <= self.lo:
            raise ValueError("need (t, n - k) > 0")
        gsites = np.flatnonzero((lev_all >= self.lo) & (lev_all <= self.hi))
        self.sites = gsites
        self.local = {int(s): i for i, s in enumerate(gsites)}
        self.levels = [int(v) for v in lev_all[gsites]]
        self.coords = box.coords[gsites].astype(float)
        eu, ev = box.edge_u, box.edge_v
        inside = np.isin(eu, gsites) & np.isin(ev, gsites)
        terminal = (lev_all[eu] == self.hi) & (lev_all[ev] == self.hi)
        self.edge_ids = np.flatnonzero(inside & ~terminal)
        self.adj: list[list[tuple[int, int]]] = [[] for _ in gsites]
        for j, ge in enumerate(self.edge_ids):
            a, b = self.local[int(eu[ge])], self.local[int(ev[ge])]
            self.adj[a].append((b, j))
            self.adj[b].append((a, j))
        self.ik = self.local[box.index(self.k)]
        self.in_ = self.local[box.index(self.n)]
        self.plus_e = [self._loc(x + self.e) for x in box.coords[gsites]]
        self.minus_e = [self._loc(x - self.e) for x in box.coords[gsites]]
        self.kpe = self._loc(np.array(self.k) + self.e)
        self.nme = self._loc(np.array(self.n) - self.e)
        self.short = 0 < self.hi - self.lo < self.le
        self.xi = xi
        self.eta = eta
        self.K = K
        if xi is not None:
            self._prepare_cones(xi, float(eta), float(K))

    def _loc(self, x: np.ndarray) -> int:
        x = tuple(int(v) for v in x)
        if not self.box.contains(x):
            return -1
        return self.local.get(self.box.index(x), -1)

    def _prepare_cones(self, xi: DirectionalNorm, eta: float, K: float) -> None:
        if not 0 < eta < 1 + 1e-15 or K < 0:
            raise ValueError("need eta in (0,1] and K >= 0")
        # levels only depend on the direction of t; the cone tests need t on the polar boundary
        check = in_polar_body(xi, self.t)
        self.t_cone = self.t / check.margin
        self.xt = dual_point(xi, self.t_cone)
        X = self.coords
        diff = X[None, :, :] - X[:, None, :]            # diff[a, b] = x_b - x_a
        flat = diff.reshape(-1, xi.d)
        self.cone0 = in_surcharge_cone(xi, self.t_cone, eta, flat, check=False).reshape(len(X), len(X))
        shifted = flat + K * self.xt
        self.cone_shift = in_surcharge_cone(xi, self.t_cone, eta, shifted, check=False).reshape(len(X), len(X))
        self.cone_2eta = in_surcharge_cone(xi, self.t_cone, min(2 * eta, 1.0), flat,
                                           check=False).reshape(len(X), len(X))
        self.dist = xi(flat).reshape(len(X), len(X))

    # -- per-configuration evaluation -------------------------------------
    def cluster(self, state) -> list[int]:
        seen = {self.ik}
        stack = [self.ik]
        while stack:
            a = stack.pop()
            for b, j in self.adj[a]:
                if state[j] and b not in seen:
                    seen.add(b)
                    stack.append(b)
        return sorted(seen, key=lambda s: (self.levels[s], s))

    def _slab_set(self, C: list[int], lo: int, hi: int) -> set[int]:
        return {s for s in C if lo <= self.levels[s] <= hi}

    def t_breaks(self, C: list[int]) -> list[int]:
        """Local ids of t-break points of C, ordered by increasing (t, .)."""
        lev = self.levels
        lo, hi = self.lo + self.le, self.hi - self.le
        inC = set(C)
        out = []
        for b in C:
            lb = lev[b]
            if not lo <= lb <= hi:
                continue
            bm, bp = self.minus_e[b], self.plus_e[b]
            if bm < 0 or bp < 0 or bm not in inC or bp not in inC:
                continue
            if self._slab_set(C, lb - self.le, lb + self.le) == {bm, b, bp}:
                out.append(b)
        return out

    def eta_breaks(self, C: list[int], tb: list[int]) -> list[int]:
        """(eta,K,t)-break points, from the n end towards k.

        b_1 is the t-break point with maximal (t, .) whose right part
        C ∩ {(t,x) >= (t,b)} lies in b - K x_t + C_eta; ties cannot occur
        between t-break points (they sit on distinct levels), the lexicographic
        rule is kept for completeness.  Subsequent points follow conditions 1-3.
        """
        lev = self.levels
        cands = sorted(tb, key=lambda b: (-lev[b], tuple(self.box.coords[self.sites[b]])))
        b1 = -1
        for b in cands:
            right = [x for x in C if lev[x] >= lev[b]]
            if all(self.cone_shift[b, x] for x in right):
                b1 = b
                break
        if b1 < 0:
            return []
        out = [b1]
        thr = 2 * self.K / self.eta
        cur = b1
        while True:
            nxt = -1
            for b in cands:
                if lev[b] >= lev[cur]:
                    continue
                if not self.cone0[b, cur]:
                    continue
                if self.dist[b, cur] < thr:
                    continue
                piece = [x for x in C if lev[b] <= lev[x] <= lev[cur]]
                if all(self.cone_shift[b, x] for x in piece):
                    nxt = b
                    break
            if nxt < 0:
                return out
            out.append(nxt)
            cur = nxt

    def evaluate(self, state) -> StripResult:
        C = self.cluster(state)
        inC = set(C)
        connected = self.in_ in inC
        if not connected:
            return StripResult(False, False, False, False, False, [], [], C)
        lev = self.levels
        cond_k = (self.kpe >= 0 and self.kpe in inC
                  and self._slab_set(C, self.lo, lev[self.kpe]) == {self.ik, self.kpe})
        cond_n = (self.nme >= 0 and self.nme in inC
                  and self._slab_set(C, lev[self.nme], self.hi) == {self.nme, self.in_})
        h = bool(cond_k and cond_n)
        tb = self.t_breaks(C)
        f = h and not tb
        h_eta = f_eta = False
        eb: list[int] = []
        if self.xi is not None:
            eb = self.eta_breaks(C, tb)
            h_eta = h and bool(self.cone0[self.ik, self.in_]) and all(self.cone_shift[self.ik, x] for x in C)
            f_eta = h_eta and not eb
        return StripResult(True, h, f, h_eta, f_eta, tb, eb, C)

    def state_of(self, config: BondConfiguration) -> np.ndarray:
        if config.box != self.box:
            raise ValueError("configuration lives on a different box")
        return config.open[self.edge_ids]

    def site(self, local: int) -> Site:
        return self.box.site(int(self.sites[local]))


# -- public operations ------------------------------------------------------

@dataclass
class BreakPointReport:
    axis: int
    e: Site
    t_breaks: list[Site]
    eta_breaks: list[Site]
    mu: int | None
    b_mu_minus_1: Site | None
    b_mu: Site | None
    empty: bool
    noint_holds: bool | None
    snap_error: float

    def to_json(self) -> dict:
        def s(x):
            return None if x is None else list(x)
        return {"axis": self.axis, "e": list(self.e), "t_breaks": [list(b) for b in self.t_breaks],
                "eta_breaks": [list(b) for b in self.eta_breaks], "mu": self.mu,
                "b_mu_minus_1": s(self.b_mu_minus_1), "b_mu": s(self.b_mu), "empty": self.empty,
                "noint_holds": self.noint_holds, "snap_error": self.snap_error}


@dataclass
class ConnectionFlags:
    h_t: bool
    f_t: bool
    h_bar: bool
    f_bar: bool
    h_tilde: bool
    f_tilde: bool
    h_eta: bool
    f_eta: bool
    connected_in_strip: bool
    short_separation: bool
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


def _graph(config: BondConfiguration, t, e, k, n, xi=None, eta=None, K=None) -> StripGraph:
    axis = None
    if e is not None:
        e = np.asarray(e)
        axis = int(np.flatnonzero(e)[0])
        if axis != choose_axis(t):
            raise ValueError("e must be the first axis maximizing (t, e_i)")
    return StripGraph(config.box, t, k, n, xi, eta, K, axis)


def t_break_points(config: BondConfiguration, t, e, k, n) -> list[Site]:
    g = _graph(config, t, e, k, n)
    r = g.evaluate(g.state_of(config))
    if not r.connected:
        raise ValueError("k and n are not connected inside the strip")
    return [g.site(b) for b in r.t_breaks]


def eta_K_break_points(config: BondConfiguration, t, e, k, n, eta: float, K: float,
                       xi: DirectionalNorm) -> BreakPointReport:
    if not 0 < eta < 1 or K <= 0:
        raise ValueError("need eta in (0,1) and K > 0")
    g = _graph(config, t, e, k, n, xi, eta, K)
    r = g.evaluate(g.state_of(config))
    if not r.connected:
        raise ValueError("k and n are not connected inside the strip")
    eb = [g.site(b) for b in r.eta_breaks]
    mu = len(eb) if len(eb) >= 2 else None
    noint = None
    bm1 = bm = None
    if mu is not None:
        a, b = r.eta_breaks[mu - 2], r.eta_breaks[mu - 1]
        bm1, bm = g.site(a), g.site(b)
        right = [x for x in r.cluster if g.levels[x] >= g.levels[a]]
        noint = bool(all(g.cone_2eta[b, x] for x in right))
    return BreakPointReport(g.axis, tuple(int(v) for v in g.e), [g.site(b) for b in r.t_breaks],
                            eb, mu, bm1, bm, not eb, noint, g.slab.snap_error)


def classify_connection(config: BondConfiguration, t, e, k, n, eta: float, K: float,
                        xi: DirectionalNorm) -> ConnectionFlags:
    """All eight connection flags for the pair (k, n)."""
    k = tuple(int(v) for v in k)
    n = tuple(int(v) for v in n)
    if k == n:
        raise ValueError("k and n must differ")
    g = _graph(config, t, e, k, n, xi, eta, K)
    r = g.evaluate(g.state_of(config))
    box = config.box
    part = build_clusters(config)
    h_bar = h_tilde = False
    if part.same(k, n):
        members = part.members(k)
        T = g.slab.integer_t
        lev = box.coords[members] @ T
        e_vec = g.e

        def slab_is(lo: int, hi: int, expect: list[np.ndarray]) -> bool:
            got = {int(s) for s, lv in zip(members, lev) if lo <= lv <= hi}
            want = set()
            for x in expect:
                x = tuple(int(v) for v in x)
                if not box.contains(x):
                    return False
                want.add(box.index(x))
            return got == want

        nn = np.array(n)
        kk = np.array(k)
        h_bar = slab_is(g.hi - g.le, g.hi, [nn - e_vec, nn])
        right = box.coords[members][lev >= g.lo].astype(float) - kk + K * g.xt
        cone_ok = bool(np.all(in_surcharge_cone(xi, g.t_cone, eta, right, check=False)))
        h_tilde = cone_ok and slab_is(g.lo - g.le, g.lo, [kk - e_vec, kk])
    no_breaks = not r.eta_breaks
    return ConnectionFlags(h_t=r.h, f_t=r.f, h_bar=h_bar, f_bar=h_bar and no_breaks,
                           h_tilde=h_tilde, f_tilde=h_tilde and no_breaks,
                           h_eta=r.h_eta, f_eta=r.f_eta, connected_in_strip=r.connected,
                           short_separation=g.short)
