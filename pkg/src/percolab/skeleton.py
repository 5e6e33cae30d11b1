"""Coarse-graining of open paths and three-armed clusters at scale M."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq, minimize, minimize_scalar

from .core import PathSet, build_clusters
from .lattice import BondConfiguration
from .norms import DirectionalNorm, dual_point, in_surcharge_cone, polar_point, surcharge

Site = tuple[int, ...]


@dataclass
class Skeleton:
    """Skeleton points x_1..x_m (x_1 = first path site) and their classification.

    Indices below are 1-based, matching x_1..x_m.
    """

    points: list[Site]
    path_index: list[int]
    M: float
    path_id: int = 0
    good: list[int] = field(default_factory=list)
    backtracking: list[int] = field(default_factory=list)
    bad_intervals: list[tuple[int, int]] = field(default_factory=list)
    bad: list[int] = field(default_factory=list)
    surcharge_ratio: float | None = None
    classified: bool = False

    def __len__(self) -> int:
        return len(self.points)

    def to_json(self) -> dict:
        return {"points": [list(p) for p in self.points], "path_index": self.path_index, "M": self.M,
                "path_id": self.path_id, "good": self.good, "backtracking": self.backtracking,
                "bad_intervals": [list(iv) for iv in self.bad_intervals], "bad": self.bad,
                "surcharge_ratio": self.surcharge_ratio}


def m_skeleton(path: Sequence[Sequence[int]], M: float, xi: DirectionalNorm, path_id: int = 0) -> Skeleton:
    """Greedy skeleton: keep the first site, then each first site at xi-distance >= M
    from the last kept one; the last site is always kept."""
    pts = [tuple(int(v) for v in x) for x in path]
    if not pts:
        raise ValueError("empty path")
    if len(set(pts)) != len(pts):
        raise ValueError("path is not self-avoiding")
    arr = np.array(pts, dtype=float)
    keep = [0]
    for i in range(1, len(pts)):
        if xi(arr[i] - arr[keep[-1]]) >= M:
            keep.append(i)
    if keep[-1] != len(pts) - 1:
        keep.append(len(pts) - 1)
    return Skeleton([pts[i] for i in keep], keep, float(M), path_id)


def skeleton_classify(skel: Skeleton, t, eta: float, xi: DirectionalNorm) -> Skeleton:
    """Good points, backtracking increments and bad intervals (l_i, r_i).

    x_i (i >= 2) is good when the skeleton points inside x_i + C_eta(t) are
    exactly x_1..x_i.  l_1 is the largest non-good index, r_1 the largest
    j < l_1 with x_j - x_{l_1} outside the cone, l_{i+1} the largest non-good
    index <= r_i, and so on until r_i is undefined.  The interval of each pair
    is the index range {r_i, ..., l_i - 1}.
    """
    t = np.asarray(t, dtype=float)
    X = np.array(skel.points, dtype=float)
    m = len(X)

    def cone(v: np.ndarray) -> np.ndarray:
        return np.asarray(in_surcharge_cone(xi, t, eta, v, check=False))

    good = []
    for i in range(2, m + 1):
        inside = cone(X - X[i - 1])
        if inside[:i].all() and not inside[i:].any():
            good.append(i)
    gset = set(good)
    back = [l for l in range(2, m + 1) if not cone(X[l - 2] - X[l - 1])]

    intervals: list[tuple[int, int]] = []
    upper = m
    while True:
        cand = [j for j in range(1, upper + 1) if j not in gset]
        if not cand:
            break
        l = max(cand)
        outs = [j for j in range(1, l) if not cone(X[j - 1] - X[l - 1])]
        if not outs:
            break
        r = max(outs)
        intervals.append((l, r))
        upper = r
    bad = sorted({j for l, r in intervals for j in range(r, l)})
    ratio = None
    if bad:
        tot = 0.0
        for l, r in intervals:
            for j in range(r + 1, l + 1):
                tot += float(surcharge(xi, t, X[j - 2] - X[j - 1], check=False))
        ratio = tot / (eta * skel.M * len(bad))
    skel.good, skel.backtracking, skel.bad_intervals, skel.bad = good, back, intervals, bad
    skel.surcharge_ratio = ratio
    skel.classified = True
    return skel


# -- cone distance ----------------------------------------------------------

def _cone_rays_2d(xi: DirectionalNorm, t: np.ndarray, eta: float, xt: np.ndarray) -> list[np.ndarray]:
    th0 = np.arctan2(xt[1], xt[0])

    def g(th: float) -> float:
        u = np.array([np.cos(th), np.sin(th)])
        return float(u @ t - (1 - eta) * xi(u))

    rays = []
    for sgn in (1, -1):
        lo, step = 0.0, 1e-3
        hi = step
        while g(th0 + sgn * hi) > 0 and hi < np.pi:
            lo, hi = hi, min(hi * 2, np.pi)
        if g(th0 + sgn * hi) > 0:
            continue          # cone covers everything on this side
        root = brentq(lambda s: g(th0 + sgn * s), lo, hi, xtol=1e-14)
        rays.append(np.array([np.cos(th0 + sgn * root), np.sin(th0 + sgn * root)]))
    return rays


def cone_distance(xi: DirectionalNorm, t, eta: float, w) -> float:
    """min over c in C_eta(t) of xi(w - c)."""
    t = np.asarray(t, dtype=float)
    w = np.asarray(w, dtype=float)
    if bool(in_surcharge_cone(xi, t, eta, w, check=False)):
        return 0.0
    best = float(xi(w))          # c = 0
    if xi.d == 2:
        for r in _cone_rays_2d(xi, t, eta, dual_point(xi, t)):
            scale = float(np.linalg.norm(w)) + 1.0
            res = minimize_scalar(lambda s: xi(w - s * r), bounds=(0, 4 * scale), method="bounded",
                                  options={"xatol": 1e-10})
            best = min(best, float(res.fun))
        return best
    cons = {"type": "ineq", "fun": lambda c: float(c @ t - (1 - eta) * xi(c))}
    res = minimize(lambda c: xi(w - c), dual_point(xi, t) * max(float(w @ t), 0.0), method="SLSQP",
                   constraints=[cons])
    if res.success and cons["fun"](res.x) >= -1e-9:
        best = min(best, float(res.fun))
    return best


# -- tree skeleton ----------------------------------------------------------

@dataclass
class TreeSkeleton:
    k: Site
    targets: tuple[Site, Site, Site]
    M: float
    trunks: list[Skeleton]
    leaves: list[list[Site]]
    closure_leaves: list[list[Site]]
    bad_leaves: list[list[Site]]
    bad_points: list[list[Site]]
    t: list[np.ndarray]
    cluster_size: int
    compatible: bool
    uncovered: int
    eta: float
    R: float

    @property
    def gamma(self) -> set[Site]:
        pts = {p for tr in self.trunks for p in tr.points}
        for i in range(3):
            pts.update(self.leaves[i])
            pts.update(self.closure_leaves[i])
        return pts

    def to_json(self) -> dict:
        return {"k": list(self.k), "targets": [list(x) for x in self.targets], "M": self.M,
                "trunks": [tr.to_json() for tr in self.trunks],
                "leaves": [[list(y) for y in L] for L in self.leaves],
                "closure_leaves": [[list(y) for y in L] for L in self.closure_leaves],
                "bad_leaves": [[list(y) for y in L] for L in self.bad_leaves],
                "bad_points": [[list(y) for y in L] for L in self.bad_points],
                "t": [np.asarray(v).tolist() for v in self.t], "cluster_size": self.cluster_size,
                "compatible": self.compatible, "uncovered": self.uncovered, "eta": self.eta, "R": self.R,
                "cells": {"radius": self.M, "centres": sorted(list(p) for p in self.gamma)}}


class _Cover:
    """Lattice sites (of the box) within xi-distance M of the admitted centres."""

    def __init__(self, coords: np.ndarray, xi: DirectionalNorm, M: float) -> None:
        self.coords = coords.astype(float)
        self.xi = xi
        self.M = M
        self.mask = np.zeros(len(coords), dtype=bool)

    def ball(self, y) -> np.ndarray:
        return self.xi(self.coords - np.asarray(y, dtype=float)) <= self.M

    def add(self, y) -> None:
        self.mask |= self.ball(y)


def tree_skeleton(config: BondConfiguration, k, n1, n2, n3, M: float, xi: DirectionalNorm,
                  witness: PathSet | None, eta: float = 0.5, R: float = 2.0) -> TreeSkeleton:
    """M-tree skeleton of the common cluster of k, n1, n2, n3.

    Trunks are the M-skeletons of the witness paths, oriented n_i -> k.  Leaves
    follow the screening loop: for each trunk, in lexicographic order of its
    current points y_j, the outer endpoints y of edges crossing the sphere
    xi(. - y_j) = M are screened; y is admitted when it is a cluster site outside
    the other trunks' cells from which an open path, leaving y into the
    uncovered region, reaches xi-distance M from y.  Cluster sites still
    uncovered afterwards are admitted by a closure pass and reported
    separately, so that compatibility always holds.
    """
    if witness is None:
        raise ValueError("tree skeleton needs a three-path witness")
    box = config.box
    k = tuple(int(v) for v in k)
    targets = tuple(tuple(int(v) for v in x) for x in (n1, n2, n3))
    by_target = {p[-1]: p for p in witness.paths}
    trunks = []
    for i, n in enumerate(targets):
        path = by_target.get(n)
        if path is None or path[0] != k:
            raise ValueError("witness does not match k and the targets")
        trunks.append(m_skeleton(list(reversed(path)), M, xi, path_id=i))
    t_dirs = [polar_point(xi, np.subtract(n, k)) for n in targets]
    for tr, ti in zip(trunks, t_dirs):
        skeleton_classify(tr, ti, eta, xi)

    part = build_clusters(config)
    members = part.members(k)
    in_cluster = np.zeros(box.n_sites, dtype=bool)
    in_cluster[members] = True
    coords = box.coords
    cover = _Cover(coords, xi, M)
    trunk_cover = [_Cover(coords, xi, M) for _ in range(3)]
    for i, tr in enumerate(trunks):
        for y in tr.points:
            cover.add(y)
            trunk_cover[i].add(y)
    leaves: list[list[Site]] = [[], [], []]
    nbrs = [box.neighbours(s) for s in range(box.n_sites)]
    is_open = config.open

    def escapes(y_idx: int) -> bool:
        # open self-avoiding path from y, after its first site avoiding the
        # covered region, that reaches xi-distance M from y
        y = coords[y_idx].astype(float)
        seen = {y_idx}
        dq = deque([y_idx])
        while dq:
            s = dq.popleft()
            if xi(coords[s] - y) >= M:
                return True
            for nb, e in nbrs[s]:
                if is_open[e] and nb not in seen and not cover.mask[nb]:
                    seen.add(nb)
                    dq.append(nb)
        return False

    for i in range(3):
        # step 1: every cluster site outside the other trunks' cells already
        # within xi-distance M of a point of this trunk's skeleton?
        others = cover.mask & ~trunk_cover[i].mask
        rest = members[~others[members]]
        centres = np.array(trunks[i].points, dtype=float)
        if all(float(np.min(xi(centres - coords[s]))) <= M for s in rest):
            continue
        while True:
            gamma_i = trunks[i].points + leaves[i]
            gamma_set = {p for tr in trunks for p in tr.points} | {y for L in leaves for y in L}
            head = [targets[i]] + sorted(p for p in gamma_i if p != targets[i])
            others = cover.mask & ~trunk_cover[i].mask
            admitted = False
            for yj in head:
                dj = xi(coords - np.asarray(yj, dtype=float))
                cands = [s for s in members
                         if dj[s] >= M and not others[s] and box.site(int(s)) not in gamma_set
                         and any(dj[nb] < M for nb, _ in nbrs[s])]
                for s in sorted(cands, key=lambda s: tuple(coords[s])):
                    if escapes(s):
                        y = box.site(int(s))
                        leaves[i].append(y)
                        cover.add(y)
                        trunk_cover[i].add(y)
                        admitted = True
                        break
                if admitted:
                    break
            if not admitted:
                break

    closure: list[list[Site]] = [[], [], []]
    while True:
        unc = members[~cover.mask[members]]
        if unc.size == 0:
            break
        s = min(unc, key=lambda s: tuple(coords[s]))
        y = box.site(int(s))
        gam = [np.array(trunks[i].points + leaves[i] + closure[i], dtype=float) for i in range(3)]
        i = int(np.argmin([float(np.min(xi(g - coords[s]))) for g in gam]))
        closure[i].append(y)
        cover.add(y)
        trunk_cover[i].add(y)

    gamma = np.array(sorted({p for tr in trunks for p in tr.points}
                            | {y for L in leaves + closure for y in L}), dtype=float)
    dmin = np.array([float(np.min(xi(gamma - coords[s]))) for s in members])
    uncovered = int(np.sum(dmin > M + 1e-12))

    bad_leaves = []
    for i in range(3):
        bad_leaves.append(_bad_leaves(trunks[i], leaves[i] + closure[i], t_dirs[i], eta, R, M, xi))
    bad_points = [[tr.points[j - 1] for j in tr.bad] for tr in trunks]
    return TreeSkeleton(k, targets, float(M), trunks, leaves, closure, bad_leaves, bad_points, t_dirs,
                        int(members.size), uncovered == 0, uncovered, eta, R)


def _bad_leaves(trunk: Skeleton, leaves: list[Site], t: np.ndarray, eta: float, R: float, M: float,
                xi: DirectionalNorm) -> list[Site]:
    """Leaves outside every window (RM U(x_{j_l}) + C_eta(t)) ∩ S_{x_{j_l}, x_{j_{l-1}}}, l >= 1."""
    if not leaves:
        return []
    X = np.array(trunk.points, dtype=float)
    G = set(trunk.good)
    js: list[int] = []
    cand = sorted(G)
    if cand:
        js.append(cand[0])
        while True:
            nxt = [j for j in cand if j >= js[-1] and np.linalg.norm(X[j - 1] - X[js[-1] - 1]) >= R * M]
            if not nxt:
                break
            js.append(nxt[0])
    bad = []
    for y in leaves:
        yv = np.asarray(y, dtype=float)
        inside = False
        for l in range(1, len(js)):
            a, b = X[js[l] - 1], X[js[l - 1] - 1]
            lo, hi = sorted((float(a @ t), float(b @ t)))
            if not lo <= float(yv @ t) <= hi:
                continue
            if cone_distance(xi, t, eta, yv - a) <= R * M:
                inside = True
                break
        if not inside:
            bad.append(y)
    return bad


@dataclass(frozen=True)
class DeltaGoodness:
    good: bool
    thresholds: list[float]
    bad_leaf_counts: list[int]
    bad_point_counts: list[int]


def delta_good(tree: TreeSkeleton, delta: float, anchors: Sequence[Sequence[int]] | None = None) -> DeltaGoodness:
    """Both counts of every trunk at most (delta / M) |n_i - k| (inclusive)."""
    if anchors is None:
        k, targets = tree.k, tree.targets
    else:
        k, *targets = [tuple(a) for a in anchors]
    thr = [delta / tree.M * float(np.linalg.norm(np.subtract(n, k))) for n in targets]
    nl = [len(b) for b in tree.bad_leaves]
    nb = [len(tr.bad) for tr in tree.trunks]
    ok = all(a <= th and b <= th for a, b, th in zip(nl, nb, thr))
    return DeltaGoodness(ok, thr, nl, nb)
