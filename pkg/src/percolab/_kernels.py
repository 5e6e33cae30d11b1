"""numba kernels shared by the sampling, oracle and experiment layers."""
from __future__ import annotations

import numpy as np
from numba import njit

from .rng import edge_open_nb, trial_key_nb


@njit(cache=True, nogil=True)
def _find(parent, a):
    root = a
    while parent[root] != root:
        root = parent[root]
    while parent[a] != root:
        nxt = parent[a]
        parent[a] = root
        a = nxt
    return root


@njit(cache=True, nogil=True)
def uf_labels(n, eu, ev, state):
    """Cluster id of each site; the id is the smallest site index in the cluster."""
    parent = np.arange(n)
    for e in range(eu.shape[0]):
        if state[e]:
            ra = _find(parent, eu[e])
            rb = _find(parent, ev[e])
            if ra != rb:
                if ra < rb:
                    parent[rb] = ra
                else:
                    parent[ra] = rb
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        labels[i] = _find(parent, i)
    return labels


@njit(cache=True, nogil=True)
def sample_states(key, p, m):
    out = np.empty(m, dtype=np.bool_)
    for e in range(m):
        out[e] = edge_open_nb(key, e, p)
    return out


@njit(cache=True, nogil=True)
def _add_arc(head, nxt, to, cap, na, a, b, c):
    to[na] = b
    cap[na] = c
    nxt[na] = head[a]
    head[a] = na
    to[na + 1] = a
    cap[na + 1] = 0
    nxt[na + 1] = head[b]
    head[b] = na + 1
    return na + 2


@njit(cache=True, nogil=True)
def flow_local(c, lu, lv, k, t0, t1, t2, paths, lengths):
    """Unit-vertex-capacity max flow from ``k`` to the three targets.

    Vertex v is split into v_in=2v, v_out=2v+1; the source is k_out and the
    super-sink is node 2c.  Returns the flow value (<= 3).  When it is 3 and
    ``paths`` has rows, the three vertex-disjoint paths are written into
    ``paths[i, :lengths[i]]`` (k first, target i last).
    """
    nnodes = 2 * c + 1
    sink = 2 * c
    narcs = 2 * ((c - 1) + 2 * lu.shape[0] + 3)
    head = -np.ones(nnodes, dtype=np.int64)
    nxt = np.empty(narcs, dtype=np.int64)
    to = np.empty(narcs, dtype=np.int64)
    cap = np.empty(narcs, dtype=np.int64)
    na = 0
    for v in range(c):
        if v != k:
            na = _add_arc(head, nxt, to, cap, na, 2 * v, 2 * v + 1, 1)
    for e in range(lu.shape[0]):
        u = lu[e]
        v = lv[e]
        na = _add_arc(head, nxt, to, cap, na, 2 * u + 1, 2 * v, 1)
        na = _add_arc(head, nxt, to, cap, na, 2 * v + 1, 2 * u, 1)
    na = _add_arc(head, nxt, to, cap, na, 2 * t0 + 1, sink, 1)
    na = _add_arc(head, nxt, to, cap, na, 2 * t1 + 1, sink, 1)
    na = _add_arc(head, nxt, to, cap, na, 2 * t2 + 1, sink, 1)
    orig = cap.copy()

    src = 2 * k + 1
    pred = np.empty(nnodes, dtype=np.int64)
    queue = np.empty(nnodes, dtype=np.int64)
    flow = 0
    for _ in range(3):
        for i in range(nnodes):
            pred[i] = -2
        pred[src] = -1
        qh = 0
        qt = 0
        queue[qt] = src
        qt += 1
        while qh < qt and pred[sink] == -2:
            x = queue[qh]
            qh += 1
            a = head[x]
            while a != -1:
                y = to[a]
                if cap[a] > 0 and pred[y] == -2:
                    pred[y] = a
                    queue[qt] = y
                    qt += 1
                a = nxt[a]
        if pred[sink] == -2:
            break
        y = sink
        while y != src:
            a = pred[y]
            cap[a] -= 1
            cap[a ^ 1] += 1
            y = to[a ^ 1]
        flow += 1

    if flow == 3 and paths.shape[0] == 3:
        used = np.zeros(narcs, dtype=np.bool_)
        for i in range(3):
            x = src
            ln = 1
            paths[i, 0] = k
            while x != sink:
                a = head[x]
                moved = False
                while a != -1:
                    if (a & 1) == 0 and orig[a] - cap[a] > 0 and not used[a]:
                        used[a] = True
                        y = to[a]
                        if y != sink and (y & 1) == 0:
                            paths[i, ln] = y // 2
                            ln += 1
                        x = y
                        moved = True
                        break
                    a = nxt[a]
                if not moved:
                    break
            lengths[i] = ln
    return flow


@njit(cache=True, nogil=True)
def junctions_local(c, lu, lv, t0, t1, t2, out):
    """Write every local vertex k with flow 3 into ``out``; return the count."""
    deg = np.zeros(c, dtype=np.int64)
    for e in range(lu.shape[0]):
        deg[lu[e]] += 1
        deg[lv[e]] += 1
    dummy = np.empty((0, 0), dtype=np.int64)
    dl = np.empty(0, dtype=np.int64)
    cnt = 0
    for k in range(c):
        if k == t0 or k == t1 or k == t2 or deg[k] < 3:
            continue
        if flow_local(c, lu, lv, k, t0, t1, t2, dummy, dl) == 3:
            out[cnt] = k
            cnt += 1
    return cnt


@njit(cache=True, nogil=True)
def explore(key, p, shape, strides, edge_fwd, start, mark, stamp, posn, sites, eu_out, ev_out):
    """Grow the open cluster of ``start`` evaluating edges lazily.

    ``mark[s] == stamp`` flags cluster membership afterwards and ``posn[s]`` is
    the position of ``s`` in ``sites`` (discovery order).  Open edges inside
    the cluster are written, as pairs of positions, to ``eu_out``/``ev_out``.
    Returns (n_sites, n_edges).
    """
    d = shape.shape[0]
    mark[start] = stamp
    posn[start] = 0
    sites[0] = start
    ns = 1
    ne = 0
    head = 0
    while head < ns:
        s = sites[head]
        for a in range(d):
            ca = (s // strides[a]) % shape[a]
            for side in range(2):
                if side == 0:
                    if ca == shape[a] - 1:
                        continue
                    j = s + strides[a]
                    e = edge_fwd[s, a]
                else:
                    if ca == 0:
                        continue
                    j = s - strides[a]
                    e = edge_fwd[j, a]
                if not edge_open_nb(key, e, p):
                    continue
                if mark[j] != stamp:
                    mark[j] = stamp
                    posn[j] = ns
                    sites[ns] = j
                    ns += 1
                    eu_out[ne] = head
                    ev_out[ne] = ns - 1
                    ne += 1
                elif posn[j] > head:
                    # each edge is recorded from whichever endpoint is popped first
                    eu_out[ne] = head
                    ev_out[ne] = posn[j]
                    ne += 1
        head += 1
    return ns, ne


@njit(cache=True, nogil=True)
def _uf_connected(parent, n, eu, ev, state, targets):
    for i in range(n):
        parent[i] = i
    for e in range(eu.shape[0]):
        if state[e]:
            ra = _find(parent, eu[e])
            rb = _find(parent, ev[e])
            if ra != rb:
                parent[rb] = ra
    r0 = _find(parent, targets[0])
    for i in range(1, targets.shape[0]):
        if _find(parent, targets[i]) != r0:
            return False
    return True


@njit(cache=True, nogil=True)
def _gray_start(g0, m):
    state = np.zeros(m, dtype=np.bool_)
    g = g0 ^ (g0 >> 1)
    cnt = 0
    for b in range(m):
        if (g >> b) & 1:
            state[b] = True
            cnt += 1
    return state, cnt


@njit(cache=True, nogil=True)
def _trailing_zeros(x):
    b = 0
    while (x & 1) == 0:
        x >>= 1
        b += 1
    return b


@njit(cache=True, nogil=True)
def enum_connected(n, eu, ev, targets, g0, g1):
    """Histogram by open-edge count of Gray-code configurations g0 <= g < g1
    in which all ``targets`` share a cluster."""
    m = eu.shape[0]
    hist = np.zeros(m + 1, dtype=np.int64)
    parent = np.empty(n, dtype=np.int64)
    state, cnt = _gray_start(g0, m)
    for g in range(g0, g1):
        if g > g0:
            b = _trailing_zeros(g)
            state[b] = not state[b]
            cnt += 1 if state[b] else -1
        if _uf_connected(parent, n, eu, ev, state, targets):
            hist[cnt] += 1
    return hist


@njit(cache=True, nogil=True)
def _open_subgraph(eu, ev, state):
    ne = 0
    for e in range(eu.shape[0]):
        if state[e]:
            ne += 1
    lu = np.empty(ne, dtype=np.int64)
    lv = np.empty(ne, dtype=np.int64)
    j = 0
    for e in range(eu.shape[0]):
        if state[e]:
            lu[j] = eu[e]
            lv[j] = ev[e]
            j += 1
    return lu, lv


@njit(cache=True, nogil=True)
def _junction_holds(parent, n, eu, ev, state, k, targets):
    tk = np.empty(4, dtype=np.int64)
    tk[0] = k
    tk[1:] = targets
    if not _uf_connected(parent, n, eu, ev, state, tk):
        return False
    lu, lv = _open_subgraph(eu, ev, state)
    dummy = np.empty((0, 0), dtype=np.int64)
    dl = np.empty(0, dtype=np.int64)
    return flow_local(n, lu, lv, k, targets[0], targets[1], targets[2], dummy, dl) == 3


@njit(cache=True, nogil=True)
def enum_junction(n, eu, ev, k, targets, g0, g1):
    """Like :func:`enum_connected` for the three-disjoint-paths event at ``k``."""
    m = eu.shape[0]
    hist = np.zeros(m + 1, dtype=np.int64)
    parent = np.empty(n, dtype=np.int64)
    state, cnt = _gray_start(g0, m)
    for g in range(g0, g1):
        if g > g0:
            b = _trailing_zeros(g)
            state[b] = not state[b]
            cnt += 1 if state[b] else -1
        if _junction_holds(parent, n, eu, ev, state, k, targets):
            hist[cnt] += 1
    return hist


@njit(cache=True, nogil=True)
def mc_connected(seed, t0, t1, p, n, eu, ev, targets):
    """Hits of 'targets share a cluster' over trials t0 <= t < t1."""
    m = eu.shape[0]
    parent = np.empty(n, dtype=np.int64)
    state = np.empty(m, dtype=np.bool_)
    hits = 0
    for t in range(t0, t1):
        key = trial_key_nb(seed, t)
        for e in range(m):
            state[e] = edge_open_nb(key, e, p)
        if _uf_connected(parent, n, eu, ev, state, targets):
            hits += 1
    return hits


@njit(cache=True, nogil=True)
def mc_junction(seed, t0, t1, p, n, eu, ev, k, targets):
    m = eu.shape[0]
    parent = np.empty(n, dtype=np.int64)
    state = np.empty(m, dtype=np.bool_)
    hits = 0
    for t in range(t0, t1):
        key = trial_key_nb(seed, t)
        for e in range(m):
            state[e] = edge_open_nb(key, e, p)
        if _junction_holds(parent, n, eu, ev, state, k, targets):
            hits += 1
    return hits


@njit(cache=True, nogil=True)
def mc_packed(seed, t0, t1, p, m):
    """Each trial's configuration packed into an integer (bit e = edge e); m <= 62."""
    out = np.empty(t1 - t0, dtype=np.int64)
    for t in range(t0, t1):
        key = trial_key_nb(seed, t)
        code = 0
        for e in range(m):
            if edge_open_nb(key, e, p):
                code |= 1 << e
        out[t - t0] = code
    return out


@njit(cache=True, nogil=True)
def mc_reach(seed, t0, t1, p, shape, strides, edge_fwd, start, targets):
    """Per target, the number of trials whose open cluster of ``start`` contains it."""
    n = edge_fwd.shape[0]
    mark = np.full(n, -1, dtype=np.int64)
    posn = np.empty(n, dtype=np.int64)
    sites = np.empty(n, dtype=np.int64)
    eu = np.empty(edge_fwd.size, dtype=np.int64)
    ev = np.empty(edge_fwd.size, dtype=np.int64)
    hits = np.zeros(targets.shape[0], dtype=np.int64)
    for t in range(t0, t1):
        key = trial_key_nb(seed, t)
        explore(key, p, shape, strides, edge_fwd, start, mark, t - t0, posn, sites, eu, ev)
        for i in range(targets.shape[0]):
            if mark[targets[i]] == t - t0:
                hits[i] += 1
    return hits


@njit(cache=True, nogil=True)
def mc_three_point(seed, t0, t1, p, shape, strides, edge_fwd, coords, a, b, c, centre):
    """Trials where a, b, c share an open cluster, with their junction statistics.

    Returns (n_cond, trial, count, rep, spread2, far2): for each conditioned
    trial its index, the number of junction sites, the smallest junction site
    index (-1 if none), the largest squared distance between two junctions and
    the largest squared distance from a junction to ``centre``.
    """
    n = edge_fwd.shape[0]
    d = coords.shape[1]
    mark = np.full(n, -1, dtype=np.int64)
    posn = np.empty(n, dtype=np.int64)
    sites = np.empty(n, dtype=np.int64)
    eu = np.empty(edge_fwd.size, dtype=np.int64)
    ev = np.empty(edge_fwd.size, dtype=np.int64)
    out = np.empty(n, dtype=np.int64)
    cap = t1 - t0
    trial = np.empty(cap, dtype=np.int64)
    count = np.empty(cap, dtype=np.int64)
    rep = np.empty(cap, dtype=np.int64)
    spread2 = np.empty(cap, dtype=np.float64)
    far2 = np.empty(cap, dtype=np.float64)
    nc = 0
    for t in range(t0, t1):
        key = trial_key_nb(seed, t)
        ns, ne = explore(key, p, shape, strides, edge_fwd, a, mark, t - t0, posn, sites, eu, ev)
        if mark[b] != t - t0 or mark[c] != t - t0:
            continue
        cnt = junctions_local(ns, eu[:ne], ev[:ne], 0, posn[b], posn[c], out)
        best = -1
        s2 = 0.0
        f2 = 0.0
        for i in range(cnt):
            gi = sites[out[i]]
            if best < 0 or gi < best:
                best = gi
            r = 0.0
            for q in range(d):
                r += (coords[gi, q] - centre[q]) ** 2
            if r > f2:
                f2 = r
            for j in range(i + 1, cnt):
                gj = sites[out[j]]
                r = 0.0
                for q in range(d):
                    r += float(coords[gi, q] - coords[gj, q]) ** 2
                if r > s2:
                    s2 = r
        trial[nc] = t
        count[nc] = cnt
        rep[nc] = best
        spread2[nc] = s2
        far2[nc] = f2
        nc += 1
    return nc, trial[:nc], count[:nc], rep[:nc], spread2[:nc], far2[:nc]
