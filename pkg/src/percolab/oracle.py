"""Exhaustive enumeration over all 2^m bond configurations of tiny graphs.

Every enumeration produces a histogram ``hist[j]`` = number of hitting
configurations with exactly j open edges, so the probability at any p is the
polynomial sum_j hist[j] p^j (1-p)^(m-j), evaluated exactly in rationals.
Configurations are visited in Gray-code order (one edge flip per step); the
range [0, 2^m) can be split into contiguous chunks whose histograms add.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from decimal import Decimal, getcontext
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import _kernels as K
from .core import Connected, Junction, Predicate, as_event
from .lattice import BondConfiguration, LatticeBox
from .norms import DirectionalNorm, EuclideanNorm
from .renewal import StripGraph

MAX_EDGES = 26


class GuardError(ValueError):
    """Enumeration refused: too many edges."""

    def __init__(self, m: int, limit: int = MAX_EDGES) -> None:
        super().__init__(f"exact enumeration needs m <= {limit} edges, this graph has m = {m}")
        self.m = m
        self.limit = limit


def _guard(m: int) -> None:
    if m > MAX_EDGES:
        raise GuardError(m)


def as_fraction(p) -> Fraction:
    if isinstance(p, Fraction):
        return p
    if isinstance(p, int):
        return Fraction(p)
    return Fraction(str(p))


def poly_value(hist: Sequence[int], p) -> Fraction:
    """sum_j hist[j] p^j (1-p)^(m-j) with m = len(hist) - 1."""
    p = as_fraction(p)
    q = 1 - p
    m = len(hist) - 1
    return sum((int(c) * p**j * q**(m - j) for j, c in enumerate(hist) if c), Fraction(0))


@dataclass(frozen=True)
class ExactResult:
    probability: float
    exact: Fraction
    m: int
    seconds: float
    hist: tuple[int, ...] = field(repr=False, default=())

    @property
    def decimal(self) -> Decimal:
        getcontext().prec = 40
        return Decimal(self.exact.numerator) / Decimal(self.exact.denominator)

    def to_json(self) -> dict:
        return {"probability": self.probability, "exact": str(self.exact), "decimal": str(self.decimal),
                "m": self.m, "seconds": self.seconds}


def _chunks(total: int, chunks: int) -> list[tuple[int, int]]:
    chunks = max(1, min(chunks, total))
    edges = [total * i // chunks for i in range(chunks + 1)]
    return [(edges[i], edges[i + 1]) for i in range(chunks)]


def _python_hist(box: LatticeBox, ev: Predicate, g0: int, g1: int) -> np.ndarray:
    m = box.n_edges
    hist = np.zeros(m + 1, dtype=np.int64)
    g = g0 ^ (g0 >> 1)
    bits = np.array([(g >> b) & 1 for b in range(m)], dtype=bool)
    for i in range(g0, g1):
        if i > g0:
            b = (i & -i).bit_length() - 1
            bits[b] = not bits[b]
        if ev(BondConfiguration(box, bits.copy(), float("nan"))):
            hist[int(bits.sum())] += 1
    return hist


def exact_histogram(box: LatticeBox, event, chunks: int = 1) -> np.ndarray:
    """Hit counts by number of open edges over all 2^m configurations."""
    m = box.n_edges
    _guard(m)
    ev = as_event(event)
    hist = np.zeros(m + 1, dtype=np.int64)
    for g0, g1 in _chunks(1 << m, chunks):
        if isinstance(ev, Connected):
            hist += K.enum_connected(box.n_sites, box.edge_u, box.edge_v, ev.targets(box), g0, g1)
        elif isinstance(ev, Junction):
            hist += K.enum_junction(box.n_sites, box.edge_u, box.edge_v, box.index(ev.k),
                                    ev.targets(box), g0, g1)
        else:
            hist += _python_hist(box, ev, g0, g1)
    return hist


def exact_probability(box: LatticeBox, p, event, chunks: int = 1) -> ExactResult:
    """P_p[event] on the box, exactly (rational in the decimal literal of p)."""
    if not 0 <= float(p) <= 1:
        raise ValueError(f"p={p} outside [0, 1]")
    t0 = time.perf_counter()
    hist = exact_histogram(box, event, chunks)
    val = poly_value(hist, p)
    return ExactResult(float(val), val, box.n_edges, time.perf_counter() - t0, tuple(int(c) for c in hist))


# -- strip connection functions ------------------------------------------------

@dataclass(frozen=True)
class HFValues:
    h: Fraction
    f: Fraction
    h_eta: Fraction
    f_eta: Fraction
    m: int
    short_separation: bool = False

    def as_floats(self) -> tuple[float, float, float, float]:
        return float(self.h), float(self.f), float(self.h_eta), float(self.f_eta)

    def to_json(self) -> dict:
        return {"h_t": str(self.h), "f_t": str(self.f), "h_eta": str(self.h_eta), "f_eta": str(self.f_eta),
                "h_t_float": float(self.h), "f_t_float": float(self.f), "h_eta_float": float(self.h_eta),
                "f_eta_float": float(self.f_eta), "m": self.m, "short_separation": self.short_separation}


_DEFAULT_NORM = EuclideanNorm(2)


@lru_cache(maxsize=4096)
def _strip_hists(box: LatticeBox, t: tuple[float, ...], k: tuple[int, ...], n: tuple[int, ...],
                 xi: DirectionalNorm, eta: float, Kc: float, axis: int | None):
    g = StripGraph(box, t, k, n, xi, eta, Kc, axis)
    m = len(g.edge_ids)
    _guard(m)
    hists = np.zeros((4, m + 1), dtype=np.int64)
    state = [False] * m
    cnt = 0
    for i in range(1 << m):
        if i:
            b = (i & -i).bit_length() - 1
            state[b] = not state[b]
            cnt += 1 if state[b] else -1
        r = g.evaluate(state)
        if r.h:
            hists[0, cnt] += 1
            if r.f:
                hists[1, cnt] += 1
            if r.h_eta:
                hists[2, cnt] += 1
                if r.f_eta:
                    hists[3, cnt] += 1
    return hists, m, g.short


def exact_h_f(strip: LatticeBox, p, t, e, k, n, eta: float = 0.5, K: float = 1.0,
              xi: DirectionalNorm | None = None) -> HFValues:
    """Exact h_t, f_t, h_t^{eta,K}, f_t^{eta,K} for the pair (k, n) on the strip.

    Only the slab edges between k and n influence these events, so only they are
    enumerated.  Conventions: h(k,k) = 1 and f(k,k) = 0 for all four kinds.
    """
    k = tuple(int(v) for v in k)
    n = tuple(int(v) for v in n)
    if k == n:
        return HFValues(Fraction(1), Fraction(0), Fraction(1), Fraction(0), 0)
    xi = xi or _DEFAULT_NORM
    axis = None if e is None else int(np.flatnonzero(np.asarray(e))[0])
    hists, m, short = _strip_hists(strip, tuple(float(v) for v in t), k, n, xi, float(eta), float(K), axis)
    vals = [poly_value(h, p) for h in hists]
    return HFValues(*vals, m=m, short_separation=short)


@dataclass
class RenewalCheck:
    residual: float
    exact_residual: Fraction
    lhs: Fraction
    rhs: Fraction
    terms: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"residual": self.residual, "exact_residual": str(self.exact_residual), "lhs": str(self.lhs),
                "rhs": str(self.rhs), "terms": {str(b): str(v) for b, v in self.terms.items()}}


def verify_renewal(strip: LatticeBox, p, t, e, n, k=None, eta: float = 0.5, K: float = 1.0,
                   xi: DirectionalNorm | None = None, max_width: int = 3) -> RenewalCheck:
    """|h(k,n) - sum_b h(k,b) f(b,n)| for the (eta,K) connection functions.

    b runs over the slab sites between k and n; b = k contributes h(k,k) f(k,n) =
    f(k,n) and b = n contributes h(k,n) f(n,n) = 0.  Sites b on the hyperplane
    of k (b != k) or of n (b != n) give zero terms: the slab they span with k or
    n has no edges.
    """
    if not 1 <= max_width <= 3:
        raise ValueError("strip width limit must be between 1 and 3")
    k = tuple(strip.lower) if k is None else tuple(int(v) for v in k)
    n = tuple(int(v) for v in n)
    axis = int(np.argmax(np.asarray(t, dtype=float))) if e is None else int(np.flatnonzero(np.asarray(e))[0])
    widths = [s for a, s in enumerate(strip.shape) if a != axis]
    if max(widths) > max_width:
        raise ValueError(f"strip transverse width {max(widths)} exceeds the limit {max_width}")
    g = StripGraph(strip, t, k, n)
    lhs = exact_h_f(strip, p, t, e, k, n, eta, K, xi).h_eta
    rhs = Fraction(0)
    terms = {}
    for loc, s in enumerate(g.sites):
        b = strip.site(int(s))
        lb = g.levels[loc]
        if b == k:
            term = exact_h_f(strip, p, t, e, k, n, eta, K, xi).f_eta
        elif b == n or lb in (g.lo, g.hi):
            continue
        else:
            term = (exact_h_f(strip, p, t, e, k, b, eta, K, xi).h_eta
                    * exact_h_f(strip, p, t, e, b, n, eta, K, xi).f_eta)
        if term:
            terms[b] = term
        rhs += term
    res = abs(lhs - rhs)
    return RenewalCheck(float(res), res, lhs, rhs, terms)
