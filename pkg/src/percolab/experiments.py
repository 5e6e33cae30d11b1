"""Monte-Carlo estimators and the verification harnesses built on them.

Every trial is keyed by (master_seed, trial index), trials are cut into chunks
of fixed size and chunk results are merged by addition or concatenation in
chunk order, so outputs do not depend on the number of workers.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels as K
from .core import Connected, Junction, Predicate, as_event
from .lattice import BondConfiguration, LatticeBox
from .norms import DirectionalNorm, EuclideanNorm, TabulatedNorm, fit_symmetric_2d, tabulate_symmetric_2d
from .oracle import exact_h_f, exact_probability
from .renewal import StripGraph
from .triple import TripleConfig, minimize_phi

CHUNK = 1 << 16
WORKERS_ENV = "PERCOLAB_WORKERS"
P_MAX_2D = 0.45


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        n = int(env)
        if n < 1:
            raise ValueError(f"{WORKERS_ENV} must be a positive integer")
        return n
    return os.cpu_count() or 1


def _chunks(trials: int, chunk: int = CHUNK) -> list[tuple[int, int]]:
    return [(t, min(t + chunk, trials)) for t in range(0, trials, chunk)]


def _farm(fn: Callable[[int, int], object], trials: int, workers: int | None) -> list:
    """fn(t0, t1) over all chunks, results in chunk order."""
    chunks = _chunks(trials)
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(chunks) == 1:
        return [fn(a, b) for a, b in chunks]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda c: fn(*c), chunks))


def _seed(master_seed: int) -> np.uint64:
    s = int(master_seed)
    if not 0 <= s < 2**64:
        raise ValueError("master seed must lie in [0, 2^64)")
    return np.uint64(s)


def _check_p(p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p={p} outside [0, 1]")
    return p


def _check_trials(trials: int) -> int:
    if int(trials) < 1:
        raise ValueError("trials must be at least 1")
    return int(trials)


# -- plain event estimates -----------------------------------------------------

@dataclass(frozen=True)
class Estimate:
    event: str
    hits: int
    trials: int
    master_seed: int
    box: str
    p: float

    @property
    def mean(self) -> float:
        return self.hits / self.trials

    @property
    def stderr(self) -> float:
        m = self.mean
        return math.sqrt(m * (1 - m) / self.trials)

    def to_json(self) -> dict:
        return {"event": self.event, "hits": self.hits, "trials": self.trials, "mean": self.mean,
                "stderr": self.stderr, "master_seed": self.master_seed, "box": self.box, "p": self.p}


def _box_spec(box: LatticeBox) -> str:
    return ":".join(",".join(str(v) for v in c) for c in (box.lower, box.upper))


def strip_event(strip: LatticeBox, t, k, n, kind: str = "h", eta: float = 0.5, K: float = 1.0,
                xi: DirectionalNorm | None = None, e=None) -> Predicate:
    """The strip connection event behind h_t, f_t, h^{eta,K} or f^{eta,K} as a predicate."""
    if kind not in ("h", "f", "h_eta", "f_eta"):
        raise ValueError(f"unknown strip event {kind!r}")
    axis = None if e is None else int(np.flatnonzero(np.asarray(e))[0])
    g = StripGraph(strip, t, tuple(k), tuple(n), xi or EuclideanNorm(strip.d), eta, K, axis)

    def fn(config: BondConfiguration) -> bool:
        r = g.evaluate(g.state_of(config))
        if kind in ("h", "f"):
            return r.h and (kind == "h" or r.f)
        return r.h and r.h_eta and (kind == "h_eta" or r.f_eta)

    return Predicate(fn, f"{kind}_t")


PACKED_MAX_EDGES = 24


def _predicate_hits(ev: Predicate, p: float, box: LatticeBox, trials: int, seed: int,
                    workers: int | None) -> int:
    m = box.n_edges
    if m <= PACKED_MAX_EDGES:
        # pack each trial into an integer and evaluate each distinct configuration once
        codes = np.concatenate(_farm(lambda a, b: K.mc_packed(seed, a, b, p, m), trials, workers))
        uniq, counts = np.unique(codes, return_counts=True)
        shifts = np.arange(m, dtype=np.int64)
        hits = 0
        for code, c in zip(uniq, counts):
            bits = ((int(code) >> shifts) & 1).astype(bool)
            if ev(BondConfiguration(box, bits, p)):
                hits += int(c)
        return hits
    from .core import sample_configuration
    return sum(1 for t in range(trials) if ev(sample_configuration(p, box, int(seed), t)))


def mc_estimate(event, p: float, box: LatticeBox, trials: int, master_seed: int,
                workers: int | None = None) -> Estimate:
    """Frequency estimate of P_p[event] from trials 0..trials-1 of master_seed."""
    p = _check_p(p)
    trials = _check_trials(trials)
    ev = as_event(event)
    seed = _seed(master_seed)
    if isinstance(ev, Connected):
        tg = ev.targets(box)
        hits = sum(_farm(lambda a, b: K.mc_connected(seed, a, b, p, box.n_sites, box.edge_u, box.edge_v, tg),
                         trials, workers))
    elif isinstance(ev, Junction):
        tg = ev.targets(box)
        k = box.index(ev.k)
        if k in set(tg.tolist()):
            raise ValueError("junction site coincides with a target")
        hits = sum(_farm(lambda a, b: K.mc_junction(seed, a, b, p, box.n_sites, box.edge_u, box.edge_v, k, tg),
                         trials, workers))
    else:
        hits = _predicate_hits(ev, p, box, trials, seed, workers)
    return Estimate(ev.name, int(hits), trials, int(master_seed), _box_spec(box), p)


# -- inverse correlation length ------------------------------------------------

def _subcritical_guard(p: float, d: int, p_max: float | None) -> None:
    if p <= 0:
        raise ValueError("p must be positive: at p=0 every connection has zero hits")
    limit = p_max if p_max is not None else (P_MAX_2D if d == 2 else None)
    if limit is None:
        raise ValueError(f"no default subcritical bound for d={d}; pass an explicit p_max")
    if p > limit:
        raise ValueError(f"p={p} above the subcritical bound {limit}")


def _reach_hits(p: float, targets: list[tuple[int, ...]], origin: tuple[int, ...], margin: int,
                trials: int, seed: np.uint64, workers: int | None) -> tuple[np.ndarray, LatticeBox]:
    box = LatticeBox.around([origin] + targets, margin)
    shape = np.array(box.shape, dtype=np.int64)
    strides = np.asarray(box.strides, dtype=np.int64)
    tg = np.array([box.index(x) for x in targets], dtype=np.int64)
    start = box.index(origin)
    fwd = box.edge_fwd
    parts = _farm(lambda a, b: K.mc_reach(seed, a, b, p, shape, strides, fwd, start, tg), trials, workers)
    return np.sum(parts, axis=0), box


def _wls(x: np.ndarray, y: np.ndarray, se: np.ndarray) -> tuple[float, float, float, float]:
    """Weighted line fit; returns slope, intercept, slope stderr, chi^2 per dof."""
    w = 1.0 / se**2
    A = np.stack([x, np.ones_like(x)], axis=1)
    F = A.T @ (A * w[:, None])
    coef = np.linalg.solve(F, A.T @ (w * y))
    cov = np.linalg.inv(F)
    res = y - A @ coef
    dof = max(len(x) - 2, 1)
    return float(coef[0]), float(coef[1]), float(math.sqrt(cov[0, 0])), float(np.sum(w * res**2) / dof)


@dataclass
class XiEstimate:
    direction: list[float]
    p: float
    Ns: list[int]
    lengths: list[float]
    hits: list[int]
    trials: int
    neglog: list[float]
    neglog_se: list[float]
    slope: float
    intercept: float
    slope_stderr: float
    chi2_dof: float
    largest_usable_N: int | None
    upper_bound: float
    master_seed: int
    box: str

    @property
    def positive(self) -> bool:
        return self.slope > 0

    @property
    def upper_ok(self) -> bool:
        return self.slope <= self.upper_bound + 3 * self.slope_stderr

    @property
    def ok(self) -> bool:
        return self.positive and self.upper_ok

    def tabulation_row(self) -> tuple[float, ...]:
        """(u_1, ..., u_d, xi-hat) with u the unit direction."""
        return (*self.direction, self.slope)

    def rows(self) -> list[dict]:
        return [{"N": n, "length": r, "hits": h, "trials": self.trials, "estimate": h / self.trials,
                 "stderr": math.sqrt((h / self.trials) * (1 - h / self.trials) / self.trials),
                 "neglog": y, "neglog_se": s}
                for n, r, h, y, s in zip(self.Ns, self.lengths, self.hits, self.neglog, self.neglog_se)]

    def to_json(self) -> dict:
        out = {k: v for k, v in self.__dict__.items()}
        out.update(positive=self.positive, upper_ok=self.upper_ok)
        return out


def _direction(direction, d: int | None = None) -> np.ndarray:
    u = np.asarray(direction, dtype=float)
    if u.ndim != 1 or not np.any(u):
        raise ValueError("direction must be a nonzero vector")
    if d is not None and u.size != d:
        raise ValueError(f"direction has dimension {u.size}, expected {d}")
    return u / np.linalg.norm(u)


def _targets(u: np.ndarray, Ns: Sequence[int]) -> list[tuple[int, ...]]:
    return [tuple(int(v) for v in np.rint(n * u)) for n in Ns]


def _check_ladder(Ns: Sequence[int]) -> list[int]:
    Ns = [int(n) for n in Ns]
    if len(Ns) < 2 or any(b <= a for a, b in zip(Ns, Ns[1:])) or Ns[0] < 1:
        raise ValueError("N list must have at least two increasing positive entries")
    return Ns


def estimate_xi(p: float, direction, Ns: Sequence[int], trials: int, master_seed: int, margin: int = 4,
                p_max: float | None = None, workers: int | None = None) -> XiEstimate:
    """Slope of -log P[0 <-> x_N] against |x_N|, x_N = round(N u), by weighted least squares.

    All N share one box (padded by ``margin``) and one trial stream; each trial
    explores the cluster of the origin lazily.  Rows from the first N with zero
    hits onwards are dropped and the largest usable N is reported.
    """
    p = _check_p(p)
    u = _direction(direction)
    _subcritical_guard(p, u.size, p_max)
    Ns = _check_ladder(Ns)
    trials = _check_trials(trials)
    targets = _targets(u, Ns)
    origin = (0,) * u.size
    hits, box = _reach_hits(p, targets, origin, margin, trials, _seed(master_seed), workers)
    lengths = [float(np.linalg.norm(x)) for x in targets]
    usable = len(Ns)
    for i, h in enumerate(hits):
        if h == 0:
            usable = i
            break
    ph = hits[:usable] / trials
    y = -np.log(ph)
    se = np.sqrt((1 - ph) / hits[:usable]) if usable else np.array([])
    se = np.maximum(se, 1e-12)
    if usable >= 2:
        slope, icpt, sse, chi2 = _wls(np.array(lengths[:usable]), y, se)
    else:
        slope = icpt = sse = chi2 = float("nan")
    upper = -math.log(p) * float(np.sum(np.abs(u)))
    return XiEstimate(u.tolist(), p, Ns, lengths, [int(h) for h in hits], trials,
                      y.tolist() + [float("inf")] * (len(Ns) - usable),
                      se.tolist() + [float("inf")] * (len(Ns) - usable),
                      slope, icpt, sse, chi2, Ns[usable - 1] if usable else None, upper,
                      int(master_seed), _box_spec(box))


def fit_xi_norm(estimates: Sequence[XiEstimate], tau: float = 1e-3) -> TabulatedNorm:
    """Square-symmetric 2D norm through the estimated slopes (cos 4k theta series)."""
    ang = np.array([math.atan2(e.direction[1], e.direction[0]) for e in estimates])
    vals = np.array([e.slope for e in estimates])
    coef = fit_symmetric_2d(ang, vals, harmonics=len(estimates) - 1)
    return tabulate_symmetric_2d(coef, tau=tau)


def strip_decay_rate(p: float, width: int, lengths: Sequence[int]) -> tuple[float, list[float]]:
    """Exact axis connection probabilities inside a strip and their log-slope.

    Restricting to a strip can only lower connection probabilities, so the
    slope bounds the axis inverse correlation length from above.
    """
    probs = []
    for L in lengths:
        box = LatticeBox.from_shape((L + 1, width))
        probs.append(exact_probability(box, p, Connected(((0, 0), (L, 0)))).probability)
    x = np.asarray(lengths, dtype=float)
    slope = float(np.polyfit(x, -np.log(probs), 1)[0])
    return slope, probs


# -- Ornstein-Zernike prefactor ------------------------------------------------

def prefactor_sequence(lengths: Sequence[float], probs: Sequence[float], xi: float, d: int) -> np.ndarray:
    r = np.asarray(lengths, dtype=float)
    return np.asarray(probs, dtype=float) * (2 * np.pi * r) ** ((d - 1) / 2) * np.exp(xi * r)


def flatness(values: Sequence[float]) -> float:
    """(max - min) / median over the upper half of the sequence (largest N)."""
    v = np.asarray(values, dtype=float)
    top = v[len(v) // 2:]
    return float((top.max() - top.min()) / np.median(top))


@dataclass
class PrefactorEstimate:
    Ns: list[int]
    values: list[float]
    flatness: float
    xi: float
    dropped: list[int] = field(default_factory=list)

    @property
    def positive(self) -> bool:
        return all(v > 0 for v in self.values)

    def to_json(self) -> dict:
        return dict(self.__dict__)


def oz_prefactor_scan(p: float, direction, Ns: Sequence[int], trials: int, master_seed: int,
                      xi: float | None = None, margin: int = 4, p_max: float | None = None,
                      workers: int | None = None) -> PrefactorEstimate:
    """P-hat (2 pi N)^{(d-1)/2} exp(xi N) over the ladder; xi from the same run if not given."""
    est = estimate_xi(p, direction, Ns, trials, master_seed, margin, p_max, workers)
    xi_hat = est.slope if xi is None else float(xi)
    if not np.isfinite(xi_hat):
        raise ValueError("no inverse correlation length available for the prefactor scan")
    keep = [i for i, h in enumerate(est.hits) if h > 0]
    dropped = [est.Ns[i] for i in range(len(est.Ns)) if i not in keep]
    probs = [est.hits[i] / trials for i in keep]
    vals = prefactor_sequence([est.lengths[i] for i in keep], probs, xi_hat, len(est.direction))
    return PrefactorEstimate([est.Ns[i] for i in keep], vals.tolist(), flatness(vals), xi_hat, dropped)


# -- junction statistics -------------------------------------------------------

def scaled_anchors(x, N: int) -> np.ndarray:
    """Integer parts [N x_i] (componentwise floor)."""
    return np.floor(np.asarray(x, dtype=float) * N + 1e-9).astype(np.int64)


@dataclass
class ThreePointRun:
    box: LatticeBox
    anchors: np.ndarray
    centre: np.ndarray
    trials: int
    trial: np.ndarray
    count: np.ndarray
    rep: np.ndarray
    spread: np.ndarray
    far: np.ndarray

    @property
    def conditioned(self) -> int:
        return int(self.trial.size)


def run_three_point(p: float, anchors: np.ndarray, centre, trials: int, master_seed: int,
                    margin: int, workers: int | None = None) -> ThreePointRun:
    """Trials where the three anchors connect, with junction counts and distances."""
    anchors = np.asarray(anchors, dtype=np.int64)
    box = LatticeBox.around([tuple(a) for a in anchors], margin)
    shape = np.array(box.shape, dtype=np.int64)
    strides = np.asarray(box.strides, dtype=np.int64)
    coords = np.ascontiguousarray(box.coords, dtype=np.int64)
    a, b, c = (box.index(tuple(int(v) for v in x)) for x in anchors)
    ctr = np.asarray(centre, dtype=float)
    fwd = box.edge_fwd
    seed = _seed(master_seed)
    parts = _farm(lambda t0, t1: K.mc_three_point(seed, t0, t1, p, shape, strides, fwd, coords, a, b, c, ctr),
                  trials, workers)
    cat = [np.concatenate([q[i] for q in parts]) for i in range(1, 6)]
    return ThreePointRun(box, anchors, ctr, trials, cat[0], cat[1], cat[2], np.sqrt(cat[3]), np.sqrt(cat[4]))


def synthetic_junction_samples(cov, n: int, seed: int = 0, mean=None) -> np.ndarray:
    """Draws from N(mean, cov); an estimator self-test independent of percolation."""
    cov = np.asarray(cov, dtype=float)
    mean = np.zeros(cov.shape[0]) if mean is None else np.asarray(mean, dtype=float)
    return np.random.default_rng(seed).multivariate_normal(mean, cov, size=n)


@dataclass(frozen=True)
class ShapeStats:
    n: int
    mean: np.ndarray
    mean_stderr: np.ndarray
    covariance: np.ndarray
    cov_rel_error: float
    mardia_z: float

    @property
    def mean_ok(self) -> bool:
        return bool(np.all(np.abs(self.mean) <= 3 * self.mean_stderr))


def shape_statistics(samples: np.ndarray, predicted) -> ShapeStats:
    """Mean, covariance, operator-norm relative covariance error and Mardia kurtosis z."""
    y = np.asarray(samples, dtype=float)
    n, d = y.shape
    if n < d + 1:
        raise ValueError(f"need more than {d} samples, got {n}")
    mean = y.mean(axis=0)
    S = np.cov(y, rowvar=False).reshape(d, d)
    P = np.asarray(predicted, dtype=float)
    rel = float(np.linalg.norm(S - P, 2) / np.linalg.norm(P, 2))
    z = y - mean
    m2 = np.einsum("ij,jk,ik->i", z, np.linalg.pinv(S), z)
    b2 = float(np.mean(m2**2))
    kz = (b2 - d * (d + 2)) / math.sqrt(8 * d * (d + 2) / n)
    return ShapeStats(n, mean, np.sqrt(np.diag(S) / n), S, rel, kz)


@dataclass
class LLTReport:
    N: int
    p: float
    triple: TripleConfig
    anchors: np.ndarray
    centre: np.ndarray
    samples: np.ndarray
    stats: ShapeStats | None
    trials: int
    conditioned: int
    no_junction: int
    multi_junction: int
    spread_fraction: float
    max_spread: float
    beta: float
    master_seed: int

    @property
    def predicted(self) -> np.ndarray:
        return self.triple.covariance

    def to_json(self) -> dict:
        s = self.stats
        return {"N": self.N, "p": self.p, "triple": self.triple.to_json(), "anchors": self.anchors.tolist(),
                "centre": self.centre.tolist(), "n_samples": int(self.samples.shape[0]),
                "mean": None if s is None else s.mean.tolist(),
                "mean_stderr": None if s is None else s.mean_stderr.tolist(),
                "covariance": None if s is None else s.covariance.tolist(),
                "predicted_covariance": self.predicted.tolist(),
                "cov_rel_error": None if s is None else s.cov_rel_error,
                "mardia_z": None if s is None else s.mardia_z,
                "mean_ok": None if s is None else s.mean_ok,
                "trials": self.trials, "conditioned": self.conditioned, "no_junction": self.no_junction,
                "multi_junction": self.multi_junction, "spread_fraction": self.spread_fraction,
                "max_spread": self.max_spread, "beta": self.beta, "master_seed": self.master_seed}


def llt_junction_histogram(xi: DirectionalNorm, p: float, x, N: int, trials: int, master_seed: int,
                           beta: float = 0.3, margin: int | None = None,
                           workers: int | None = None) -> LLTReport:
    """Rescaled junction fluctuations y = (k - N x_0)/sqrt(N), conditioned on E.

    The representative junction of a trial is its lexicographically smallest
    junction site.  Trials where E holds but every branching site is an anchor
    are counted in ``no_junction`` and contribute no sample.
    """
    p = _check_p(p)
    trials = _check_trials(trials)
    if not 0 < beta < 0.5:
        raise ValueError("beta must lie in (0, 1/2)")
    x = np.asarray(x, dtype=float)
    tri = minimize_phi(xi, *x)
    if not tri.admissible:
        raise ValueError(f"inadmissible triple (minimizer at anchor {tri.degenerate_anchor})")
    anchors = scaled_anchors(x, N)
    centre = N * tri.x0
    run = run_three_point(p, anchors, centre, trials, master_seed, N if margin is None else margin, workers)
    if run.conditioned == 0:
        raise ValueError("no trial satisfied the three-point connection event")
    has = run.rep >= 0
    coords = run.box.coords[run.rep[has]].astype(float)
    y = (coords - centre) / math.sqrt(N)
    stats = shape_statistics(y, tri.covariance) if y.shape[0] > y.shape[1] else None
    spread_frac = float(np.mean(run.spread > N**beta))
    return LLTReport(N, p, tri, anchors, centre, y, stats, trials, run.conditioned, int(np.sum(~has)),
                     int(np.sum(run.count >= 2)), spread_frac, float(run.spread.max(initial=0.0)), beta,
                     int(master_seed))


@dataclass
class TailEstimate:
    N: int
    alpha: float
    radius: float
    connected: Estimate
    far: Estimate

    @property
    def ratio(self) -> float:
        return self.far.hits / self.connected.hits if self.connected.hits else float("nan")

    @property
    def ratio_stderr(self) -> float:
        # ratio estimator from one trial stream: binomial within the conditioned trials
        n = self.connected.hits
        r = self.ratio
        return math.sqrt(r * (1 - r) / n) if n else float("nan")

    def to_json(self) -> dict:
        return {"N": self.N, "alpha": self.alpha, "radius": self.radius, "E": self.connected.to_json(),
                "A": self.far.to_json(), "ratio": self.ratio, "ratio_stderr": self.ratio_stderr}


def far_junction_tail(p: float, x, alphas: float | Sequence[float], N: int, trials: int, master_seed: int,
                      xi: DirectionalNorm | None = None, margin: int | None = None,
                      workers: int | None = None) -> list[TailEstimate]:
    """P[some junction at distance >= N^alpha from x_0([N x])] alongside P[E].

    One trial stream serves every alpha, so the ratios are exactly
    nonincreasing in alpha.  Distances are Euclidean.
    """
    alphas = [float(alphas)] if np.isscalar(alphas) else [float(a) for a in alphas]
    if any(not 0.5 < a < 1 for a in alphas):
        raise ValueError("alpha must lie in (1/2, 1)")
    p = _check_p(p)
    trials = _check_trials(trials)
    anchors = scaled_anchors(x, N)
    xi = xi or EuclideanNorm(anchors.shape[1])
    centre = minimize_phi(xi, *anchors.astype(float)).x0
    run = run_three_point(p, anchors, centre, trials, master_seed, N if margin is None else margin, workers)
    box = _box_spec(run.box)
    E = Estimate("E", run.conditioned, trials, int(master_seed), box, p)
    out = []
    for a in alphas:
        r = N**a
        hits = int(np.sum(run.far >= r))
        out.append(TailEstimate(N, a, r, E, Estimate(f"A_{a:g}", hits, trials, int(master_seed), box, p)))
    return out


def tail_nonincreasing(ests: Sequence[TailEstimate], z: float = 2.0) -> bool:
    """Each ratio at most the previous one plus z combined standard errors."""
    for a, b in zip(ests, ests[1:]):
        if not (b.ratio <= a.ratio + z * math.hypot(a.ratio_stderr, b.ratio_stderr)):
            return False
    return True


# -- mass gap ------------------------------------------------------------------

@dataclass
class MassGapRow:
    length: int
    distance: float
    h: float
    f: float
    ratio: float
    h_eta: float
    f_eta: float
    ratio_eta: float
    exact_ratio: str


@dataclass
class MassGapTable:
    p: float
    width: int
    rows: list[MassGapRow]

    @property
    def strictly_decreasing(self) -> bool:
        r = [row.ratio for row in self.rows]
        return all(b < a for a, b in zip(r, r[1:]))

    def to_json(self) -> dict:
        return {"p": self.p, "width": self.width, "rows": [dict(r.__dict__) for r in self.rows],
                "strictly_decreasing": self.strictly_decreasing}


def mass_gap_scan(lengths: Sequence[int], p: float, width: int = 2, t=None, eta: float = 0.5, K: float = 1.0,
                  xi: DirectionalNorm | None = None) -> MassGapTable:
    """Exact f/h on strips [0, L] x [0, width-1] between k = 0 and n = L e_1."""
    p = _check_p(p)
    rows = []
    for L in lengths:
        L = int(L)
        if L < 1:
            raise ValueError("strip lengths must be positive")
        strip = LatticeBox.from_shape((L + 1, width))
        tt = (1.0, 0.0) if t is None else tuple(float(v) for v in t)
        v = exact_h_f(strip, p, tt, None, (0, 0), (L, 0), eta, K, xi)
        ratio = v.f / v.h if v.h else 0
        ratio_eta = v.f_eta / v.h_eta if v.h_eta else 0
        rows.append(MassGapRow(L, float(L), float(v.h), float(v.f), float(ratio), float(v.h_eta),
                               float(v.f_eta), float(ratio_eta), str(ratio)))
    return MassGapTable(p, width, rows)
