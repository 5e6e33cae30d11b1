"""The triple potential phi(z) = sum_i xi(x_i - z): minimizer, Hessian, admissibility."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .norms import DirectionalNorm, in_polar_body, polar_point

COLLIDE_TOL = 1e-6


def _anchors(x1, x2, x3) -> np.ndarray:
    pts = np.array([x1, x2, x3], dtype=float)
    if pts.ndim != 2:
        raise ValueError("anchors must be vectors of equal dimension")
    for i in range(3):
        for j in range(i + 1, 3):
            if np.allclose(pts[i], pts[j], rtol=0, atol=1e-12):
                raise ValueError(f"anchors {i + 1} and {j + 1} coincide")
    return pts


def phi(xi: DirectionalNorm, anchors: np.ndarray, z) -> float | np.ndarray:
    """phi(z), vectorized over rows of z."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        return float(sum(xi(a - z) for a in anchors))
    return sum(xi(a - z) for a in anchors)


def phi_gradient(xi: DirectionalNorm, anchors: np.ndarray, z) -> np.ndarray:
    # d/dz xi(x_i - z) = -grad xi(x_i - z)
    return -sum(xi.grad(a - z) for a in anchors)


def phi_hessian(xi: DirectionalNorm, x0, anchors, scale: float | None = None) -> np.ndarray:
    """Second-order central differences of phi with step 1e-4 * scale, symmetrized."""
    anchors = np.asarray(anchors, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    dist = np.linalg.norm(anchors - x0, axis=1)
    if dist.min() < COLLIDE_TOL:
        raise ValueError("Hessian undefined: minimizer sits on an anchor")
    scale = float(dist.mean()) if scale is None else scale
    h = 1e-4 * scale
    d = x0.size
    E = np.eye(d) * h
    H = np.empty((d, d))
    for i in range(d):
        for j in range(i, d):
            if i == j:
                val = (phi(xi, anchors, x0 + E[i]) - 2 * phi(xi, anchors, x0)
                       + phi(xi, anchors, x0 - E[i])) / h**2
            else:
                val = (phi(xi, anchors, x0 + E[i] + E[j]) - phi(xi, anchors, x0 + E[i] - E[j])
                       - phi(xi, anchors, x0 - E[i] + E[j]) + phi(xi, anchors, x0 - E[i] - E[j])) / (4 * h**2)
            H[i, j] = H[j, i] = val
    return 0.5 * (H + H.T)


def norm_hessian_fd(xi: DirectionalNorm, x, h: float | None = None) -> np.ndarray:
    """Finite-difference Hessian of xi itself (central differences of the gradient)."""
    x = np.asarray(x, dtype=float)
    h = 1e-4 * float(np.linalg.norm(x)) if h is None else h
    cols = [(xi.grad(x + h * e) - xi.grad(x - h * e)) / (2 * h) for e in np.eye(x.size)]
    H = np.array(cols)
    return 0.5 * (H + H.T)


@dataclass
class TripleConfig:
    anchors: np.ndarray
    x0: np.ndarray
    t: np.ndarray | None
    hessian: np.ndarray | None
    admissible: bool
    gradient_residual: float
    iterations: int
    degenerate_anchor: int | None = None
    margins: list[float] = field(default_factory=list)

    @property
    def covariance(self) -> np.ndarray:
        """H_phi^{-1}: covariance of the Gaussian junction profile."""
        if self.hessian is None:
            raise ValueError("no Hessian for a degenerate triple")
        return np.linalg.inv(self.hessian)

    def to_json(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()
        return {"anchors": arr(self.anchors), "x0": arr(self.x0), "t": arr(self.t),
                "hessian": arr(self.hessian), "admissible": self.admissible,
                "gradient_residual": self.gradient_residual, "iterations": self.iterations,
                "degenerate_anchor": self.degenerate_anchor, "margins": self.margins}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def anchor_dual_sums(xi: DirectionalNorm, anchors: np.ndarray) -> list[np.ndarray]:
    """u_i = sum_{j != i} grad xi(x_j - x_i)."""
    return [sum(xi.grad(anchors[j] - anchors[i]) for j in range(3) if j != i) for i in range(3)]


@dataclass(frozen=True)
class X3Check:
    admissible: bool
    u: list[np.ndarray]
    margins: list[float]

    def __bool__(self) -> bool:
        return self.admissible


def in_X3prime(xi: DirectionalNorm, x1, x2, x3) -> X3Check:
    """True iff every u_i lies outside the polar body (no anchor is the minimizer)."""
    anchors = _anchors(x1, x2, x3)
    u = anchor_dual_sums(xi, anchors)
    checks = [in_polar_body(xi, ui) for ui in u]
    return X3Check(not any(c.inside for c in checks), u, [c.margin for c in checks])


def minimize_phi(xi: DirectionalNorm, x1, x2, x3, tol: float = 1e-10, max_iter: int = 200) -> TripleConfig:
    """Damped Newton from the centroid with Armijo backtracking.

    An anchor x_i is the minimizer iff u_i lies in the polar body (the
    subdifferential of phi at x_i contains 0); that case is detected first and
    reported as a degenerate, inadmissible triple.
    """
    anchors = _anchors(x1, x2, x3)
    check = in_X3prime(xi, *anchors)
    for i, inside in enumerate(m <= 1 + 1e-9 for m in check.margins):
        if inside:
            return TripleConfig(anchors, anchors[i].copy(), None, None, False, 0.0, 0, i, check.margins)

    z = anchors.mean(axis=0)
    f = phi(xi, anchors, z)
    scale = float(np.linalg.norm(anchors - z, axis=1).mean())
    it = 0
    for it in range(1, max_iter + 1):
        g = phi_gradient(xi, anchors, z)
        ref = max(xi(a - z) for a in anchors)
        if np.linalg.norm(g) <= tol * ref:
            break
        try:
            H = phi_hessian(xi, z, anchors)
            step = -np.linalg.solve(H, g)
            if step @ g >= 0 or np.linalg.eigvalsh(H).min() <= 0:
                raise np.linalg.LinAlgError
        except (np.linalg.LinAlgError, ValueError):
            step = -g * scale / max(np.linalg.norm(g), 1e-300)
        lam = 1.0
        while lam > 1e-12:
            trial = z + lam * step
            ft = phi(xi, anchors, trial)
            if ft <= f + 1e-4 * lam * (g @ step) or ft < f:
                break
            lam *= 0.5
        if lam <= 1e-12:
            break
        z, f = trial, ft
    g = phi_gradient(xi, anchors, z)
    resid = float(np.linalg.norm(g) / max(xi(a - z) for a in anchors))
    dists = np.linalg.norm(anchors - z, axis=1)
    if dists.min() < COLLIDE_TOL:
        i = int(np.argmin(dists))
        return TripleConfig(anchors, anchors[i].copy(), None, None, False, resid, it, i, check.margins)
    t = np.array([polar_point(xi, a - z) for a in anchors])
    H = phi_hessian(xi, z, anchors)
    return TripleConfig(anchors, z, t, H, True, resid, it, None, check.margins)


@dataclass(frozen=True)
class QuadraticProbe:
    constant: float
    samples: int
    radius: float
    positive: bool


def quadratic_bound_probe(xi: DirectionalNorm, triple: TripleConfig, radius: float | None = None,
                          samples: int = 10_000, seed: int = 0) -> QuadraticProbe:
    """min over sampled y of (phi(x0+y) - phi(x0)) / sum_i |P_i^perp y|^2.

    P_i^perp projects onto the hyperplane orthogonal to t_i.  y is uniform in
    the ball of the given radius with |y| >= 1e-3 radius (y = 0 excluded).
    """
    if not triple.admissible or triple.t is None:
        raise ValueError("quadratic bound probe needs an admissible triple")
    x0, anchors = triple.x0, triple.anchors
    d = x0.size
    if radius is None:
        radius = 0.1 * min(xi(a - x0) for a in anchors)
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((samples, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.uniform(1e-3 ** d, 1.0, samples) ** (1.0 / d)
    y = g * r[:, None]
    dphi = phi(xi, anchors, x0 + y) - phi(xi, anchors, x0)
    quad = np.zeros(samples)
    for ti in triple.t:
        P = np.eye(d) - np.outer(ti, ti) / (ti @ ti)
        quad += np.sum((y @ P) ** 2, axis=1)
    c = float(np.min(dphi / quad))
    return QuadraticProbe(c, samples, float(radius), c > 0)


def reflect(points: Sequence[Sequence[float]], axis: int) -> np.ndarray:
    out = np.array(points, dtype=float)
    out[..., axis] *= -1
    return out
