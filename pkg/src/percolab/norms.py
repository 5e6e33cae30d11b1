"""Positively homogeneous convex norms, polar duality and surcharge geometry.

A ``DirectionalNorm`` stands in for the directional decay rate of the
connectivity function.  Synthetic closed forms serve the unit tests; the
tabulated kind is built from measured decay rates and evaluated as a smoothed
support function of its polar body.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.spatial import HalfspaceIntersection
from scipy.special import logsumexp, softmax

POLAR_TOL = 1e-9


class DirectionalNorm:
    """Base class: subclasses implement ``_eval`` on (n, d) arrays.

    ``perm_symmetric``/``refl_symmetric`` declare invariance under coordinate
    permutations and coordinate reflections.
    """

    kind = "synthetic"
    perm_symmetric = True
    refl_symmetric = True

    def __init__(self, d: int) -> None:
        if d < 1:
            raise ValueError("dimension must be positive")
        self.d = int(d)
        self._bounds: tuple[float, float] | None = None

    def _eval(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _grad(self, x: np.ndarray) -> np.ndarray | None:
        """Closed-form gradient for a single nonzero vector, if available."""
        return None

    def __call__(self, x) -> float | np.ndarray:
        a = np.asarray(x, dtype=float)
        if a.shape[-1] != self.d:
            raise ValueError(f"expected vectors of dimension {self.d}, got shape {a.shape}")
        flat = a.reshape(-1, self.d)
        out = self._eval(flat)
        out[~np.any(flat != 0, axis=1)] = 0.0
        return float(out[0]) if a.ndim == 1 else out.reshape(a.shape[:-1])

    def grad(self, x) -> np.ndarray:
        """Gradient, closed form when the subclass provides one."""
        x = np.asarray(x, dtype=float)
        g = self._grad(x)
        return g if g is not None else norm_gradient(self, x)

    @property
    def bounds(self) -> tuple[float, float]:
        """(c_-, c_+) with c_- |x| <= xi(x) <= c_+ |x|, measured on the direction grid."""
        if self._bounds is None:
            vals = self(direction_grid(self.d))
            self._bounds = (float(vals.min()), float(vals.max()))
        return self._bounds

    @property
    def c_minus(self) -> float:
        return self.bounds[0]

    @property
    def c_plus(self) -> float:
        return self.bounds[1]

    def describe(self) -> dict:
        return {"kind": self.kind, "name": type(self).__name__, "d": self.d,
                "c_minus": self.c_minus, "c_plus": self.c_plus}


class EuclideanNorm(DirectionalNorm):
    """xi(x) = c |x|."""

    def __init__(self, d: int = 2, c: float = 1.0) -> None:
        super().__init__(d)
        if c <= 0:
            raise ValueError("scale must be positive")
        self.c = float(c)

    def _eval(self, x):
        return self.c * np.linalg.norm(x, axis=1)

    def _grad(self, x):
        return self.c * x / np.linalg.norm(x)

    def hessian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x)
        return self.c * (np.eye(self.d) - np.outer(x, x) / r**2) / r


class SmoothedL1Norm(DirectionalNorm):
    """xi(x) = c * sum_i sqrt(x_i^2 + eps^2 |x|^2): a smooth, l1-like norm."""

    def __init__(self, d: int = 2, eps: float = 0.1, c: float = 1.0) -> None:
        super().__init__(d)
        self.eps = float(eps)
        self.c = float(c)

    def _eval(self, x):
        r2 = np.sum(x * x, axis=1, keepdims=True)
        return self.c * np.sqrt(x * x + self.eps**2 * r2).sum(axis=1)

    def _grad(self, x):
        r2 = float(x @ x)
        s = np.sqrt(x * x + self.eps**2 * r2)
        return self.c * (x / s + self.eps**2 * x * np.sum(1.0 / s))


class EllipticNorm(DirectionalNorm):
    """xi(x) = sqrt(x^T A x) with A symmetric positive definite."""

    perm_symmetric = False

    def __init__(self, A: Sequence[Sequence[float]]) -> None:
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or not np.allclose(A, A.T):
            raise ValueError("A must be a symmetric square matrix")
        if np.linalg.eigvalsh(A).min() <= 0:
            raise ValueError("A must be positive definite")
        super().__init__(A.shape[0])
        self.A = A
        self.refl_symmetric = bool(np.allclose(A, np.diag(np.diag(A))))
        self.perm_symmetric = bool(self.refl_symmetric and np.allclose(np.diag(A), A[0, 0]))

    def _eval(self, x):
        return np.sqrt(np.einsum("ni,ij,nj->n", x, self.A, x))

    def _grad(self, x):
        ax = self.A @ x
        return ax / np.sqrt(x @ ax)

    def hessian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        ax = self.A @ x
        r = np.sqrt(x @ ax)
        return self.A / r - np.outer(ax, ax) / r**3


class TabulatedNorm(DirectionalNorm):
    """Convex homogeneous extension of directional values xi(u_j).

    The polar body {t : (t, u_j) <= xi(u_j)} is intersected exactly; its
    vertices v give the support function max_v (v, x), evaluated through a
    log-sum-exp with temperature ``tau`` so that gradients exist everywhere.
    ``|x| tau log sum exp((v, x/|x|)/tau)`` stays convex and homogeneous.
    """

    kind = "tabulated"

    def __init__(self, directions: np.ndarray, values: np.ndarray, tau: float = 1e-3,
                 perm_symmetric: bool = True, refl_symmetric: bool = True) -> None:
        u = np.asarray(directions, dtype=float)
        vals = np.asarray(values, dtype=float)
        if u.ndim != 2 or u.shape[0] != vals.shape[0]:
            raise ValueError("directions must be (n, d) with one value per row")
        if np.any(vals <= 0):
            raise ValueError("tabulated values must be positive")
        super().__init__(u.shape[1])
        norms = np.linalg.norm(u, axis=1)
        self.directions = u / norms[:, None]
        self.values = vals / norms
        self.tau = float(tau)
        self.perm_symmetric = perm_symmetric
        self.refl_symmetric = refl_symmetric
        halfspaces = np.hstack([self.directions, -self.values[:, None]])
        hs = HalfspaceIntersection(halfspaces, np.zeros(self.d))
        self.dual_vertices = np.unique(np.round(hs.intersections, 14), axis=0)

    def _eval(self, x):
        r = np.linalg.norm(x, axis=1)
        safe = np.where(r > 0, r, 1.0)
        z = (x / safe[:, None]) @ self.dual_vertices.T / self.tau
        return r * self.tau * logsumexp(z, axis=1)

    def _grad(self, x):
        r = np.linalg.norm(x)
        y = x / r
        z = self.dual_vertices @ y / self.tau
        w = softmax(z)
        g = self.tau * logsumexp(z)
        vw = self.dual_vertices.T @ w
        return vw + (g - vw @ y) * y

    def to_csv(self, path: str | Path) -> None:
        write_norm_csv(path, self.directions, self.values)

    @classmethod
    def from_csv(cls, path: str | Path, **kw) -> TabulatedNorm:
        u, v = read_norm_csv(path)
        return cls(u, v, **kw)


# -- tabulation helpers -----------------------------------------------------

def write_norm_csv(path: str | Path, directions: np.ndarray, values: np.ndarray) -> None:
    d = directions.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"u{i + 1}" for i in range(d)] + ["value"])
        for u, v in zip(directions, values):
            w.writerow([repr(float(c)) for c in u] + [repr(float(v))])


def read_norm_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    data = np.array([[float(c) for c in r] for r in rows[1:]], dtype=float)
    return data[:, :-1], data[:, -1]


def fit_symmetric_2d(angles: np.ndarray, values: np.ndarray, harmonics: int = 2) -> np.ndarray:
    """Least-squares coefficients of xi(theta) = a_0 + sum_k a_k cos(4 k theta).

    The cos(4k theta) basis carries the square lattice symmetry group.
    """
    angles = np.asarray(angles, dtype=float)
    basis = np.stack([np.cos(4 * k * angles) for k in range(harmonics + 1)], axis=1)
    coef, *_ = np.linalg.lstsq(basis, np.asarray(values, dtype=float), rcond=None)
    return coef


def tabulate_symmetric_2d(coef: np.ndarray, n_dense: int = 720, tau: float = 1e-3) -> TabulatedNorm:
    theta = np.arange(n_dense) * (2 * np.pi / n_dense)
    vals = sum(c * np.cos(4 * k * theta) for k, c in enumerate(coef))
    u = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return TabulatedNorm(u, vals, tau=tau)


@lru_cache(maxsize=16)
def _grid(d: int, n: int | None) -> np.ndarray:
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        n = n or 720
        th = np.arange(n) * (2 * np.pi / n)
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    if d == 3 and n is None:
        return _icosphere(4)
    n = n or 4000
    g = np.random.default_rng(0).standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def direction_grid(d: int, n: int | None = None) -> np.ndarray:
    """Quasi-uniform unit directions: 720 angles in 2D, a 2562-vertex icosphere in 3D."""
    return _grid(int(d), n)


def _icosphere(level: int) -> np.ndarray:
    phi = (1 + 5**0.5) / 2
    verts = [(-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0), (0, -1, phi), (0, 1, phi),
             (0, -1, -phi), (0, 1, -phi), (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    pts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(level):
        cache: dict[tuple[int, int], int] = {}

        def mid(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = pts[a] + pts[b]
                pts.append(m / np.linalg.norm(m))
                cache[key] = len(pts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return np.array(pts)


# -- operations -------------------------------------------------------------

def norm_eval(xi: DirectionalNorm, x) -> float:
    return float(xi(np.asarray(x, dtype=float)))


def norm_gradient(xi: DirectionalNorm, x) -> np.ndarray:
    """Central finite differences with step max(1e-6, 1e-6 |x|)."""
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    if r == 0:
        raise ValueError("gradient undefined at the origin")
    h = max(1e-6, 1e-6 * r)
    steps = np.eye(xi.d) * h
    return (xi(x + steps) - xi(x - steps)) / (2 * h)


def polar_point(xi: DirectionalNorm, x) -> np.ndarray:
    """t_x = grad xi(x): the point of the polar body's boundary dual to x."""
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        raise ValueError("polar point undefined at the origin")
    return xi.grad(x)


@dataclass(frozen=True)
class PolarCheck:
    inside: bool
    margin: float
    argmax: np.ndarray = field(repr=False)

    def __bool__(self) -> bool:
        return self.inside


def polar_margin(xi: DirectionalNorm, t, n_dirs: int | None = None,
                 refine: bool = True) -> tuple[float, np.ndarray]:
    """sup_u (t, u)/xi(u) over the direction grid, optionally polished locally."""
    t = np.asarray(t, dtype=float)
    if not np.any(t):
        return 0.0, np.zeros(xi.d)
    grid = direction_grid(xi.d, n_dirs)
    ratio = grid @ t / xi(grid)
    j = int(np.argmax(ratio))
    best, u = float(ratio[j]), grid[j]
    if refine:
        if xi.d == 2:
            th0 = np.arctan2(u[1], u[0])
            step = 2 * np.pi / grid.shape[0]

            def f(th: float) -> float:
                v = np.array([np.cos(th), np.sin(th)])
                return -float(v @ t) / xi(v)

            res = minimize_scalar(f, bounds=(th0 - step, th0 + step), method="bounded",
                                  options={"xatol": 1e-12})
            if -res.fun > best:
                best, u = float(-res.fun), np.array([np.cos(res.x), np.sin(res.x)])
        else:
            res = minimize(lambda v: -float(v @ t) / xi(v), u, method="Nelder-Mead",
                           options={"xatol": 1e-10, "fatol": 1e-14})
            v = res.x / np.linalg.norm(res.x)
            val = float(v @ t) / xi(v)
            if val > best:
                best, u = val, v
    return best, u


def in_polar_body(xi: DirectionalNorm, t, n_dirs: int | None = None, refine: bool = True) -> PolarCheck:
    """Membership of t in {t : (t, x) <= xi(x) for all x}, with the attained sup as margin."""
    m, u = polar_margin(xi, t, n_dirs, refine)
    return PolarCheck(m <= 1 + POLAR_TOL, m, u)


def _check_boundary(xi: DirectionalNorm, t, tol: float = 1e-6) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    m, _ = polar_margin(xi, t)
    if m > 1 + tol:
        raise ValueError(f"t lies outside the polar body (margin {m:.9f})")
    return t


def surcharge(xi: DirectionalNorm, t, x, check: bool = True) -> float | np.ndarray:
    """S_t(x) = xi(x) - (t, x); vectorized over rows of x."""
    t = _check_boundary(xi, t) if check else np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    return xi(x) - x @ t


def in_surcharge_cone(xi: DirectionalNorm, t, eta: float, x, check: bool = True,
                      tol: float = 1e-12) -> bool | np.ndarray:
    """(t, x) >= (1 - eta) xi(x), with a relative tolerance for boundary rays."""
    t = _check_boundary(xi, t) if check else np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    val = xi(x)
    return x @ t >= (1.0 - eta) * val - tol * (1.0 + np.abs(val))


def dual_point(xi: DirectionalNorm, t) -> np.ndarray:
    """x_t: the point of {xi = 1} polar to t, i.e. the maximizer of (t, u)/xi(u)."""
    t = np.asarray(t, dtype=float)
    if not np.any(t):
        raise ValueError("dual point undefined for t = 0")
    _, u = polar_margin(xi, t)
    if xi.d > 2:
        # polish with the first-order condition grad xi(u) parallel to t
        res = minimize(lambda v: -float(v @ t) / xi(v), u, method="BFGS", options={"gtol": 1e-12})
        u = res.x
    return u / xi(u)
