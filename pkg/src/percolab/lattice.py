"""Finite boxes of Z^d, canonical edge ordering and bond configurations."""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

_MAGIC = b"PCB1"


@dataclass(frozen=True)
class LatticeBox:
    """Axis-aligned box ``lower <= x <= upper`` (inclusive corners) in Z^d."""

    lower: tuple[int, ...]
    upper: tuple[int, ...]

    def __post_init__(self) -> None:
        lo = tuple(int(v) for v in self.lower)
        hi = tuple(int(v) for v in self.upper)
        if len(lo) != len(hi):
            raise ValueError("corner dimensions differ")
        if len(lo) < 2:
            raise ValueError("dimension must be at least 2")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"lower corner {lo} exceeds upper corner {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def from_shape(cls, shape: Sequence[int], lower: Sequence[int] | None = None) -> LatticeBox:
        """Box with ``shape[a]`` sites along axis ``a``."""
        if lower is None:
            lower = (0,) * len(shape)
        return cls(tuple(lower), tuple(int(l) + int(s) - 1 for l, s in zip(lower, shape)))

    @classmethod
    def parse(cls, spec: str) -> LatticeBox:
        """Parse ``"5x5"`` (site counts) or ``"-2,-2:3,4"`` (corners)."""
        spec = spec.strip()
        if ":" in spec:
            lo, hi = spec.split(":")
            return cls(tuple(int(v) for v in lo.split(",")), tuple(int(v) for v in hi.split(",")))
        return cls.from_shape([int(v) for v in spec.lower().split("x")])

    @classmethod
    def around(cls, points: Iterable[Sequence[int]], margin: int) -> LatticeBox:
        pts = np.asarray(list(points), dtype=np.int64)
        return cls(tuple(pts.min(axis=0) - margin), tuple(pts.max(axis=0) + margin))

    @property
    def d(self) -> int:
        return len(self.lower)

    @cached_property
    def shape(self) -> tuple[int, ...]:
        return tuple(h - l + 1 for l, h in zip(self.lower, self.upper))

    @cached_property
    def strides(self) -> np.ndarray:
        # lexicographic site order: first coordinate most significant
        s = np.ones(self.d, dtype=np.int64)
        for a in range(self.d - 2, -1, -1):
            s[a] = s[a + 1] * self.shape[a + 1]
        return s

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.shape))

    @property
    def n_edges(self) -> int:
        total = 0
        for a in range(self.d):
            other = int(np.prod([self.shape[b] for b in range(self.d) if b != a]))
            total += (self.shape[a] - 1) * other
        return total

    def contains(self, x: Sequence[int]) -> bool:
        return len(x) == self.d and all(l <= int(v) <= h for v, l, h in zip(x, self.lower, self.upper))

    def index(self, x: Sequence[int]) -> int:
        if not self.contains(x):
            raise ValueError(f"site {tuple(x)} outside box {self.lower}..{self.upper}")
        return int(sum((int(v) - l) * s for v, l, s in zip(x, self.lower, self.strides)))

    def site(self, i: int) -> tuple[int, ...]:
        return tuple(int(c) for c in self.coords[i])

    @cached_property
    def coords(self) -> np.ndarray:
        grids = np.meshgrid(*[np.arange(l, h + 1) for l, h in zip(self.lower, self.upper)], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)

    @cached_property
    def _edge_tables(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        coords = self.coords
        n = self.n_sites
        fwd = -np.ones((n, self.d), dtype=np.int64)
        has = np.stack([coords[:, a] < self.upper[a] for a in range(self.d)], axis=1)
        # canonical order: lexicographic by lower endpoint, then axis
        order = np.flatnonzero(has.ravel())
        fwd.ravel()[order] = np.arange(order.size)
        site_of = order // self.d
        axis_of = order % self.d
        u = site_of.astype(np.int64)
        v = u + self.strides[axis_of]
        return u, v.astype(np.int64), axis_of.astype(np.int64), fwd

    @property
    def edge_u(self) -> np.ndarray:
        return self._edge_tables[0]

    @property
    def edge_v(self) -> np.ndarray:
        return self._edge_tables[1]

    @property
    def edge_axis(self) -> np.ndarray:
        return self._edge_tables[2]

    @property
    def edge_fwd(self) -> np.ndarray:
        """``edge_fwd[s, a]``: id of the edge from site ``s`` to ``s + e_a``, or -1."""
        return self._edge_tables[3]

    def edge_index(self, x: Sequence[int], y: Sequence[int]) -> int:
        diff = np.asarray(y) - np.asarray(x)
        if np.abs(diff).sum() != 1:
            raise ValueError(f"{tuple(x)} and {tuple(y)} are not nearest neighbours")
        a = int(np.flatnonzero(diff)[0])
        lo = x if diff[a] > 0 else y
        e = int(self.edge_fwd[self.index(lo), a])
        if e < 0:
            raise ValueError("edge leaves the box")
        return e

    def neighbours(self, i: int) -> list[tuple[int, int]]:
        """(neighbour site, edge id) pairs of site ``i``."""
        out = []
        x = self.coords[i]
        for a in range(self.d):
            if x[a] < self.upper[a]:
                out.append((i + int(self.strides[a]), int(self.edge_fwd[i, a])))
            if x[a] > self.lower[a]:
                j = i - int(self.strides[a])
                out.append((j, int(self.edge_fwd[j, a])))
        return out

    def to_json(self) -> dict:
        return {"d": self.d, "lower": list(self.lower), "upper": list(self.upper)}


@dataclass(frozen=True)
class BondConfiguration:
    """Open/closed assignment of every edge of ``box`` in canonical order."""

    box: LatticeBox
    open: np.ndarray
    p: float
    seed: int | None = None
    trial: int | None = None
    _labels: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        bits = np.ascontiguousarray(self.open, dtype=np.bool_)
        if bits.shape != (self.box.n_edges,):
            raise ValueError(f"indicator length {bits.shape} != edge count {self.box.n_edges}")
        bits.setflags(write=False)
        object.__setattr__(self, "open", bits)

    @classmethod
    def from_open_edges(cls, box: LatticeBox, edges: Iterable[tuple[Sequence[int], Sequence[int]]],
                        p: float = float("nan")) -> BondConfiguration:
        bits = np.zeros(box.n_edges, dtype=bool)
        for x, y in edges:
            bits[box.edge_index(x, y)] = True
        return cls(box, bits, p)

    @classmethod
    def from_paths(cls, box: LatticeBox, paths: Iterable[Sequence[Sequence[int]]],
                   p: float = float("nan")) -> BondConfiguration:
        """Open exactly the edges walked by the given site sequences."""
        edges = []
        for path in paths:
            edges.extend(zip(path[:-1], path[1:]))
        return cls.from_open_edges(box, edges, p)

    def with_edge(self, e: int, state: bool = True) -> BondConfiguration:
        bits = self.open.copy()
        bits[e] = state
        return BondConfiguration(self.box, bits, self.p, self.seed, self.trial)

    @property
    def n_open(self) -> int:
        return int(self.open.sum())

    def open_edges(self) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
        ids = np.flatnonzero(self.open)
        return [(self.box.site(int(self.box.edge_u[e])), self.box.site(int(self.box.edge_v[e]))) for e in ids]

    # -- serialization -------------------------------------------------
    def to_bytes(self) -> bytes:
        """Header (d, corners, p, seed, trial, m) then packed bits, little-endian."""
        d = self.box.d
        buf = io.BytesIO()
        buf.write(_MAGIC)
        buf.write(struct.pack("<I", d))
        buf.write(struct.pack(f"<{d}q", *self.box.lower))
        buf.write(struct.pack(f"<{d}q", *self.box.upper))
        buf.write(struct.pack("<d", float(self.p)))
        has_seed = self.seed is not None
        buf.write(struct.pack("<B", 1 if has_seed else 0))
        buf.write(struct.pack("<QQ", int(self.seed or 0) & (2**64 - 1), int(self.trial or 0)))
        buf.write(struct.pack("<Q", self.box.n_edges))
        buf.write(np.packbits(self.open, bitorder="little").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> BondConfiguration:
        if data[:4] != _MAGIC:
            raise ValueError("not a bond configuration dump")
        off = 4
        (d,) = struct.unpack_from("<I", data, off)
        off += 4
        lower = struct.unpack_from(f"<{d}q", data, off)
        off += 8 * d
        upper = struct.unpack_from(f"<{d}q", data, off)
        off += 8 * d
        (p,) = struct.unpack_from("<d", data, off)
        off += 8
        (has_seed,) = struct.unpack_from("<B", data, off)
        off += 1
        seed, trial = struct.unpack_from("<QQ", data, off)
        off += 16
        (m,) = struct.unpack_from("<Q", data, off)
        off += 8
        box = LatticeBox(lower, upper)
        if m != box.n_edges:
            raise ValueError("edge count in header does not match box")
        raw = np.frombuffer(data[off:off + (m + 7) // 8], dtype=np.uint8)
        bits = np.unpackbits(raw, bitorder="little")[:m].astype(bool)
        if has_seed:
            return cls(box, bits, p, int(seed), int(trial))
        return cls(box, bits, p)
