"""Sampling, cluster decomposition and the three-point connection events."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels as K
from .lattice import BondConfiguration, LatticeBox
from .rng import trial_key

Site = tuple[int, ...]


def sample_configuration(p: float, box: LatticeBox, master_seed: int, trial_index: int) -> BondConfiguration:
    """Bernoulli(p) bond configuration keyed by (master_seed, trial_index, edge)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p={p} outside [0, 1]")
    key = np.uint64(trial_key(master_seed, trial_index))
    bits = K.sample_states(key, float(p), box.n_edges)
    return BondConfiguration(box, bits, float(p), int(master_seed), int(trial_index))


@dataclass(frozen=True)
class ClusterPartition:
    """Cluster id per site; the id of a cluster is its smallest site index."""

    box: LatticeBox
    labels: np.ndarray

    @property
    def sizes(self) -> dict[int, int]:
        ids, counts = np.unique(self.labels, return_counts=True)
        return {int(i): int(c) for i, c in zip(ids, counts)}

    @property
    def n_clusters(self) -> int:
        return int(np.unique(self.labels).size)

    def id_of(self, x: Sequence[int]) -> int:
        return int(self.labels[self.box.index(x)])

    def same(self, *sites: Sequence[int]) -> bool:
        ids = {self.id_of(x) for x in sites}
        return len(ids) == 1

    def members(self, x: Sequence[int]) -> np.ndarray:
        """Site indices of the cluster containing ``x``."""
        return np.flatnonzero(self.labels == self.id_of(x))


def build_clusters(config: BondConfiguration) -> ClusterPartition:
    if config._labels is None:
        box = config.box
        labels = K.uf_labels(box.n_sites, box.edge_u, box.edge_v, config.open)
        labels.setflags(write=False)
        object.__setattr__(config, "_labels", labels)
    return ClusterPartition(config.box, config._labels)


def _check_sites(box: LatticeBox, *sites: Sequence[int]) -> list[Site]:
    out = []
    for x in sites:
        x = tuple(int(v) for v in x)
        if not box.contains(x):
            raise ValueError(f"site {x} outside box {box.lower}..{box.upper}")
        out.append(x)
    if len(set(out)) != len(out):
        raise ValueError(f"sites must be pairwise distinct: {out}")
    return out


def event_E(config: BondConfiguration, n1: Sequence[int], n2: Sequence[int], n3: Sequence[int]) -> bool:
    """The three sites lie in one open cluster."""
    sites = _check_sites(config.box, n1, n2, n3)
    return build_clusters(config).same(*sites)


@dataclass(frozen=True)
class PathSet:
    """Three open self-avoiding paths from ``k`` meeting only at ``k``."""

    k: Site
    targets: tuple[Site, Site, Site]
    paths: tuple[tuple[Site, ...], ...]

    def to_json(self) -> dict:
        return {"k": list(self.k), "targets": [list(t) for t in self.targets],
                "paths": [[list(s) for s in path] for path in self.paths]}


def cluster_subgraph(config: BondConfiguration, x: Sequence[int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(global site ids, local u, local v) of the open cluster containing ``x``."""
    box = config.box
    part = build_clusters(config)
    members = part.members(x)
    local = -np.ones(box.n_sites, dtype=np.int64)
    local[members] = np.arange(members.size)
    eids = np.flatnonzero(config.open)
    eids = eids[local[box.edge_u[eids]] >= 0]
    return members, local[box.edge_u[eids]], local[box.edge_v[eids]]


def event_F(config: BondConfiguration, k: Sequence[int], n1: Sequence[int], n2: Sequence[int],
            n3: Sequence[int]) -> PathSet | None:
    """Witness of three open paths k -> n_i, vertex-disjoint away from k, or None.

    Decided by a unit vertex-capacity max flow (Menger): flow 3 iff the event holds.
    """
    box = config.box
    k, a, b, c = _check_sites(box, k, n1, n2, n3)
    part = build_clusters(config)
    if not part.same(k, a, b, c):
        return None
    members, lu, lv = cluster_subgraph(config, k)
    pos = {int(s): i for i, s in enumerate(members)}
    loc = [pos[box.index(x)] for x in (k, a, b, c)]
    paths = np.zeros((3, members.size + 1), dtype=np.int64)
    lengths = np.zeros(3, dtype=np.int64)
    flow = K.flow_local(members.size, lu, lv, loc[0], loc[1], loc[2], loc[3], paths, lengths)
    if flow < 3:
        return None
    by_target: dict[int, tuple[Site, ...]] = {}
    for i in range(3):
        seq = paths[i, :lengths[i]]
        by_target[int(seq[-1])] = tuple(box.site(int(members[j])) for j in seq)
    ordered = tuple(by_target[j] for j in loc[1:])
    return PathSet(k, (a, b, c), ordered)


def find_junctions(config: BondConfiguration, n1: Sequence[int], n2: Sequence[int],
                   n3: Sequence[int]) -> set[Site]:
    """All sites k of the common cluster from which three disjoint open paths reach n1, n2, n3."""
    box = config.box
    a, b, c = _check_sites(box, n1, n2, n3)
    if not build_clusters(config).same(a, b, c):
        return set()
    members, lu, lv = cluster_subgraph(config, a)
    pos = {int(s): i for i, s in enumerate(members)}
    t = [pos[box.index(x)] for x in (a, b, c)]
    out = np.empty(members.size, dtype=np.int64)
    cnt = K.junctions_local(members.size, lu, lv, t[0], t[1], t[2], out)
    return {box.site(int(members[j])) for j in out[:cnt]}


# -- event descriptors ---------------------------------------------------------
# Events are callables on a BondConfiguration.  The two structured kinds below
# also carry numba kernels used by the enumerator and the Monte-Carlo driver.

@dataclass(frozen=True)
class Connected:
    """All listed sites lie in one open cluster (E for three sites)."""

    sites: tuple[Site, ...]
    name: str = "connected"

    def __call__(self, config: BondConfiguration) -> bool:
        return build_clusters(config).same(*self.sites)

    def targets(self, box: LatticeBox) -> np.ndarray:
        return np.array([box.index(x) for x in self.sites], dtype=np.int64)


@dataclass(frozen=True)
class Junction:
    """Event F(k; n1, n2, n3)."""

    k: Site
    targets3: tuple[Site, Site, Site]
    name: str = "F"

    def __call__(self, config: BondConfiguration) -> bool:
        return event_F(config, self.k, *self.targets3) is not None

    def targets(self, box: LatticeBox) -> np.ndarray:
        return np.array([box.index(x) for x in self.targets3], dtype=np.int64)


@dataclass(frozen=True)
class Predicate:
    """Arbitrary boolean function of a configuration."""

    fn: Callable[[BondConfiguration], bool]
    name: str = "predicate"

    def __call__(self, config: BondConfiguration) -> bool:
        return bool(self.fn(config))


def as_event(ev) -> Connected | Junction | Predicate:
    if isinstance(ev, (Connected, Junction, Predicate)):
        return ev
    if callable(ev):
        return Predicate(ev, getattr(ev, "__name__", "predicate"))
    raise TypeError(f"not an event: {ev!r}")
