"""Counter-based edge randomness.

An edge's uniform variate is a pure hash of ``(master_seed, trial, edge)``, so
a configuration can be generated in any order, in parallel, or lazily (only
the edges a cluster exploration touches) and still be bit-identical.

The mixer is the SplitMix64 finalizer; the numpy and numba versions below
must agree bit for bit (tested).
"""
from __future__ import annotations

import numpy as np
from numba import njit

M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_TRIAL_MUL = 0xD1B54A32D192ED03
_EDGE_ADD = 0x632BE59BD9B4E019
_C1 = 0xBF58476D1CE4E5B9
_C2 = 0x94D049BB133111EB
_INV53 = 1.0 / 9007199254740992.0


def _mix_py(z: int) -> int:
    z &= M64
    z = ((z ^ (z >> 30)) * _C1) & M64
    z = ((z ^ (z >> 27)) * _C2) & M64
    return z ^ (z >> 31)


def trial_key(master_seed: int, trial: int) -> int:
    """64-bit key shared by every edge of one trial."""
    s = _mix_py((master_seed & M64) ^ _GOLDEN)
    return _mix_py(s + (trial & M64) * _TRIAL_MUL + 1)


def _mix_np(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_C1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_C2)
    return z ^ (z >> np.uint64(31))


def edge_uniforms(master_seed: int, trial: int, edges: np.ndarray) -> np.ndarray:
    """Uniform [0, 1) variates for the given edge ids of one trial."""
    key = np.uint64(trial_key(master_seed, trial))
    e = np.asarray(edges, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _mix_np(key ^ (e * np.uint64(_GOLDEN) + np.uint64(_EDGE_ADD)))
    return (z >> np.uint64(11)).astype(np.float64) * _INV53


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_C1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_C2)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def trial_key_nb(master_seed, trial):
    s = mix64(np.uint64(master_seed) ^ np.uint64(_GOLDEN))
    return mix64(s + np.uint64(trial) * np.uint64(_TRIAL_MUL) + np.uint64(1))


@njit(cache=True, inline="always")
def edge_uniform_nb(key, edge):
    z = mix64(key ^ (np.uint64(edge) * np.uint64(_GOLDEN) + np.uint64(_EDGE_ADD)))
    return np.float64(z >> np.uint64(11)) * _INV53


@njit(cache=True, inline="always")
def edge_open_nb(key, edge, p):
    return edge_uniform_nb(key, edge) < p
