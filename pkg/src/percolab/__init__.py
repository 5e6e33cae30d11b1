"""Bernoulli bond percolation: sampling, exact enumeration, norm geometry and junction statistics."""
from __future__ import annotations

__version__ = "0.1.0"

from .core import Connected, Junction, Predicate, build_clusters, event_E, event_F, find_junctions, sample_configuration
from .lattice import BondConfiguration, LatticeBox

__all__ = [
    "__version__", "BondConfiguration", "Connected", "Junction", "LatticeBox", "Predicate",
    "build_clusters", "event_E", "event_F", "find_junctions", "sample_configuration",
]
