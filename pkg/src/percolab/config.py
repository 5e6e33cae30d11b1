"""Run configuration (flat JSON with a schema version) and run manifests."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any

SCHEMA_VERSION = 1
SUBCOMMANDS = ("sample", "oracle", "xi", "oz", "llt", "tail", "renewal", "skeleton", "massgap")


class ConfigError(ValueError):
    """Invalid or out-of-range configuration."""


@dataclass
class RunConfig:
    subcommand: str
    schema_version: int = SCHEMA_VERSION
    d: int = 2
    p: float | None = None
    box: str | None = None
    margin: int | None = None
    anchors: list[list[float]] | None = None
    k: list[int] | None = None
    n: list[int] | None = None
    direction: list[float] | None = None
    t: list[float] | None = None
    event: str | None = None
    Ns: list[int] | None = None
    N: int | None = None
    lengths: list[int] | None = None
    width: int = 2
    trials: int = 10_000
    trial: int = 0
    master_seed: int = 0
    eta: float = 0.5
    K: float = 1.0
    M: float = 3.0
    R: float = 2.0
    delta: float = 0.5
    alpha: list[float] | None = None
    beta: float = 0.3
    epsilon: float = 0.25
    norm: str = "euclidean"
    p_max: float | None = None
    cov_tol: float = 0.25
    rational: bool = False
    chunks: int = 1
    input: str | None = None
    out: str | None = None
    workers: int | None = None

    def validate(self) -> RunConfig:
        def bad(msg: str) -> None:
            raise ConfigError(msg)

        if self.schema_version != SCHEMA_VERSION:
            bad(f"schema_version {self.schema_version} not supported (expected {SCHEMA_VERSION})")
        if self.subcommand not in SUBCOMMANDS:
            bad(f"unknown subcommand {self.subcommand!r}")
        if self.d < 1:
            bad("d must be positive")
        if self.p is not None and not 0.0 <= self.p <= 1.0:
            bad(f"p={self.p} outside [0, 1]")
        if not 0 < self.eta < 1:
            bad("eta must lie in (0, 1)")
        if self.alpha is not None and any(not 0.5 < a < 1 for a in self.alpha):
            bad("alpha must lie in (1/2, 1)")
        if not 0 < self.beta < 0.5:
            bad("beta must lie in (0, 1/2)")
        if not 0 < self.epsilon < 0.5:
            bad("epsilon must lie in (0, 1/2)")
        for name in ("K", "M", "R", "delta", "cov_tol"):
            if not getattr(self, name) > 0:
                bad(f"{name} must be positive")
        if self.trials < 1:
            bad("trials must be at least 1")
        if self.trial < 0 or self.master_seed < 0:
            bad("seeds and trial indices must be nonnegative")
        if (self.margin is not None and self.margin < 0) or self.width < 1 or self.chunks < 1:
            bad("margin, width and chunks out of range")
        if self.workers is not None and self.workers < 1:
            bad("workers must be at least 1")
        if self.Ns is not None and (len(self.Ns) < 2 or any(b <= a for a, b in zip(self.Ns, self.Ns[1:]))):
            bad("N ladder must have at least two increasing entries")
        return self

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RunConfig:
        data = dict(data.get("config", data))  # a manifest carries its config
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        if "subcommand" not in data:
            raise ConfigError("config lacks a subcommand")
        try:
            return cls(**data).validate()
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir: str | Path, config: RunConfig, outputs: list[str], inputs: list[str],
                   seconds: float, version: str) -> Path:
    """manifest.json: resolved config, version, wall clock and sha256 of inputs and outputs."""
    out_dir = Path(out_dir)
    man = {
        "config": config.to_dict(),
        "version": version,
        "wall_clock_seconds": seconds,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {name: sha256_file(out_dir / name) for name in outputs},
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    return path
