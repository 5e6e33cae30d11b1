"""percolab command line: one subcommand per experiment, JSON/CSV outputs plus a manifest.

Exit codes: 0 success, 2 configuration error, 3 guard refusal, 4 failed statistical check.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .config import SUBCOMMANDS, ConfigError, RunConfig, write_manifest
from .core import Connected, Junction, build_clusters, event_F, sample_configuration
from .experiments import (estimate_xi, far_junction_tail, llt_junction_histogram, mass_gap_scan,
                          oz_prefactor_scan, tail_nonincreasing)
from .lattice import BondConfiguration, LatticeBox
from .norms import DirectionalNorm, EuclideanNorm, SmoothedL1Norm, TabulatedNorm
from .oracle import GuardError, exact_h_f, exact_probability, verify_renewal
from .renewal import classify_connection, eta_K_break_points
from .skeleton import delta_good, tree_skeleton

EXIT_OK, EXIT_CONFIG, EXIT_GUARD, EXIT_STAT = 0, 2, 3, 4
RENEWAL_TOL = 1e-12


# -- argument parsing ----------------------------------------------------------

def _ints(text: str) -> list[int]:
    return [int(v) for v in text.replace(" ", "").split(",") if v]


def _floats(text: str) -> list[float]:
    return [float(Fraction(v)) for v in text.replace(" ", "").split(",") if v]


def _points(text: str) -> list[list[float]]:
    return [_floats(s) for s in text.split(";") if s.strip()]


def _direction(text: str) -> list[float]:
    text = text.strip()
    if text.startswith("e") and text[1:].isdigit():
        return [float(text[1:])]  # resolved against d later
    return _floats(text)


def _resolve_direction(v: list[float] | None, d: int) -> list[float]:
    if v is None:
        return [1.0] + [0.0] * (d - 1)
    if len(v) == 1 and d > 1:
        a = int(v[0])
        if not 1 <= a <= d:
            raise ConfigError(f"axis e{a} out of range for d={d}")
        return [1.0 if i == a - 1 else 0.0 for i in range(d)]
    return v


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="percolab", description="Bond percolation experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config or manifest; flags override its values")
    common.add_argument("--out", default=S, help="output directory (JSON/CSV and manifest.json)")
    common.add_argument("--seed", dest="master_seed", type=int, default=S)
    common.add_argument("--trials", type=int, default=S)
    common.add_argument("--workers", type=int, default=S, help="worker threads (default: $PERCOLAB_WORKERS or cpus)")
    common.add_argument("--p", type=float, default=S)
    common.add_argument("--d", type=int, default=S)

    cfg_in = argparse.ArgumentParser(add_help=False)
    cfg_in.add_argument("--box", default=S, help="e.g. 5x5 or 0,0:4,4")
    cfg_in.add_argument("--trial", type=int, default=S)
    cfg_in.add_argument("--input", default=S, help="configuration file written by sample --dump")

    geom = argparse.ArgumentParser(add_help=False)
    geom.add_argument("--k", type=_ints, default=S)
    geom.add_argument("--n", type=_ints, default=S)
    geom.add_argument("--t", type=_floats, default=S)
    geom.add_argument("--eta", type=float, default=S)
    geom.add_argument("--K", type=float, default=S)
    geom.add_argument("--norm", default=S, help="euclidean, l1smooth or a norm CSV file")

    p = sub.add_parser("sample", parents=[common, cfg_in], help="draw one configuration")
    p.add_argument("--dump", help="write the configuration in binary form")

    p = sub.add_parser("oracle", parents=[common, geom], help="exact probability by enumeration")
    p.add_argument("--box", default=S)
    p.add_argument("--event", default=S, choices=["corner-corner", "E", "F", "h", "f", "h_eta", "f_eta", "renewal"])
    p.add_argument("--anchors", type=_points, default=S, help="three sites, e.g. '0,0;3,3;0,3'")
    p.add_argument("--rational", action="store_true", default=S)
    p.add_argument("--chunks", type=int, default=S)

    for name, hlp in (("xi", "inverse correlation length"), ("oz", "Ornstein-Zernike prefactor scan")):
        p = sub.add_parser(name, parents=[common], help=hlp)
        p.add_argument("--dir", dest="direction", type=_direction, default=S, help="e1, e2 or a vector '1,1'")
        p.add_argument("--Ns", type=_ints, default=S, help="increasing N ladder, e.g. 4,6,8")
        p.add_argument("--margin", type=int, default=S)
        p.add_argument("--p-max", dest="p_max", type=float, default=S)

    p = sub.add_parser("llt", parents=[common], help="junction fluctuation histogram")
    p.add_argument("--anchors", type=_points, default=S, help="unit-scale triple, e.g. '-1/6,0;1/6,0;0,1/4'")
    p.add_argument("--N", type=int, default=S)
    p.add_argument("--beta", type=float, default=S)
    p.add_argument("--margin", type=int, default=S)
    p.add_argument("--norm", default=S)
    p.add_argument("--cov-tol", dest="cov_tol", type=float, default=S)

    p = sub.add_parser("tail", parents=[common], help="far-junction tail ratio")
    p.add_argument("--anchors", type=_points, default=S)
    p.add_argument("--Ns", type=_ints, default=S)
    p.add_argument("--alpha", type=_floats, default=S)
    p.add_argument("--margin", type=int, default=S)
    p.add_argument("--norm", default=S)

    p = sub.add_parser("renewal", parents=[common, cfg_in, geom], help="break points and connection flags")
    p.add_argument("--event", default=S, choices=["flags", "verify"])

    p = sub.add_parser("skeleton", parents=[common, cfg_in, geom], help="M-tree skeleton")
    p.add_argument("--anchors", type=_points, default=S, help="targets n1;n2;n3")
    p.add_argument("--M", type=float, default=S)
    p.add_argument("--R", type=float, default=S)
    p.add_argument("--delta", type=float, default=S)

    p = sub.add_parser("massgap", parents=[common, geom], help="exact f/h decay on strips")
    p.add_argument("--lengths", type=_ints, default=S)
    p.add_argument("--width", type=int, default=S)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    data: dict[str, Any] = {}
    if getattr(args, "config", None):
        data = RunConfig.load(args.config).to_dict()
    data["subcommand"] = args.subcommand
    for key, val in vars(args).items():
        if key in ("config", "subcommand", "dump"):
            continue
        data[key] = val
    return RunConfig.from_dict(data)


# -- output --------------------------------------------------------------------

def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def csv_text(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


class Outputs:
    """Collects named output files; writes them only when an output directory is set."""

    def __init__(self, out: str | None) -> None:
        self.dir = Path(out) if out else None
        self.names: list[str] = []
        if self.dir:
            self.dir.mkdir(parents=True, exist_ok=True)

    def text(self, name: str, content: str) -> None:
        if self.dir:
            (self.dir / name).write_text(content)
            self.names.append(name)

    def raw(self, name: str, content: bytes) -> None:
        if self.dir:
            (self.dir / name).write_bytes(content)
            self.names.append(name)


# -- helpers -------------------------------------------------------------------

def make_norm(spec: str, d: int) -> DirectionalNorm:
    if spec == "euclidean":
        return EuclideanNorm(d)
    if spec == "l1smooth":
        return SmoothedL1Norm(d)
    path = Path(spec)
    if not path.exists():
        raise ConfigError(f"norm {spec!r} is neither a built-in name nor a CSV file")
    return TabulatedNorm.from_csv(path)


def _need(cfg: RunConfig, *names: str) -> None:
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        raise ConfigError(f"{cfg.subcommand} needs: {', '.join('--' + m for m in missing)}")


def _site(v: Sequence[float]) -> tuple[int, ...]:
    if any(float(x) != int(x) for x in v):
        raise ConfigError(f"site {list(v)} is not integral")
    return tuple(int(x) for x in v)


def _three_sites(cfg: RunConfig) -> list[tuple[int, ...]]:
    if cfg.anchors is None or len(cfg.anchors) != 3:
        raise ConfigError("--anchors needs exactly three sites")
    return [_site(a) for a in cfg.anchors]


def _load_config(cfg: RunConfig) -> BondConfiguration:
    if cfg.input:
        try:
            return BondConfiguration.from_bytes(Path(cfg.input).read_bytes())
        except OSError as exc:
            raise ConfigError(f"cannot read {cfg.input}: {exc}") from exc
    _need(cfg, "box", "p")
    return sample_configuration(cfg.p, LatticeBox.parse(cfg.box), cfg.master_seed, cfg.trial)


def _margin(cfg: RunConfig) -> int:
    return 4 if cfg.margin is None else cfg.margin


def _t(cfg: RunConfig) -> list[float]:
    return _resolve_direction(cfg.t, cfg.d) if cfg.t is None else cfg.t


# -- subcommands ---------------------------------------------------------------

def cmd_sample(cfg: RunConfig, out: Outputs, args: argparse.Namespace) -> int:
    conf = _load_config(cfg)
    part = build_clusters(conf)
    sizes = part.sizes
    rep = {"box": conf.box.to_json(), "p": conf.p, "master_seed": conf.seed, "trial": conf.trial,
           "n_edges": conf.box.n_edges, "n_open": conf.n_open, "n_clusters": part.n_clusters,
           "largest_cluster": max(sizes.values()) if sizes else 0}
    data = conf.to_bytes()
    if getattr(args, "dump", None):
        Path(args.dump).write_bytes(data)
    out.raw("configuration.bin", data)
    out.text("sample.json", dumps(rep))
    sys.stdout.write(dumps(rep))
    return EXIT_OK


def cmd_oracle(cfg: RunConfig, out: Outputs, args: argparse.Namespace) -> int:
    _need(cfg, "box", "p", "event")
    box = LatticeBox.parse(cfg.box)
    ev = cfg.event
    if ev in ("corner-corner", "E", "F"):
        if ev == "corner-corner":
            event = Connected((tuple(box.lower), tuple(box.upper)), "corner-corner")
        elif ev == "E":
            event = Connected(tuple(_three_sites(cfg)), "E")
        else:
            _need(cfg, "k")
            event = Junction(_site(cfg.k), tuple(_three_sites(cfg)))
        res = exact_probability(box, cfg.p, event, cfg.chunks)
        value = res.exact
        rep = {k: v for k, v in res.to_json().items() if k != "seconds"}
        rep["event"] = ev
    elif ev == "renewal":
        _need(cfg, "n")
        chk = verify_renewal(box, cfg.p, _t(cfg), None, _site(cfg.n), None if cfg.k is None else _site(cfg.k),
                             cfg.eta, cfg.K, make_norm(cfg.norm, box.d))
        value = chk.exact_residual
        rep = chk.to_json()
        rep["event"] = ev
    else:
        _need(cfg, "n")
        k = tuple(box.lower) if cfg.k is None else _site(cfg.k)
        hf = exact_h_f(box, cfg.p, _t(cfg), None, k, _site(cfg.n), cfg.eta, cfg.K, make_norm(cfg.norm, box.d))
        value = {"h": hf.h, "f": hf.f, "h_eta": hf.h_eta, "f_eta": hf.f_eta}[ev]
        rep = hf.to_json()
        rep.update(event=ev, exact=str(value), probability=float(value))
    out.text("oracle.json", dumps(rep))
    print(str(value) if cfg.rational else repr(float(value)))
    return EXIT_OK


def cmd_xi(cfg: RunConfig, out: Outputs, args: argparse.Namespace) -> int:
    _need(cfg, "p", "Ns")
    u = _resolve_direction(cfg.direction, cfg.d)
    est = estimate_xi(cfg.p, u, cfg.Ns, cfg.trials, cfg.master_seed, _margin(cfg), cfg.p_max, cfg.workers)
    rep = est.to_json()
    out.text("xi.csv", csv_text(est.rows()))
    out.text("xi.json", dumps(rep))
    sys.stdout.write(dumps({k: rep[k] for k in ("direction", "slope", "slope_stderr", "upper_bound",
                                                "positive", "upper_ok", "largest_usable_N")}))
    return EXIT_OK if est.ok else EXIT_STAT


def cmd_oz(cfg: RunConfig, out: Outputs, args: argparse.Namespace) -> int:
    _need(cfg, "p", "Ns")
    u = _resolve_direction(cfg.direction, cfg.d)
    est = oz_prefactor_scan(cfg.p, u, cfg.Ns, cfg.trials, cfg.master_seed, None, _margin(cfg), cfg.p_max, cfg.workers)
    out.text("oz.csv", csv_text([{"N": n, "prefactor": v} for n, v in zip(est.Ns, est.values)]))
    out.text("oz.json", dumps(est.to_json()))
    sys.stdout.write(dumps(est.to_json()))
    return EXIT_OK if est.values and est.positive else EXIT_STAT


def cmd_llt(cfg: RunConfig, out: Outputs, args: argparse.Namespace) -> int:
    _need(cfg, "p", "anchors", "N")
    if len(cfg.anchors) != 3:
        raise ConfigError("--anchors needs exactly three points")
    xi = make_norm(cfg.norm, cfg.d)
    rep = llt_junction_histogram(xi, cfg.p, cfg.anchors, cfg.N, cfg.trials, cfg.master_seed, cfg.beta,
                                 cfg.margin, cfg.workers)
    js = rep.to_json()
    s = rep.stats
    checks = {"mean_within_3se": bool(s is not None and s.mean_ok),
              "cov_within_tol": bool(s is not None and s.cov_rel_error <= cfg.cov_tol),
              "spread_below_1pct": rep.spread_fraction < 0.01}
    js["checks"] = checks
    out.text("llt.json", dumps(js))
    out.text("llt_samples.csv", csv_text([{f"y{i + 1}": float(v) for i, v in enumerate(row)}
                                          for row in rep.samples]))
    sys.stdout.write(dumps({k: js[k] for k in ("conditioned", "mean", "covariance", "predicted_covariance",
                                               "cov_rel_error", "spread_fraction", "checks")}))
    return EXIT_OK if all(checks.values()) else EXIT_STAT


def cmd_tail(cfg: RunConfig, out: Outputs, args: argparse.Namespace) -> int:
    _need(cfg, "p", "anchors", "Ns")
    alphas = cfg.alpha or [0.75]
    xi = make_norm(cfg.norm, cfg.d)
    by_n = [far_junction_tail(cfg.p, cfg.anchors, alphas, N, cfg.trials, cfg.master_seed, xi,
                              cfg.margin, cfg.workers) for N in cfg.Ns]
    rows = [{"N": e.N, "alpha": e.alpha, "radius": e.radius, "E_hits": e.connected.hits, "A_hits": e.far.hits,
             "trials": e.connected.trials, "ratio": e.ratio, "ratio_stderr": e.ratio_stderr}
            for ests in by_n for e in ests]
    ok = all(tail_nonincreasing([ests[j] for ests in by_n]) for j in range(len(alphas)))
    out.text("tail.csv", csv_text(rows))
    out.text("tail.json", dumps({"rows": rows, "nonincreasing_in_N": ok}))
    sys.stdout.write(dumps({"rows": rows, "nonincreasing_in_N": ok}))
    return EXIT_OK if ok else EXIT_STAT


def cmd_renewal(cfg: RunConfig, out: Outputs, args: argparse.Namespace) -> int:
    _need(cfg, "n")
    xi = make_norm(cfg.norm, cfg.d)
    if cfg.event == "verify":
        _need(cfg, "box", "p")
        box = LatticeBox.parse(cfg.box)
        chk = verify_renewal(box, cfg.p, _t(cfg), None, _site(cfg.n), None if cfg.k is None else _site(cfg.k),
                             cfg.eta, cfg.K, xi)
        rep = chk.to_json()
        out.text("renewal.json", dumps(rep))
        sys.stdout.write(dumps(rep))
        return EXIT_OK if chk.residual <= RENEWAL_TOL else EXIT_STAT
    conf = _load_config(cfg)
    k = tuple(conf.box.lower) if cfg.k is None else _site(cfg.k)
    n = _site(cfg.n)
    t = _t(cfg)
    flags = classify_connection(conf, t, None, k, n, cfg.eta, cfg.K, xi)
    rep: dict[str, Any] = {"k": k, "n": n, "t": t, "flags": flags.to_json()}
    if flags.connected_in_strip:
        rep["break_points"] = eta_K_break_points(conf, t, None, k, n, cfg.eta, cfg.K, xi).to_json()
    out.text("renewal.json", dumps(rep))
    sys.stdout.write(dumps(rep))
    return EXIT_OK


def cmd_skeleton(cfg: RunConfig, out: Outputs, args: argparse.Namespace) -> int:
    _need(cfg, "k")
    conf = _load_config(cfg)
    k = _site(cfg.k)
    n1, n2, n3 = _three_sites(cfg)
    xi = make_norm(cfg.norm, conf.box.d)
    witness = event_F(conf, k, n1, n2, n3)
    if witness is None:
        rep: dict[str, Any] = {"F": False}
        code = EXIT_OK
    else:
        tree = tree_skeleton(conf, k, n1, n2, n3, cfg.M, xi, witness, cfg.eta, cfg.R)
        dg = delta_good(tree, cfg.delta)
        rep = {"F": True, "witness": witness.to_json(), "tree": tree.to_json(),
               "delta_good": dict(dg.__dict__)}
        code = EXIT_OK if tree.compatible else EXIT_STAT
    out.text("skeleton.json", dumps(rep))
    sys.stdout.write(dumps(rep))
    return code


def cmd_massgap(cfg: RunConfig, out: Outputs, args: argparse.Namespace) -> int:
    _need(cfg, "p", "lengths")
    xi = make_norm(cfg.norm, cfg.d)
    table = mass_gap_scan(cfg.lengths, cfg.p, cfg.width, cfg.t, cfg.eta, cfg.K, xi)
    js = table.to_json()
    out.text("massgap.csv", csv_text(js["rows"]))
    out.text("massgap.json", dumps(js))
    sys.stdout.write(dumps(js))
    return EXIT_OK if table.strictly_decreasing else EXIT_STAT


COMMANDS: dict[str, Callable[[RunConfig, Outputs, argparse.Namespace], int]] = {
    "sample": cmd_sample, "oracle": cmd_oracle, "xi": cmd_xi, "oz": cmd_oz, "llt": cmd_llt,
    "tail": cmd_tail, "renewal": cmd_renewal, "skeleton": cmd_skeleton, "massgap": cmd_massgap,
}
assert set(COMMANDS) == set(SUBCOMMANDS)


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    t0 = time.perf_counter()
    try:
        cfg = resolve_config(args)
        out = Outputs(cfg.out)
        code = COMMANDS[cfg.subcommand](cfg, out, args)
    except GuardError as exc:
        print(f"percolab: guard refusal: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"percolab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if out.dir:
        inputs = [p for p in (getattr(args, "config", None), cfg.input) if p]
        write_manifest(out.dir, cfg, out.names, inputs, time.perf_counter() - t0, __version__)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
