from __future__ import annotations

import json
import subprocess
import sys

import pytest

from percolab.cli import EXIT_CONFIG, EXIT_GUARD, EXIT_OK, EXIT_STAT, run
from percolab.config import ConfigError, RunConfig, sha256_file
from percolab.lattice import BondConfiguration


def out_text(capsys) -> str:
    return capsys.readouterr().out.strip()


def test_oracle_corner_corner(capsys):
    assert run(["oracle", "--box", "2x2", "--p", "0.5", "--event", "corner-corner", "--rational"]) == EXIT_OK
    assert out_text(capsys) == "7/16"
    assert run(["oracle", "--box", "2x2", "--p", "0.5", "--event", "corner-corner"]) == EXIT_OK
    assert float(out_text(capsys)) == 7 / 16


def test_oracle_events(capsys):
    assert run(["oracle", "--box", "3x3", "--p", "0.5", "--event", "E", "--anchors", "0,0;2,2;2,0"]) == EXIT_OK
    e = float(out_text(capsys))
    assert run(["oracle", "--box", "3x3", "--p", "0.5", "--event", "F", "--k", "1,1",
                "--anchors", "0,1;2,1;1,0"]) == EXIT_OK
    f = float(out_text(capsys))
    assert 0 < f < 1 and 0 < e < 1
    assert run(["oracle", "--box", "0,0:4,1", "--p", "0.3", "--event", "h", "--n", "4,0", "--rational"]) == EXIT_OK
    assert "/" in out_text(capsys)
    assert run(["oracle", "--box", "0,0:3,1", "--p", "0.3", "--event", "renewal", "--n", "3,0",
                "--rational"]) == EXIT_OK
    assert out_text(capsys) == "0"


def test_exit_codes(capsys):
    assert run(["oracle", "--box", "2x2", "--p", "1.5", "--event", "corner-corner"]) == EXIT_CONFIG
    assert run(["oracle", "--box", "2x2", "--p", "0.5", "--event", "corner-corner", "--bogus"]) == EXIT_CONFIG
    assert run(["oracle", "--box", "5x5", "--p", "0.3", "--event", "corner-corner"]) == EXIT_GUARD
    assert run(["xi", "--p", "0", "--Ns", "2,3", "--trials", "10"]) == EXIT_CONFIG
    assert run(["xi", "--p", "0.3", "--Ns", "3,2", "--trials", "10"]) == EXIT_CONFIG
    assert run(["xi", "--p", "0.6", "--Ns", "2,3", "--trials", "10"]) == EXIT_CONFIG
    assert run(["oracle", "--box", "2x2", "--p", "0.5"]) == EXIT_CONFIG
    assert run(["massgap", "--p", "0.3", "--lengths", "2,3,4,5"]) == EXIT_STAT
    assert run(["massgap", "--p", "0.3", "--lengths", "4,5"]) == EXIT_OK
    capsys.readouterr()


def test_module_entry_point_exit_code():
    r = subprocess.run([sys.executable, "-m", "percolab.cli", "oracle", "--box", "5x5", "--p", "0.3",
                        "--event", "corner-corner"], capture_output=True, text=True)
    assert r.returncode == EXIT_GUARD and "guard" in r.stderr


def test_renewal_verify(capsys):
    assert run(["renewal", "--event", "verify", "--box", "0,0:4,1", "--p", "0.2", "--n", "4,0"]) == EXIT_OK
    rep = json.loads(capsys.readouterr().out)
    assert rep["exact_residual"] == "0"


def test_sample_dump_and_reload(tmp_path, capsys):
    dump = tmp_path / "c.bin"
    assert run(["sample", "--box", "6x6", "--p", "0.5", "--seed", "3", "--trial", "7", "--dump", str(dump)]) == 0
    rep = json.loads(capsys.readouterr().out)
    conf = BondConfiguration.from_bytes(dump.read_bytes())
    assert conf.n_open == rep["n_open"] and conf.trial == 7
    assert run(["sample", "--input", str(dump)]) == 0
    assert json.loads(capsys.readouterr().out) == rep


def test_skeleton_and_flags(tmp_path, capsys):
    paths = [[(x, 3) for x in range(7)], [(3, y) for y in range(3, 7)], [(3, y) for y in range(0, 4)]]
    conf = BondConfiguration.from_paths(__import__("percolab").LatticeBox.parse("0,0:6,6"), paths)
    f = tmp_path / "c.bin"
    f.write_bytes(conf.to_bytes())
    assert run(["skeleton", "--input", str(f), "--k", "3,3", "--anchors", "6,3;3,6;3,0", "--M", "2"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["F"] and rep["tree"]["compatible"]
    # the spur towards (0, 3) is a leaf behind trunk 1: one bad leaf against a threshold of 0.75
    assert rep["tree"]["bad_leaves"] == [[[0, 3]], [], []]
    assert rep["delta_good"]["bad_leaf_counts"] == [1, 0, 0] and not rep["delta_good"]["good"]
    assert run(["skeleton", "--input", str(f), "--k", "3,3", "--anchors", "6,6;3,6;3,0"]) == 0
    assert json.loads(capsys.readouterr().out) == {"F": False}
    assert run(["renewal", "--input", str(f), "--k", "0,3", "--n", "6,3"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["flags"]["connected_in_strip"]


def _hashes(d):
    return json.loads((d / "manifest.json").read_text())["outputs"]


REPLAYS = [
    ["xi", "--p", "0.3", "--Ns", "2,3,4,5", "--trials", "140000", "--seed", "5"],
    ["tail", "--p", "0.45", "--anchors=-1/2,0;1/2,0;0,3/4", "--Ns", "6,8", "--alpha", "0.6,0.8",
     "--trials", "140000", "--margin", "2"],
    ["llt", "--p", "0.45", "--anchors=-1/2,0;1/2,0;0,3/4", "--N", "6", "--trials", "140000", "--margin", "2"],
    ["oracle", "--box", "3x3", "--p", "0.3", "--event", "corner-corner", "--chunks", "3"],
    ["massgap", "--p", "0.3", "--lengths", "1,2,3,4"],
]


@pytest.mark.parametrize("argv", REPLAYS, ids=lambda a: a[0])
def test_manifest_replay_is_byte_identical(tmp_path, capsys, argv):
    first = tmp_path / "a"
    code = run(argv + ["--out", str(first), "--workers", "1"])
    man = json.loads((first / "manifest.json").read_text())
    assert man["config"]["subcommand"] == argv[0] and man["version"]
    assert "wall_clock_seconds" in man
    for name, digest in man["outputs"].items():
        assert sha256_file(first / name) == digest
    second = tmp_path / "b"
    replay = [argv[0], "--config", str(first / "manifest.json"), "--out", str(second), "--workers", "3"]
    assert run(replay) == code
    assert _hashes(first) == _hashes(second)
    for name in man["outputs"]:
        assert (first / name).read_bytes() == (second / name).read_bytes()
    capsys.readouterr()


def test_config_round_trip(tmp_path):
    cfg = RunConfig("xi", p=0.3, Ns=[4, 6, 8], trials=1000, master_seed=9).validate()
    path = tmp_path / "c.json"
    path.write_text(cfg.dumps())
    again = RunConfig.load(path)
    assert again == cfg and again.dumps() == cfg.dumps()


def test_config_rejects_unknown_keys_and_bad_values(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"subcommand": "xi", "frobnicate": 1})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"subcommand": "xi", "eta": 1.5})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"subcommand": "xi", "schema_version": 99})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"subcommand": "nope"})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        RunConfig.load(bad)


def test_flags_override_config_file(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(RunConfig("oracle", p=0.5, box="2x2", event="corner-corner").dumps())
    assert run(["oracle", "--config", str(path), "--rational"]) == 0
    assert out_text(capsys) == "7/16"
    assert run(["oracle", "--config", str(path), "--p", "0.3", "--rational"]) == 0
    assert out_text(capsys) != "7/16"


def test_no_files_without_out(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert run(["massgap", "--p", "0.3", "--lengths", "4,5"]) == 0
    assert list(tmp_path.iterdir()) == []
    capsys.readouterr()


def test_csv_outputs(tmp_path, capsys):
    assert run(["xi", "--p", "0.3", "--Ns", "2,3,4", "--trials", "20000", "--out", str(tmp_path)]) == 0
    head = (tmp_path / "xi.csv").read_text().splitlines()[0]
    assert head == "N,length,hits,trials,estimate,stderr,neglog,neglog_se"
    capsys.readouterr()
