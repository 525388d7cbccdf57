import json

import pytest

from ipdiff.main import EXIT_CONFIG, EXIT_OK, build_parser, load_config, main
from ipdiff.models import ConfigError


@pytest.fixture(autouse=True)
def isolated(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    for var in ("IPDIFF_OUT", "IPDIFF_THREADS", "IPDIFF_SEED"):
        monkeypatch.delenv(var, raising=False)


def test_laws_command(tmp_path):
    out = tmp_path / "laws"
    assert main(["laws", "--out", str(out)]) == EXIT_OK
    laws = json.loads((out / "laws.json").read_text())
    assert any(entry["name"] == "leftmost-semigroup" for entry in laws["laws"])
    config = json.loads((out / "config.json").read_text())
    assert config["alpha"] == 0.5
    assert laws["config_hash"] == config["config_hash"]


@pytest.mark.parametrize("argv", [
    ["laws", "--alpha", "0.5", "--d", "0.5"],
    ["laws", "--alpha", "1.5"],
    ["verify", "--suite", "no-such-suite"],
    ["simulate", "--no-such-flag"],
    ["simulate", "--mode", "type0", "--u", "0.5", "--levels", "0.25,1"],
    ["laws", "--config", "missing.json"],
])
def test_configuration_errors(tmp_path, argv):
    assert main(argv + ["--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_simulate_type1_level_zero(tmp_path):
    argv = ["simulate", "--levels", "0", "--eps", "0.05", "--replicates", "2", "--seed", "3",
            "--out", str(tmp_path / "sim")]
    assert main(argv) == EXIT_OK
    first = (tmp_path / "sim" / "levels.csv").read_bytes()
    lines = first.decode().splitlines()
    assert lines[0].startswith("# config_hash=")
    assert lines[1].startswith("replicate,level,total_mass,block_count,block_1")
    assert lines[2] == "0,0,1,1,1,0,0,0,0"
    assert lines[3] == "1,0,1,1,1,0,0,0,0"
    assert (tmp_path / "sim" / "levels_r00001.csv").exists()
    assert main(argv) == EXIT_OK
    assert (tmp_path / "sim" / "levels.csv").read_bytes() == first


def test_simulate_dumps_paths(tmp_path):
    out = tmp_path / "dump"
    argv = ["simulate", "--levels", "0,0.1", "--eps", "0.05", "--replicates", "1", "--dump-paths", "--out", str(out)]
    assert main(argv) == EXIT_OK
    header = json.loads((out / "paths_r00000.ndjson").read_text().splitlines()[0])
    assert header["kind"] == "scaffolding"
    assert header["spindle_mode"] == "grid"


def test_verify_trivial(tmp_path):
    out = tmp_path / "verify"
    assert main(["verify", "--suite", "trivial", "--eps", "0.01", "--out", str(out)]) == EXIT_OK
    reports = json.loads((out / "report.json").read_text())
    assert all(r["passed"] for r in reports)
    assert (out / "summary.csv").exists() and (out / "timings.csv").exists()


def test_config_precedence(tmp_path):
    cfg_file = tmp_path / "run.json"
    cfg_file.write_text(json.dumps({"eps": 0.5, "replicates": 7, "d": 0.3, "config_hash": "stale"}))
    args = build_parser().parse_args(["laws", "--config", str(cfg_file), "--eps", "0.01"])
    cfg = load_config(args, environ={"IPDIFF_SEED": "9", "IPDIFF_THREADS": "3"})
    assert cfg.eps == 0.01
    assert cfg.replicates == 7
    assert cfg.params.alpha == pytest.approx(0.7)
    assert cfg.master_seed == 9 and cfg.threads == 3

    args = build_parser().parse_args(["laws", "--config", str(cfg_file), "--alpha", "0.4"])
    cfg = load_config(args, environ={})
    assert cfg.d is None and cfg.alpha == 0.4


def test_bad_environment(tmp_path):
    args = build_parser().parse_args(["laws"])
    with pytest.raises(ConfigError):
        load_config(args, environ={"IPDIFF_THREADS": "many"})


def test_config_hash_is_stable():
    args = build_parser().parse_args(["laws", "--eps", "0.01"])
    a = load_config(args, environ={})
    b = load_config(args, environ={})
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != load_config(build_parser().parse_args(["laws"]), environ={}).config_hash()
