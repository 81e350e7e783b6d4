import hashlib
import json
from pathlib import Path

import pytest

from nordbess.cli import EXIT_DATA, EXIT_OK, EXIT_SOLVER, main
from nordbess.config import ConfigError, RunConfig, apply_overrides, load_config
from nordbess.market_data import DataError

ROOT = Path(__file__).resolve().parents[1]
TOY = ROOT / "configs" / "toy.toml"


def run(cmd, out, *extra):
    return main([cmd, "-c", str(TOY), "-o", str(out), *extra])


def tree(out):
    return {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}


def test_defaults_build():
    cfg = RunConfig()
    assert cfg.bess.params().steps_per_hour == 1
    assert len(cfg.bids.build().pairs) == 4
    assert len(cfg.gam.grid()) == 25


def test_overrides_parse_toml_literals():
    raw = apply_overrides({"bess": {"ilf": 0.1}}, ["bess.ilf=0.2", "bess.soc_mode=flexible", "seed=5",
                                                   "bids.freq_levels=[0.9, 0.3]", "bess.firm_spot=false"])
    assert raw == {"bess": {"ilf": 0.2, "soc_mode": "flexible", "firm_spot": False},
                   "seed": 5, "bids": {"freq_levels": [0.9, 0.3]}}


def test_override_does_not_mutate_input():
    raw = {"bess": {"ilf": 0.1}}
    apply_overrides(raw, ["bess.ilf=0.3"])
    assert raw["bess"]["ilf"] == 0.1


@pytest.mark.parametrize("item", ["noequals", "seed.x=1"])
def test_bad_overrides(item):
    with pytest.raises(ConfigError):
        apply_overrides({"seed": 1}, [item])


def test_load_toy_with_overrides():
    cfg = load_config(TOY, ["bess.soc_mode=flexible"])
    assert cfg.seed == 7 and cfg.bess.soc_mode == "flexible" and cfg.bess.horizon_hours == 6
    assert cfg.price_file("DK1", "SPOT") == TOY.parent / "toy/prices/dk1_spot.csv"
    assert [r["name"] for r in cfg.experiment.runs] == ["fixed", "flexible", "gam"]


def test_unknown_keys_rejected(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("[bess]\nsoc_mod = 'fixed'\n")
    with pytest.raises(ConfigError, match="soc_mod"):
        load_config(p)
    p.write_text("colour = 1\n")
    with pytest.raises(ConfigError, match="colour"):
        load_config(p)


def test_missing_config_and_bad_toml(tmp_path):
    with pytest.raises(DataError, match="missing"):
        load_config(tmp_path / "none.toml")
    p = tmp_path / "c.toml"
    p.write_text("[bess\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_digest_ignores_output_dir():
    a = load_config(TOY, ["output_dir=x"])
    b = load_config(TOY, ["output_dir=y"])
    assert a.digest() == b.digest()
    assert a.digest() != load_config(TOY, ["seed=8"]).digest()


@pytest.mark.parametrize("cmd", ["ingest", "forecast", "simulate-meb", "optimize", "export-lp", "experiment"])
def test_command_smoke(cmd, tmp_path):
    assert run(cmd, tmp_path) == EXIT_OK
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == cmd and manifest["files"]
    for entry in manifest["files"]:
        data = (tmp_path / entry["path"]).read_bytes()
        assert hashlib.sha256(data).hexdigest() == entry["sha256"]
        assert len(data) == entry["bytes"]


def test_manifest_accumulates_commands(tmp_path):
    assert run("ingest", tmp_path) == EXIT_OK
    assert run("export-lp", tmp_path) == EXIT_OK
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["commands"] == ["export-lp", "ingest"]
    listed = {e["path"] for e in manifest["files"]}
    assert "ingest/summary.json" in listed and "export/model.lp" in listed


def test_optimize_outputs_valid_schedule(tmp_path):
    assert run("optimize", tmp_path) == EXIT_OK
    status = json.loads((tmp_path / "optimize" / "status.json").read_text())
    assert status["validation"]["ok"]
    assert status["status"] in ("OPTIMAL", "GAP_REACHED")


def test_missing_input_exit_code(tmp_path, capsys):
    assert run("ingest", tmp_path, "--set", "data.price_dir=nowhere") == EXIT_DATA
    assert "nowhere" in capsys.readouterr().err


def test_bad_dt_exit_code(tmp_path, capsys):
    assert run("optimize", tmp_path, "--set", "bess.dt_minutes=7") == EXIT_DATA
    assert "dt_minutes" in capsys.readouterr().err


def test_unknown_key_exit_code(tmp_path):
    assert run("optimize", tmp_path, "--set", "solver.colour=1") == EXIT_DATA


def test_solver_limit_exit_code(tmp_path, capsys):
    assert run("optimize", tmp_path, "--set", "solver.node_limit=0") == EXIT_SOLVER
    assert "solver error" in capsys.readouterr().err


def test_log_level_env(tmp_path, monkeypatch, capsys):
    import logging

    monkeypatch.setenv("NORDBESS_LOG_LEVEL", "INFO")
    root = logging.getLogger()
    saved = root.handlers[:], root.level
    root.handlers = []
    try:
        assert run("ingest", tmp_path) == EXIT_OK
        assert "ingested DK1 SPOT" in capsys.readouterr().err
    finally:
        root.handlers, _ = saved
        root.setLevel(saved[1])


@pytest.mark.parametrize("cmd", ["forecast", "optimize"])
def test_byte_identical_reruns(cmd, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(cmd, a) == EXIT_OK and run(cmd, b) == EXIT_OK
    assert tree(a) == tree(b)
