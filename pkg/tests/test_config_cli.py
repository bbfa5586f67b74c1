import json
import os
from pathlib import Path

import pytest
import yaml

from rwdre import ConfigError, validate_config
from rwdre.cli import main
from rwdre.config import build_environment, build_observable, build_rates, load, rate_family_builder

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

LLN = {"kind": "lln", "seed": 3, "replicas": 40, "horizon": 20,
       "environment": {"kind": "independent_refresh", "r": 1.0, "nu_p": 0.5, "L": 64},
       "walker": {"jumps": [{"z": 1, "base": 1.0}]}, "expect": {"speed": 1.0}}


def _write(tmp_path, raw, name="exp.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(raw))
    return p


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_validate(path):
    cfg = load(path)
    if "environment" in cfg.raw:
        model = build_environment(cfg.raw["environment"])
        if cfg.kind == "einstein":
            for e in cfg.grids["eps"]:
                rate_family_builder(cfg.raw["walker"], model.d)(e)
        elif "walker" in cfg.raw:
            build_rates(cfg.raw["walker"], model.d)
        if "observable" in cfg.raw:
            build_observable(cfg.raw["observable"], model.d)


def test_missing_walker_names_key(tmp_path, capsys):
    raw = {k: v for k, v in LLN.items() if k != "walker"}
    code = main(["--config", str(_write(tmp_path, raw)), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "missing key: walker" in capsys.readouterr().err
    with pytest.raises(ConfigError, match="walker.jumps"):
        validate_config({**LLN, "walker": {}})


def test_rates_alias_matches_jumps():
    jumps = [{"z": 1, "base": 1.0, "slope": 0.3, "site": 0}, {"z": -1, "base": 1.0, "slope": -0.3, "site": 0}]
    a = build_rates({"jumps": jumps}, 1)
    b = build_rates(validate_config({**LLN, "walker": {"rates": jumps}}).raw["walker"], 1)
    assert a.jumps == b.jumps
    with pytest.raises(ConfigError, match="not both"):
        validate_config({**LLN, "walker": {"jumps": jumps, "rates": jumps}})


def test_unknown_keys_and_kind_rejected():
    with pytest.raises(ConfigError, match="bogus"):
        validate_config({**LLN, "bogus": 1})
    with pytest.raises(ConfigError, match="unknown experiment kind"):
        validate_config({**LLN, "kind": "nope"})
    with pytest.raises(ConfigError, match="colour"):
        validate_config({**LLN, "environment": {**LLN["environment"], "colour": "red"}})


@pytest.mark.parametrize("bad", [{"seed": -1}, {"seed": 2**64}, {"replicas": 0}, {"grids": {"t": [1, 0.5]}},
                                 {"horizon": -1}, {"output": {"format": "xml"}},
                                 {"coupling": {"restart_mode": "sometimes"}}, {"phi": {"family": "cosh"}}, {"chain": {"Q": [[0.0, 1.0]]}},
                                 {"chain": {"Q": [[-1.0, 1.0], [1.0, -1.0]], "f": [0.0]}},
                                 {"chain": {"Q": [[-1.0, 1.0], [1.0, -1.0]], "start": 2}}, {"chain": {"f": [1]}}])
def test_invalid_values_rejected(bad):
    with pytest.raises(ConfigError):
        validate_config({**LLN, **bad})


def test_invalid_yaml_is_config_error(tmp_path):
    p = tmp_path / "broken.yaml"
    p.write_text("kind: [unclosed")
    assert main(["--config", str(p), "--out", str(tmp_path)]) == 2


def test_invalid_model_parameter_is_config_error(tmp_path):
    raw = {**LLN, "environment": {"kind": "independent_refresh", "r": -1.0}}
    assert main(["--config", str(_write(tmp_path, raw)), "--out", str(tmp_path / "o")]) == 2


def test_appendix_config_passes(tmp_path, capsys):
    code = main(["--config", str(CONFIGS / "appendix.yaml"), "--out", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert "chain_qv_equals_variance" in out
    assert (tmp_path / "appendix_suite_chain.csv").exists()


def test_restart_mode_reports_decouple_count(tmp_path):
    raw = {"kind": "decoupling", "seed": 5, "replicas": 200, "horizon": 5,
           "environment": {"kind": "independent_refresh", "r": 1.0, "nu_p": 0.5, "L": 64},
           "walker": {"jumps": [{"z": 1, "base": 1.0, "slope": 0.2, "site": 0},
                                {"z": -1, "base": 1.0, "slope": -0.2, "site": 0}]},
           "coupling": {"restart_mode": "recouple_on_decouple"}}
    assert main(["--config", str(_write(tmp_path, raw)), "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "decoupling_summary.json").read_text())["summary"]
    assert summary["decouple_count"]["mean"] > 0


def test_lln_run_writes_artifacts(tmp_path):
    code = main(["--config", str(_write(tmp_path, LLN)), "--out", str(tmp_path / "o")])
    assert code == 0
    doc = json.loads((tmp_path / "o" / "lln_summary.json").read_text())
    assert doc["kind"] == "lln"
    assert set(doc["metadata"]) == {"seed", "replicas", "threads", "git_describe", "wall_time_s"}
    assert doc["metadata"]["seed"] == 3 and doc["metadata"]["replicas"] == 40
    assert all(set(a) == {"name", "lhs", "rhs", "tolerance", "pass", "flag"} for a in doc["assertions"])
    assert (tmp_path / "o" / "lln_lln.csv").read_text().startswith("coordinate,")


def test_failed_assertion_exit_code(tmp_path):
    raw = {**LLN, "expect": {"speed": 5.0}}
    assert main(["--config", str(_write(tmp_path, raw)), "--out", str(tmp_path / "o")]) == 1


def test_overrides_apply(tmp_path):
    main(["--config", str(_write(tmp_path, LLN)), "--out", str(tmp_path / "o"), "--seed", "9", "--replicas", "12",
          "--format", "json"])
    doc = json.loads((tmp_path / "o" / "lln_summary.json").read_text())
    assert doc["metadata"]["seed"] == 9 and doc["metadata"]["replicas"] == 12
    assert not list((tmp_path / "o").glob("*.csv"))


def test_rerun_is_byte_identical(tmp_path):
    cfg = _write(tmp_path, LLN)
    main(["--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["--config", str(cfg), "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "lln_lln.csv").read_bytes() == (tmp_path / "b" / "lln_lln.csv").read_bytes()


def test_threads_do_not_change_results(tmp_path):
    cfg = _write(tmp_path, LLN)
    main(["--config", str(cfg), "--out", str(tmp_path / "a"), "--threads", "1"])
    main(["--config", str(cfg), "--out", str(tmp_path / "b"), "--threads", "2"])
    assert (tmp_path / "a" / "lln_lln.csv").read_bytes() == (tmp_path / "b" / "lln_lln.csv").read_bytes()


@pytest.mark.skipif(hasattr(os, "geteuid") and os.geteuid() == 0, reason="root ignores directory permissions")
def test_unwritable_output_is_config_error(tmp_path):
    locked = tmp_path / "locked"
    locked.mkdir()
    locked.chmod(0o500)
    try:
        assert main(["--config", str(_write(tmp_path, LLN)), "--out", str(locked / "o")]) == 2
    finally:
        locked.chmod(0o700)


def test_output_path_that_is_a_file_is_config_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["--config", str(_write(tmp_path, LLN)), "--out", str(blocker / "o")]) == 2


def test_glauber_clt_formula_unavailable_is_reported(tmp_path):
    raw = {"kind": "clt", "seed": 1, "replicas": 60, "horizon": 10,
           "environment": {"kind": "weak_glauber", "r": 1.0, "beta_int": 0.05, "L": 64},
           "walker": {"rates": [{"z": 1, "base": 1.0, "slope": 0.2}, {"z": -1, "base": 1.0, "slope": -0.2}]}}
    code = main(["--config", str(_write(tmp_path, raw)), "--out", str(tmp_path / "o")])
    assert code in (0, 1)
    doc = json.loads((tmp_path / "o" / "clt_summary.json").read_text())
    assert doc["summary"]["flag"].startswith("formula unavailable")
