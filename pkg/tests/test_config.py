import json

import pytest

from skinperm.config import (DEFAULT_OUTPUT_COUNT, RunConfig, output_grid, parse_config,
                             parse_config_dict, slug)
from skinperm.errors import ConfigError

BASE = {"chemical": "triclosan", "t_end": 48.0}


def test_defaults():
    cfg = parse_config_dict(dict(BASE))
    assert cfg.profile.region == "chest" and cfg.profile.age == "old"
    assert cfg.refinement_level == 3 and cfg.c0 == 1.0
    assert len(cfg.output_times) == DEFAULT_OUTPUT_COUNT
    assert cfg.output_times[0] == 0.0 and cfg.output_times[-1] == 48.0
    assert cfg.name == "triclosan" and cfg.emit == ("csv", "summary")


@pytest.mark.parametrize("change", [
    {"colour": "red"}, {"refinement_level": 9}, {"refinement_level": 2.5},
    {"t_end": -1.0}, {"t_end": "48"}, {"c0": 0.0}, {"emit": ["pdf"]},
    {"solver": {"cycle": "X"}}, {"solver": {"speed": 1}}, {"controller": {"tau_min": 0}},
    {"controller": {"fixed_step": 1}}, {"profile": "elbow"}, {"profile": {"h_sc": 20.0}},
    {"profile": {"preset": "chest", "h_sc": -1.0}}, {"chemical": "unobtainium"},
    {"chemical": {"name": "x"}}, {"output_times": {"count": 1}},
    {"output_times": {"spacing": "cubic"}}, {"output_times": [0.0, 60.0]},
])
def test_invalid_configs(change):
    with pytest.raises(ConfigError):
        parse_config_dict({**BASE, **change})


@pytest.mark.parametrize("key", ["chemical", "t_end"])
def test_required_keys(key):
    data = dict(BASE)
    del data[key]
    with pytest.raises(ConfigError, match=key):
        parse_config_dict(data)


def test_profile_overrides():
    cfg = parse_config_dict({**BASE, "profile": {"preset": "chest", "age": "young",
                                                 "h_sc": 40.0}})
    assert cfg.profile.h_sc == 40.0 and cfg.profile.age == "young"


def test_inline_chemical():
    chem = {"name": "Test Dye", "mw": 200.0, "t_lag_h": 2.0, "k_sc": 5.0}
    cfg = parse_config_dict({**BASE, "chemical": chem})
    assert cfg.chemical.params.k_sc == 5.0 and cfg.name == "test_dye"


def test_output_grids():
    assert output_grid(None, 0.0) == (0.0,)
    log = output_grid({"count": 5, "spacing": "log", "first": 0.1}, 100.0)
    assert log[0] == 0.0 and log[1] == pytest.approx(0.1) and log[-1] == 100.0
    assert output_grid([0.0, 1.0, 3.0], 3.0) == (0.0, 1.0, 3.0)


def test_effective_config_round_trip():
    cfg = parse_config_dict({**BASE, "profile": "abdomen/young", "emit": ["vtk", "csv"],
                             "output_times": {"count": 7}, "solver": {"cycle": "W"}})
    data = json.loads(json.dumps(cfg.to_dict()))
    again = parse_config_dict(data)
    assert again == cfg and again.to_dict() == cfg.to_dict()
    assert cfg.emit == ("csv", "vtk")


def test_replace():
    cfg = parse_config_dict(dict(BASE))
    short = cfg.replace(t_end=10.0, refinement_level=1)
    assert short.t_end == 10.0 and short.refinement_level == 1
    assert short.output_times[-1] == 10.0 and len(short.output_times) == DEFAULT_OUTPUT_COUNT
    other = cfg.replace(chemical=parse_config_dict({**BASE, "chemical": "naphthalene"}).chemical)
    assert other.name == "naphthalene"
    with pytest.raises(ConfigError):
        cfg.replace(refinement_level=7)


def test_parse_config_file_and_relative_database(tmp_path):
    (tmp_path / "db.csv").write_text(
        "name,mw,log_kow,t_lag_h,k_depos,k_sc,k_ve,k_de,d_depos,d_sc,d_ve,d_de\n"
        "local dye,250,,4,,7,,,,,,\n")
    (tmp_path / "run.json").write_text(json.dumps(
        {"chemical": "local dye", "t_end": 5.0, "database": "db.csv"}))
    cfg = parse_config(tmp_path / "run.json")
    assert cfg.chemical.params.k_sc == 7.0
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "bad.json")


def test_slug():
    assert slug("2-Ethylhexyl acrylate") == "2_ethylhexyl_acrylate"
    assert slug("  ") == "run"


def test_run_config_rejects_bad_stride():
    cfg = parse_config_dict(dict(BASE))
    with pytest.raises(ConfigError):
        RunConfig(profile=cfg.profile, chemical=cfg.chemical, controller=cfg.controller,
                  vtk_stride=0)
