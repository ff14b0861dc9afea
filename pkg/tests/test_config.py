import json
from dataclasses import replace

import pytest

from config import (
    GridSpec,
    SimulationConfig,
    SweepPlan,
    config_to_dict,
    parse_config,
    parse_config_dict,
    plan_digest,
)
from exceptions import ConfigError
from utils import config_digest


def test_empty_object_gives_study_defaults():
    plan, cfg, grid_spec = parse_config_dict({})
    assert plan.designs == ("ID", "MD1", "MD2")
    assert plan.speeds == (1.0, 2.0, 3.0, 4.0, 5.0)
    assert plan.target_speed == 2.3
    assert cfg.nu == 1.5e-5
    assert cfg.rho == 1.0
    assert cfg.inlet_mode == "uniform"
    assert grid_spec == GridSpec()


def test_single_speed_plan():
    plan, _, _ = parse_config_dict({"speeds": [2.3]})
    assert plan.speeds == (2.3,)


@pytest.mark.parametrize("speeds", [[-1], [0], [2, 1], [1, 1]])
def test_invalid_speeds(speeds):
    with pytest.raises(ConfigError):
        parse_config_dict({"speeds": speeds})


def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match="viscosity"):
        parse_config_dict({"viscosity": 1e-5})


def test_unknown_nested_key_is_named():
    with pytest.raises(ConfigError) as excinfo:
        parse_config_dict({"grid": {"nz": 4}})
    assert excinfo.value.path == "$.grid.nz"


@pytest.mark.parametrize("data, path", [
    ({"grid": {"nx": "big"}}, "$.grid.nx"),
    ({"speeds": [1, "2"]}, "$.speeds[1]"),
    ({"cfl": True}, "$.cfl"),
    ({"poisson": {"max_iter": 1.5}}, "$.poisson.max_iter"),
    ({"designs": ["ID", 3]}, "$.designs[1]"),
])
def test_type_mismatch_reports_json_path(data, path):
    with pytest.raises(ConfigError) as excinfo:
        parse_config_dict(data)
    assert excinfo.value.path == path
    assert path in str(excinfo.value)


@pytest.mark.parametrize("data", [{"cfl": 5}, {"nu": 0}, {"t_end": 0}, {"grid": {"nx": 8}},
                                  {"inlet_mode": "log"}, {"designs": ["MD9"]}, {"workers": 0}])
def test_invariant_violations(data):
    with pytest.raises(ConfigError):
        parse_config_dict(data)


def test_round_trip_is_identity():
    data = {
        "designs": ["md2", "ID"],
        "speeds": [1, 2.5],
        "target_speed": 2,
        "nu": 1e-4,
        "cfl": 0.2,
        "t_end": 3,
        "inlet_mode": "paper_shear",
        "grid": {"nx": 64, "ny": 32, "Lx_over_D": 20},
        "poisson": {"tol": 1e-7},
        "seed_note": "round trip",
        "overrides": {"MD2@2.5": {"cfl": 0.05}},
        "onset": {"min_zero_crossings": 4},
    }
    parsed = parse_config_dict(data)
    again = parse_config_dict(json.loads(json.dumps(config_to_dict(*parsed))))
    assert again == parsed


def test_parse_config_file(tmp_path):
    path = tmp_path / "study.json"
    path.write_text(json.dumps({"speeds": [1, 2], "re_surrogate": 150}), encoding="utf-8")
    plan, cfg, _ = parse_config(path)
    assert plan.speeds == (1.0, 2.0)
    assert cfg.re_surrogate == 150.0


def test_parse_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{speeds: [1]", encoding="utf-8")
    with pytest.raises(ConfigError):
        parse_config(broken)


def test_overrides_apply_per_design_then_per_case():
    plan, cfg, _ = parse_config_dict({"overrides": {"md2": {"cfl": 0.2}, "MD2@2": {"cfl": 0.05}}})
    assert plan.case_config(cfg, "MD2", 1.0).cfl == 0.2
    assert plan.case_config(cfg, "MD2", 2.0).cfl == 0.05
    assert plan.case_config(cfg, "ID", 2.0).cfl == cfg.cfl
    assert plan.case_config(cfg, "ID", 2.0).U == 2.0


@pytest.mark.parametrize("overrides", [{"MD2": {"speed": 1}}, {"MD4": {"cfl": 0.1}},
                                       {"ID@fast": {"cfl": 0.1}}, {"ID": {"cfl": 5}}])
def test_invalid_overrides(overrides):
    with pytest.raises(ConfigError):
        parse_config_dict({"overrides": overrides})


def test_digest_ignores_key_order_and_workers():
    assert config_digest({"a": 1, "b": [1, 2]}) == config_digest({"b": [1, 2], "a": 1})
    plan, cfg, grid_spec = parse_config_dict({})
    assert plan_digest(plan, cfg, grid_spec) == plan_digest(replace(plan, workers=8), cfg, grid_spec)
    assert plan_digest(plan, cfg, grid_spec) != plan_digest(plan, replace(cfg, nu=1e-4), grid_spec)


def test_derived_quantities():
    cfg = SimulationConfig(U=2.0, re_surrogate=100.0)
    assert cfg.effective_nu(0.1) == pytest.approx(2e-3)
    assert SimulationConfig(U=2.0).effective_nu(0.1) == 1.5e-5
    assert cfg.end_time(0.1) == pytest.approx(150 * 0.1 / 2.0)
    assert replace(cfg, t_end=4.0).end_time(0.1) == 4.0


def test_grid_spec_centres_the_body():
    grid = GridSpec(nx=64, ny=32).build(0.1, (0.0, 0.0))
    assert grid.origin == pytest.approx((-0.8, -0.8))
    assert grid.lx == pytest.approx(3.2)
    assert grid.ly == pytest.approx(1.6)
    assert grid.dx == pytest.approx(0.05)


def test_sweep_plan_validation():
    with pytest.raises(ConfigError):
        SweepPlan(designs=())
    with pytest.raises(ConfigError):
        SweepPlan(transient_fraction=1.0)


def test_written_config_leaves_out_worker_count():
    plan, cfg, grid_spec = parse_config_dict({"workers": 4, "speeds": [1, 2]})
    data = config_to_dict(plan, cfg, grid_spec)
    assert "workers" not in data
    assert config_to_dict(replace(plan, workers=1), cfg, grid_spec) == data


def test_shear_inlet_constants_are_configurable():
    plan, cfg, grid_spec = parse_config_dict({"inlet_mode": "paper_shear", "shear_slope_factor": 4,
                                              "shear_offset": 0.02})
    assert (cfg.shear_slope_factor, cfg.shear_offset) == (4.0, 0.02)
    assert isinstance(cfg.shear_slope_factor, float)
    assert parse_config_dict(json.loads(json.dumps(config_to_dict(plan, cfg, grid_spec))))[1] == cfg
    with pytest.raises(ConfigError):
        parse_config_dict({"shear_slope_factor": 0})
    with pytest.raises(ConfigError):
        parse_config_dict({"shear_offset": "low"})
