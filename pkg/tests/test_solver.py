from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from analysis import (
    count_zero_crossings,
    dominant_frequency,
    drag_coefficient,
    dynamic_pressure_force,
    strouhal,
    trim_transient,
)
from config import Grid, GridSpec, SimulationConfig
from exceptions import DegenerateTimestepError, EmptyRunError, NumericalBlowupError, SamplingError
from geometry import circle, composite, frontal_width, rasterize
from solver import (
    FlowSolver,
    FlowState,
    ForceHistory,
    divergence,
    face_coordinates,
    inlet_profile,
    vorticity,
)


def uniform_solver(n=16, **cfg_kwargs):
    grid = Grid(nx=n, ny=n, dx=0.0025, dy=0.0025)
    return FlowSolver(grid, composite(), SimulationConfig(**cfg_kwargs))


def cylinder_solver(nx=128, ny=64, **cfg_kwargs):
    shape = circle((0.0, 0.0), 0.1)
    grid = GridSpec(nx=nx, ny=ny).build(frontal_width(shape), shape.center)
    cfg = SimulationConfig(re_surrogate=100.0, **cfg_kwargs)
    return FlowSolver(grid, shape, cfg)


@pytest.mark.parametrize("U, y, expected", [(1.0, 0.05, 0.5), (1.0, -0.05, 0.0), (2.3, 0.0, 0.575),
                                            (1.0, -0.2, 0.0)])
def test_inlet_profile(U, y, expected):
    assert inlet_profile(U, y, SimulationConfig(inlet_mode="paper_shear")) == pytest.approx(expected)


def test_initialize_uniform():
    solver = cylinder_solver()
    state = solver.initialize()
    assert not state.p.any()
    fluid_u = ~solver.mask.u_face_solid()
    assert np.all(state.u[:, 1:-1][fluid_u] == 1.0)
    assert not state.u[:, 1:-1][solver.mask.u_face_solid()].any()
    assert not state.v.any()


def test_initialize_shear_profile_in_every_column():
    grid = Grid.from_extent(16, 16, 1.0, 1.0)
    cfg = SimulationConfig(inlet_mode="paper_shear")
    state = FlowSolver(grid, composite(), cfg).initialize()
    _, yu, _, _ = face_coordinates(grid)
    expected = inlet_profile(1.0, yu[0, 1:-1], cfg)
    for column in state.u[:, 1:-1]:
        assert np.allclose(column, expected)


def test_cfl_dt_advective_limit():
    solver = uniform_solver(cfl=0.5)
    assert solver.cfl_dt(solver.initialize()) == pytest.approx(0.00125)
    doubled = FlowSolver(solver.grid, composite(), SimulationConfig(cfl=1.0))
    assert doubled.cfl_dt(doubled.initialize()) == pytest.approx(0.0025)


def test_cfl_dt_diffusive_limit_and_degenerate_case():
    solver = uniform_solver(cfl=0.5)
    state = solver.initialize()
    state.u[:] = 0.0
    assert solver.cfl_dt(state) == pytest.approx(0.5 * 0.25 * 0.0025 ** 2 / 1.5e-5)
    with pytest.raises(DegenerateTimestepError):
        solver.cfl_dt(replace(state, nu=0.0))


def test_boundary_conditions():
    solver = cylinder_solver()
    state = solver.initialize()
    state.u[0, :] = 7.0
    state.v[:, -1] = 3.0
    bounded = solver.apply_boundary_conditions(state)
    assert np.all(bounded.u[0, :] == 1.0)
    assert not bounded.v[:, -1].any()
    assert not bounded.v[:, 0].any()
    # the input state is left alone
    assert np.all(state.u[0, :] == 7.0)


def test_outlet_pressure_is_zero():
    solver = cylinder_solver(nx=64, ny=32)
    state = solver.initialize()
    state.p = np.random.default_rng(5).standard_normal(state.p.shape)
    padded = state.padded_pressure()
    assert np.all(0.5 * (padded[-2, 1:-1] + padded[-1, 1:-1]) == 0.0)


def test_uniform_flow_is_preserved():
    solver = uniform_solver()
    state = solver.initialize()
    u0, v0 = state.u.copy(), state.v.copy()
    for _ in range(1000):
        state, fx, fy = solver.step(state)
        assert fx == 0.0 and fy == 0.0
    assert np.max(np.abs(state.u - u0)) <= 1e-12
    assert np.max(np.abs(state.v - v0)) <= 1e-12
    assert state.step_index == 1000
    assert state.time == pytest.approx(1000 * 0.1 * 0.0025)


def test_predict_keeps_rest_at_rest():
    solver = uniform_solver()
    state = solver.initialize()
    state.u[:] = 0.0
    u_star, v_star = solver.predict_velocity(state, 1e-3)
    assert not u_star[1:, 1:-1].any()
    assert not v_star.any()


def test_predict_flags_non_finite_velocity():
    solver = uniform_solver()
    state = solver.initialize()
    state.u[5, 5] = np.nan
    with pytest.raises(NumericalBlowupError) as excinfo:
        solver.predict_velocity(state, 1e-3)
    assert excinfo.value.step == 0


def test_step_is_deterministic():
    first = cylinder_solver(nx=64, ny=32)
    second = cylinder_solver(nx=64, ny=32)
    a, b = first.initialize(), second.initialize()
    for _ in range(5):
        a, fxa, fya = first.step(a)
        b, fxb, fyb = second.step(b)
        assert (fxa, fya) == (fxb, fyb)
    assert np.array_equal(a.u, b.u)
    assert np.array_equal(a.v, b.v)
    assert np.array_equal(a.p, b.p)


def test_first_step_drag_points_downstream():
    solver = cylinder_solver()
    state, fx, fy = solver.step(solver.initialize())
    assert fx > 0.0
    assert abs(fy) < 0.1 * fx
    assert not state.u[:, 1:-1][solver.mask.u_face_solid()].any()
    assert not state.v[1:-1, :][solver.mask.v_face_solid()].any()


def test_projection_meets_divergence_bound():
    solver = cylinder_solver(nx=64, ny=32)
    state = solver.initialize()
    bound = solver.cfg.poisson_tolerance * solver.cfg.U / solver.grid.dx
    for _ in range(10):
        state, _, _ = solver.step(state)
        assert state.projected_divergence <= 1.01 * bound


def test_projection_removes_periodic_ramp_divergence():
    grid = Grid.from_extent(32, 32, 1.0, 1.0)
    solver = FlowSolver(grid, composite(), SimulationConfig(boundary="periodic"))
    state = solver.initialize()
    xu, _, _, _ = face_coordinates(grid)
    state.u = xu.copy()
    state = solver.apply_boundary_conditions(state)
    projected = solver.project(state.u, state.v, state, 0.01)
    assert np.abs(divergence(projected.u, projected.v, grid)).max() <= 1.01e-6 * 1.0 / grid.dx


def test_projection_of_divergence_free_field_changes_nothing():
    solver = uniform_solver()
    state = solver.initialize()
    projected = solver.project(state.u, state.v, state, 1e-3)
    assert np.array_equal(projected.u, state.u)
    assert not projected.p.any()


def test_enforce_body_without_solid_cells():
    solver = uniform_solver()
    state = solver.initialize()
    _, fx, fy = solver.enforce_body(state, 1e-3)
    assert (fx, fy) == (0.0, 0.0)


def test_vorticity_of_uniform_flow_is_zero():
    solver = uniform_solver()
    assert not vorticity(solver.initialize()).any()


def test_vorticity_of_shear_inlet_profile():
    grid = Grid.from_extent(16, 16, 1.0, 1.0)
    state = FlowSolver(grid, composite(), SimulationConfig(inlet_mode="paper_shear")).initialize()
    assert np.allclose(vorticity(state), -5.0)


def test_vorticity_of_solid_body_rotation():
    grid = Grid.from_extent(32, 32, 1.0, 1.0)
    xu, yu, xv, yv = face_coordinates(grid)
    rate = 0.7
    state = FlowState(grid=grid, u=-rate * (yu - 0.5), v=rate * (xv - 0.5), p=np.zeros((32, 32)),
                      mask=rasterize(composite(), grid), nu=1e-3)
    assert np.allclose(vorticity(state), 2.0 * rate)


def test_vorticity_is_zero_inside_body():
    solver = cylinder_solver(nx=64, ny=32)
    state, _, _ = solver.step(solver.initialize())
    assert not vorticity(state)[solver.mask.solid].any()


def test_zero_length_run_is_refused():
    solver = cylinder_solver(nx=64, ny=32, t_end=0.0)
    with pytest.raises(EmptyRunError):
        solver.run()


def test_short_run_history_is_uniform():
    solver = cylinder_solver(nx=64, ny=32, t_end=0.5, snapshot_count=2)
    fractions = []
    result = solver.run(progress_callback=fractions.append)
    history = result.history
    assert len(history) >= 2
    assert history.is_uniform()
    assert history.t[-1] == pytest.approx(0.5)
    assert np.isfinite(history.fx).all() and np.isfinite(history.fy).all()
    assert len(result.snapshots) == 2
    assert 0.25 <= result.snapshots[0].time < 0.5
    assert result.snapshots[-1].time == pytest.approx(0.5)
    assert fractions and fractions[-1] == pytest.approx(1.0)
    assert result.state.time == pytest.approx(0.5)
    assert result.max_divergence <= 1.01 * solver.cfg.poisson_tolerance * solver.cfg.U / solver.grid.dx


def test_doubling_run_length_doubles_samples():
    short = cylinder_solver(nx=64, ny=32, t_end=0.4).run().history
    longer = cylinder_solver(nx=64, ny=32, t_end=0.8).run().history
    assert len(longer) >= 2 * len(short)


def test_blowup_is_reported_with_context():
    solver = uniform_solver(n=16)
    state = solver.initialize()
    state.u[8, 8] = 1e6
    with pytest.raises(NumericalBlowupError) as excinfo:
        solver.step(state, 1e-9)
    assert excinfo.value.max_velocity > 1e3


def test_force_history_frame_round_trip():
    t = 0.02 * np.arange(1, 41)
    history = ForceHistory(0.02, t, np.ones(40), np.sin(t))
    again = ForceHistory.from_frame(history.to_frame())
    assert again.dt_sample == pytest.approx(0.02)
    assert np.array_equal(again.fy, history.fy)
    skewed = history.to_frame()
    skewed.loc[3, "t"] += 0.005
    with pytest.raises(SamplingError):
        ForceHistory.from_frame(skewed)
    with pytest.raises(SamplingError):
        ForceHistory(0.02, t, np.ones(3), np.ones(40))
    assert isinstance(history.to_frame(), pd.DataFrame)


@pytest.mark.slow
def test_cylinder_sheds_at_re150():
    shape = circle((0.0, 0.0), 0.1)
    grid = GridSpec().build(frontal_width(shape), shape.center)
    cfg = SimulationConfig(re_surrogate=150.0, convective_units=200.0)
    solver = FlowSolver(grid, shape, cfg)
    result = solver.run()
    assert result.max_divergence <= 1.01 * cfg.poisson_tolerance * cfg.U / min(grid.dx, grid.dy)

    trimmed = trim_transient(result.history, 0.5)
    assert count_zero_crossings(trimmed.fy) >= 6
    frequency = dominant_frequency(trimmed.fy, trimmed.dt_sample, trimmed.t)
    assert 0.15 <= strouhal(frequency, 0.1, 1.0) <= 0.22
    assert 1.1 <= drag_coefficient(trimmed, 1.0, 0.1, cfg.rho) <= 1.7
    q = dynamic_pressure_force(1.0, 0.1, cfg.rho)
    assert abs(np.mean(trimmed.fy)) / q <= 0.05
