"""
Analytic oracles for the flow solver: Taylor-Green decay and shedding onset.
"""

import logging
import math
import time
from dataclasses import dataclass, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from analysis import is_oscillating, trim_transient
from config import Grid, GridSpec, SimulationConfig
from exceptions import InsufficientDataError, NormalizationError, SimulationError
from geometry import Shape, circle, composite, frontal_width
from solver import FlowSolver, FlowState, face_coordinates, run

logger = logging.getLogger(__name__)

TAYLOR_GREEN_NU = 0.05
TAYLOR_GREEN_RESOLUTIONS = (32, 64, 128)
MIN_CONVERGENCE_ORDER = 1.8
ENERGY_TOLERANCE = 0.01


@dataclass(frozen=True)
class ConvergenceReport:
    resolutions: Tuple[int, ...]
    errors: Tuple[float, ...]
    observed_order: float

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.resolutions, self.resolutions[1:])):
            raise ValueError(f"Resolutions must be strictly increasing, got {self.resolutions}")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"n": self.resolutions, "l2_error": self.errors})


@dataclass(frozen=True)
class TaylorGreenResult:
    n: int
    t_final: float
    l2_error: float
    energy_ratio: float
    analytic_energy_ratio: float
    steps: int


def taylor_green_config(nu: float = TAYLOR_GREEN_NU) -> SimulationConfig:
    """Periodic box, purely central advection, tight pressure tolerance, two-stage time stepping."""
    return SimulationConfig(U=1.0, nu=nu, boundary="periodic", cfl=0.25, central_blend=1.0,
                            poisson_tolerance=1e-8, poisson_max_iterations=20000,
                            wake_perturbation=0.0, time_scheme="heun")


def taylor_green_fields(grid: Grid, t: float, nu: float, k: float = 1.0) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Analytic (u, v, p) on the staggered grid, ghosts included."""
    xu, yu, xv, yv = face_coordinates(grid)
    decay = math.exp(-2.0 * nu * k ** 2 * t)
    u = -np.cos(k * xu) * np.sin(k * yu) * decay
    v = np.sin(k * xv) * np.cos(k * yv) * decay
    x0, y0 = grid.origin
    xc = x0 + (np.arange(grid.nx) + 0.5) * grid.dx
    yc = y0 + (np.arange(grid.ny) + 0.5) * grid.dy
    X, Y = np.meshgrid(xc, yc, indexing="ij")
    p = -0.25 * (np.cos(2 * k * X) + np.cos(2 * k * Y)) * decay ** 2
    return u, v, p - p.mean()


def _unique_faces(state: FlowState) -> Tuple[np.ndarray, np.ndarray]:
    nx, ny = state.grid.nx, state.grid.ny
    return state.u[:nx, 1:ny + 1], state.v[1:nx + 1, :ny]


def kinetic_energy(state: FlowState) -> float:
    u, v = _unique_faces(state)
    return 0.5 * state.grid.cell_area * float(np.sum(u ** 2) + np.sum(v ** 2))


def run_taylor_green(n: int, t_final: float, nu: float = TAYLOR_GREEN_NU, k: float = 1.0) -> TaylorGreenResult:
    """
    Decay of the Taylor-Green vortex on an n x n periodic box of side 2*pi/k.

    Args:
        n: Cells per side (>= 16)
        t_final: Time to integrate to; the last step is shortened to land on it
        nu: Kinematic viscosity

    Returns:
        TaylorGreenResult with the L2 velocity error and the energy decay
    """
    side = 2.0 * math.pi / k
    grid = Grid.from_extent(n, n, side, side)
    solver = FlowSolver(grid, composite(), taylor_green_config(nu))
    state = solver.initialize()
    state.u, state.v, state.p = taylor_green_fields(grid, 0.0, nu, k)
    energy0 = kinetic_energy(state)

    while state.time < t_final - 1e-12 * max(t_final, 1.0):
        dt = min(solver.cfl_dt(state), t_final - state.time)
        state, _, _ = solver.step(state, dt)

    u_exact, v_exact, _ = taylor_green_fields(grid, state.time, nu, k)
    u, v = _unique_faces(state)
    exact = FlowState(grid=grid, u=u_exact, v=v_exact, p=state.p, mask=state.mask, nu=nu, boundary="periodic")
    ue, ve = _unique_faces(exact)
    error = math.sqrt(grid.cell_area * float(np.sum((u - ue) ** 2) + np.sum((v - ve) ** 2)))

    result = TaylorGreenResult(
        n=n,
        t_final=state.time,
        l2_error=error,
        energy_ratio=kinetic_energy(state) / energy0,
        analytic_energy_ratio=math.exp(-4.0 * nu * k ** 2 * state.time),
        steps=state.step_index,
    )
    logger.info(f"Taylor-Green n={n}: L2 error {error:.4e} after {result.steps} steps, "
                f"energy ratio {result.energy_ratio:.6f} (analytic {result.analytic_energy_ratio:.6f})")
    return result


def taylor_green_error(n: int, t_final: float, nu: float = TAYLOR_GREEN_NU) -> float:
    return run_taylor_green(n, t_final, nu).l2_error


def convergence_order(errors: Sequence[float], spacings: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(spacing)."""
    errors = np.asarray(errors, dtype=float)
    spacings = np.asarray(spacings, dtype=float)
    if len(errors) < 3 or len(errors) != len(spacings):
        raise InsufficientDataError(f"Need at least 3 (error, spacing) pairs, got {len(errors)}")
    if np.any(errors <= 0) or np.any(spacings <= 0):
        raise ValueError("Errors and spacings must be positive for a log-log fit")
    slope, _ = np.polyfit(np.log(spacings), np.log(errors), 1)
    return float(slope)


def taylor_green_convergence(resolutions: Sequence[int] = TAYLOR_GREEN_RESOLUTIONS, t_final: float = 1.0,
                             nu: float = TAYLOR_GREEN_NU) -> Tuple[ConvergenceReport, List[TaylorGreenResult]]:
    results = [run_taylor_green(n, t_final, nu) for n in resolutions]
    errors = tuple(r.l2_error for r in results)
    order = convergence_order(errors, [2.0 * math.pi / n for n in resolutions])
    return ConvergenceReport(tuple(resolutions), errors, order), results


def shedding_onset_check(shape: Shape, re: float, grid_spec: Optional[GridSpec] = None,
                         base_cfg: Optional[SimulationConfig] = None, fraction: float = 0.5,
                         min_zero_crossings: int = 6, min_amplitude_ratio: float = 0.01) -> bool:
    """
    Run the shape at a prescribed Reynolds number and report whether the wake sheds.

    The viscosity is rescaled so that U * D / nu = re with U = 1 m/s.
    """
    if not re > 0:
        raise NormalizationError(f"Reynolds number must be positive, got {re}")
    grid_spec = grid_spec or GridSpec()
    cfg = replace(base_cfg or SimulationConfig(), U=1.0, re_surrogate=float(re))
    grid = grid_spec.build(frontal_width(shape), shape.center)
    result = run(shape, cfg, grid)
    trimmed = trim_transient(result.history, fraction)
    oscillating = is_oscillating(trimmed, min_zero_crossings, min_amplitude_ratio)
    logger.info(f"Onset check {shape.kind} at Re={re:g}: {'oscillating' if oscillating else 'steady'}")
    return oscillating


class VerificationSuite:
    """Runs the solver oracles and collects pass/fail outcomes."""

    def __init__(self, quick: bool = False, grid_spec: Optional[GridSpec] = None,
                 base_cfg: Optional[SimulationConfig] = None):
        """
        Args:
            quick: Use coarse resolutions and short runs (smoke test of the pipeline)
            grid_spec: Grid for the shedding checks
            base_cfg: Config the shedding checks start from
        """
        self.quick = quick
        self.grid_spec = grid_spec or (GridSpec(nx=64, ny=32) if quick else GridSpec())
        self.base_cfg = base_cfg or SimulationConfig()
        if quick:
            self.base_cfg = replace(self.base_cfg, convective_units=20.0)

    def _checks(self) -> List[Tuple[str, Callable[[], Tuple[bool, str]]]]:
        checks = [("taylor_green_convergence", self._check_convergence),
                  ("taylor_green_energy", self._check_energy)]
        if not self.quick:
            checks += [("shedding_re150", lambda: self._check_onset(150.0, True)),
                       ("steady_re20", lambda: self._check_onset(20.0, False))]
        return checks

    def _check_convergence(self) -> Tuple[bool, str]:
        resolutions = (16, 32, 64) if self.quick else TAYLOR_GREEN_RESOLUTIONS
        t_final = 0.25 if self.quick else 1.0
        report, _ = taylor_green_convergence(resolutions, t_final)
        passed = report.observed_order >= MIN_CONVERGENCE_ORDER
        return passed, f"observed order {report.observed_order:.3f} (need >= {MIN_CONVERGENCE_ORDER})"

    def _check_energy(self) -> Tuple[bool, str]:
        n = 32 if self.quick else 128
        result = run_taylor_green(n, 0.25 if self.quick else 1.0)
        deviation = abs(result.energy_ratio / result.analytic_energy_ratio - 1.0)
        return deviation <= ENERGY_TOLERANCE, f"energy deviation {deviation:.2e} at n={n}"

    def _check_onset(self, re: float, expected: bool) -> Tuple[bool, str]:
        shape = circle((0.0, 0.0), 0.1)
        oscillating = shedding_onset_check(shape, re, self.grid_spec, self.base_cfg)
        return oscillating == expected, f"oscillating={oscillating}, expected {expected}"

    def run(self) -> Dict[str, Any]:
        """
        Run every check; a check that raises is recorded as failed.

        Returns:
            Dict with 'passed' and 'failed' lists of {'check', 'detail', 'seconds'}
        """
        results: Dict[str, Any] = {"passed": [], "failed": []}
        for name, check in self._checks():
            started = time.perf_counter()
            try:
                passed, detail = check()
            except SimulationError as e:
                logger.error(f"Verification check {name} raised: {str(e)}")
                passed, detail = False, f"error: {str(e)}"
            entry = {"check": name, "detail": detail, "seconds": round(time.perf_counter() - started, 3)}
            results["passed" if passed else "failed"].append(entry)
            logger.info(f"{name}: {'PASS' if passed else 'FAIL'} ({detail})")
        return results

    @staticmethod
    def to_frame(results: Dict[str, Any]) -> pd.DataFrame:
        rows = [{"status": "PASS", **entry} for entry in results["passed"]]
        rows += [{"status": "FAIL", **entry} for entry in results["failed"]]
        return pd.DataFrame(rows, columns=["check", "status", "detail", "seconds"])
