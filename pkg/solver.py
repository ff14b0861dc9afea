"""
2D incompressible flow past a rigid body on a staggered (MAC) grid.

Array layout, with nx x ny pressure cells:

    u: (nx+1, ny+2)  x-faces, u[i, j] at (x0 + i*dx, y0 + (j-0.5)*dy); rows j=0, ny+1 are ghosts
    v: (nx+2, ny+1)  y-faces, v[i, j] at (x0 + (i-0.5)*dx, y0 + j*dy); columns i=0, nx+1 are ghosts
    p: (nx, ny)      cell centres, boundary conditions live in the Poisson operator

Each step is an explicit fractional-step (projection) update: transport
without pressure, pressure solve, velocity correction, then direct forcing
inside the body. The momentum removed by the forcing is the force of the
fluid on the body.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Tuple

import numpy as np
import pandas as pd

from config import Grid, SimulationConfig
from exceptions import (
    DegenerateTimestepError,
    EmptyRunError,
    NumericalBlowupError,
    SamplingError,
)
from geometry import Shape, SolidMask, frontal_width, rasterize
from poisson import PoissonOperator

logger = logging.getLogger(__name__)

# |velocity| beyond this multiple of the reference speed is treated as a blowup
VELOCITY_LIMIT_FACTOR = 1e3


@dataclass
class FlowState:
    grid: Grid
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    mask: SolidMask
    nu: float
    boundary: str = "channel"
    time: float = 0.0
    step_index: int = 0
    projected_divergence: float = 0.0
    poisson_iterations: int = 0

    def copy(self) -> "FlowState":
        return replace(self, u=self.u.copy(), v=self.v.copy(), p=self.p.copy())

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.u).all() and np.isfinite(self.v).all() and np.isfinite(self.p).all())

    def max_velocity(self) -> float:
        return float(max(np.abs(self.u[:, 1:-1]).max(), np.abs(self.v[1:-1, :]).max()))

    def cell_velocity(self) -> Tuple[np.ndarray, np.ndarray]:
        """Velocity averaged to cell centres, each of shape (nx, ny)."""
        uc = 0.5 * (self.u[:-1, 1:-1] + self.u[1:, 1:-1])
        vc = 0.5 * (self.v[1:-1, :-1] + self.v[1:-1, 1:])
        return uc, vc

    def padded_pressure(self) -> np.ndarray:
        """Pressure with one ghost layer holding the boundary conditions."""
        if self.boundary == "periodic":
            return np.pad(self.p, 1, mode="wrap")
        padded = np.pad(self.p, 1, mode="edge")
        # p = 0 on the outlet face
        padded[-1, 1:-1] = -self.p[-1, :]
        return padded


@dataclass(frozen=True)
class ForceHistory:
    """Force per unit span sampled every dt_sample seconds."""

    dt_sample: float
    t: np.ndarray
    fx: np.ndarray
    fy: np.ndarray

    def __post_init__(self):
        if not (len(self.t) == len(self.fx) == len(self.fy)):
            raise SamplingError("Force history columns differ in length")

    def __len__(self) -> int:
        return len(self.t)

    def is_uniform(self, tolerance: float = 1e-12) -> bool:
        if len(self.t) < 2:
            return True
        steps = np.diff(self.t)
        return bool(np.all(steps > 0) and np.all(np.abs(steps - self.dt_sample) <= tolerance * max(1.0, self.t[-1])))

    def tail(self, start: int) -> "ForceHistory":
        return ForceHistory(self.dt_sample, self.t[start:].copy(), self.fx[start:].copy(), self.fy[start:].copy())

    def scaled(self, factor: float) -> "ForceHistory":
        return ForceHistory(self.dt_sample, self.t.copy(), self.fx * factor, self.fy * factor)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.t, "Fx": self.fx, "Fy": self.fy})

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "ForceHistory":
        t = frame["t"].to_numpy(dtype=float)
        if len(t) < 2:
            raise SamplingError("Need at least two samples to recover the sampling interval")
        dt_sample = float((t[-1] - t[0]) / (len(t) - 1))
        history = cls(dt_sample, t, frame["Fx"].to_numpy(dtype=float), frame["Fy"].to_numpy(dtype=float))
        if not history.is_uniform(1e-6):
            raise SamplingError("Force samples are not uniformly spaced")
        return history


@dataclass(frozen=True)
class Snapshot:
    time: float
    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    omega: np.ndarray


@dataclass
class RunResult:
    history: ForceHistory
    state: FlowState
    snapshots: List[Snapshot] = field(default_factory=list)
    steps: int = 0
    dt_initial: float = 0.0
    max_divergence: float = 0.0


def inlet_profile(U: float, y, cfg: SimulationConfig):
    """Streamwise inlet speed (shear_slope_factor * U) * (y + shear_offset), never negative."""
    return np.maximum(cfg.shear_slope_factor * U * (np.asarray(y, dtype=float) + cfg.shear_offset), 0.0)


def face_coordinates(grid: Grid) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Coordinates (xu, yu, xv, yv) of every u and v face including ghosts, as 2D arrays."""
    x0, y0 = grid.origin
    xu = x0 + np.arange(grid.nx + 1) * grid.dx
    yu = y0 + (np.arange(grid.ny + 2) - 0.5) * grid.dy
    xv = x0 + (np.arange(grid.nx + 2) - 0.5) * grid.dx
    yv = y0 + np.arange(grid.ny + 1) * grid.dy
    XU, YU = np.meshgrid(xu, yu, indexing="ij")
    XV, YV = np.meshgrid(xv, yv, indexing="ij")
    return XU, YU, XV, YV


def cell_centers(grid: Grid) -> Tuple[np.ndarray, np.ndarray]:
    x0, y0 = grid.origin
    return x0 + (np.arange(grid.nx) + 0.5) * grid.dx, y0 + (np.arange(grid.ny) + 0.5) * grid.dy


def divergence(u: np.ndarray, v: np.ndarray, grid: Grid) -> np.ndarray:
    return (u[1:, 1:-1] - u[:-1, 1:-1]) / grid.dx + (v[1:-1, 1:] - v[1:-1, :-1]) / grid.dy


def vorticity(state: FlowState) -> np.ndarray:
    """Cell-centred dv/dx - du/dy; zero inside the body."""
    uc, vc = state.cell_velocity()
    dx, dy = state.grid.dx, state.grid.dy
    if state.boundary == "periodic":
        vp = np.pad(vc, ((1, 1), (0, 0)), mode="wrap")
        up = np.pad(uc, ((0, 0), (1, 1)), mode="wrap")
        omega = (vp[2:, :] - vp[:-2, :]) / (2 * dx) - (up[:, 2:] - up[:, :-2]) / (2 * dy)
    else:
        omega = np.gradient(vc, dx, axis=0, edge_order=2) - np.gradient(uc, dy, axis=1, edge_order=2)
    omega[state.mask.solid] = 0.0
    return omega


def _transport_rhs(q: np.ndarray, ax: np.ndarray, ay: np.ndarray, dx: float, dy: float,
                   nu: float, blend: float) -> np.ndarray:
    """
    Advection-diffusion tendency of the interior of q (one halo cell each side).

    Advection is central differencing blended with first-order upwind; with
    blend = 1 the scheme is purely central.
    """
    c = q[1:-1, 1:-1]
    east, west = q[2:, 1:-1], q[:-2, 1:-1]
    north, south = q[1:-1, 2:], q[1:-1, :-2]
    d2x = east - 2.0 * c + west
    d2y = north - 2.0 * c + south
    advection = ax * (east - west) / (2.0 * dx) + ay * (north - south) / (2.0 * dy)
    rhs = -advection + nu * (d2x / dx ** 2 + d2y / dy ** 2)
    if blend < 1.0:
        rhs += (1.0 - blend) * (np.abs(ax) * d2x / (2.0 * dx) + np.abs(ay) * d2y / (2.0 * dy))
    return rhs


class FlowSolver:
    """
    Time integration of one (shape, config, grid) case.

    The solver owns the rasterized body and the Poisson operator; states
    passed in are never modified.
    """

    def __init__(self, grid: Grid, shape: Shape, cfg: SimulationConfig):
        self.grid = grid
        self.shape = shape
        self.cfg = cfg
        self.mask = rasterize(shape, grid)
        self.length_scale = grid.ly if shape.is_empty else frontal_width(shape)
        self.nu = cfg.effective_nu(self.length_scale)
        self.periodic = cfg.boundary == "periodic"
        self.poisson = PoissonOperator.build(grid.nx, grid.ny, grid.dx, grid.dy, cfg.boundary)
        self._u_solid = self.mask.u_face_solid()
        self._v_solid = self.mask.v_face_solid()

        _, yu, _, _ = face_coordinates(grid)
        self._inlet = self.inlet_velocity(yu[0, :])
        self.reference_speed = max(cfg.U, float(self._inlet.max()))
        logger.debug(f"Solver ready: {grid.nx}x{grid.ny} cells, dx={grid.dx:.4g} m, "
                     f"nu={self.nu:.4g} m²/s, {int(self.mask.solid.sum())} solid cells")

    def inlet_velocity(self, y: np.ndarray) -> np.ndarray:
        if self.cfg.inlet_mode == "paper_shear":
            return inlet_profile(self.cfg.U, y, self.cfg)
        return np.full(np.shape(y), float(self.cfg.U))

    def initialize(self) -> FlowState:
        """Zero pressure, the inlet profile copied into every column, no cross-stream flow."""
        nx, ny = self.grid.nx, self.grid.ny
        u = np.tile(self._inlet, (nx + 1, 1))
        v = np.zeros((nx + 2, ny + 1))
        state = FlowState(grid=self.grid, u=u, v=v, p=np.zeros((nx, ny)), mask=self.mask,
                          nu=self.nu, boundary=self.cfg.boundary)
        state.u[:, 1:-1][self._u_solid] = 0.0
        state.v[1:-1, :][self._v_solid] = 0.0
        self._apply_bc(state.u, state.v, outlet=True)
        return state

    def cfl_dt(self, state: FlowState) -> float:
        """Largest stable step: cfl * min(dx/|u|max, dy/|v|max, 0.25*min(dx,dy)^2/nu)."""
        dx, dy = self.grid.dx, self.grid.dy
        u_max = float(np.abs(state.u[:, 1:-1]).max())
        v_max = float(np.abs(state.v[1:-1, :]).max())
        limits = [dx / u_max if u_max > 0 else math.inf,
                  dy / v_max if v_max > 0 else math.inf,
                  0.25 * min(dx, dy) ** 2 / state.nu if state.nu > 0 else math.inf]
        dt = self.cfg.cfl * min(limits)
        if not (math.isfinite(dt) and dt > 0):
            raise DegenerateTimestepError(
                f"No finite time step at t={state.time:.4g} s (|u|max={u_max:.3g}, |v|max={v_max:.3g}, nu={state.nu:.3g})"
            )
        return dt

    def _apply_bc(self, u: np.ndarray, v: np.ndarray, outlet: bool) -> None:
        """Boundary values in place. outlet=False leaves the outlet face to the projection."""
        nx, ny = self.grid.nx, self.grid.ny
        if self.periodic:
            u[nx, :] = u[0, :]
            u[:, 0] = u[:, ny]
            u[:, ny + 1] = u[:, 1]
            v[:, ny] = v[:, 0]
            v[0, :] = v[nx, :]
            v[nx + 1, :] = v[1, :]
            return
        u[0, :] = self._inlet
        if outlet:
            u[nx, :] = u[nx - 1, :]
        # free-slip walls
        v[:, 0] = 0.0
        v[:, ny] = 0.0
        u[:, 0] = u[:, 1]
        u[:, ny + 1] = u[:, ny]
        # v = 0 on the inlet face, zero gradient at the outlet
        v[0, :] = -v[1, :]
        v[nx + 1, :] = v[nx, :]

    def apply_boundary_conditions(self, state: FlowState) -> FlowState:
        new = state.copy()
        self._apply_bc(new.u, new.v, outlet=True)
        return new

    def predict_velocity(self, state: FlowState, dt: float) -> Tuple[np.ndarray, np.ndarray]:
        """Explicit transport step without pressure; returns (u*, v*) with boundary values set."""
        u, v = state.u, state.v
        nx, ny = self.grid.nx, self.grid.ny
        dx, dy = self.grid.dx, self.grid.dy
        blend = self.cfg.central_blend

        if self.periodic:
            qu = np.concatenate([u[nx - 1:nx], u], axis=0)
            qv = np.concatenate([v[:, ny - 1:ny], v], axis=1)
            i0, j0 = 0, 0
        else:
            qu, qv = u, v
            i0, j0 = 1, 1
        i1, j1 = nx, ny

        ax_u = u[i0:i1, 1:-1]
        ay_u = 0.25 * (v[i0:i1, :ny] + v[i0 + 1:i1 + 1, :ny] + v[i0:i1, 1:] + v[i0 + 1:i1 + 1, 1:])
        ax_v = 0.25 * (u[:nx, j0:j1] + u[1:, j0:j1] + u[:nx, j0 + 1:j1 + 1] + u[1:, j0 + 1:j1 + 1])
        ay_v = v[1:-1, j0:j1]

        u_star = u.copy()
        v_star = v.copy()
        u_star[i0:i1, 1:-1] = ax_u + dt * _transport_rhs(qu, ax_u, ay_u, dx, dy, state.nu, blend)
        v_star[1:-1, j0:j1] = ay_v + dt * _transport_rhs(qv, ax_v, ay_v, dx, dy, state.nu, blend)

        if not (np.isfinite(u_star).all() and np.isfinite(v_star).all()):
            logger.error(f"Non-finite velocity at step {state.step_index}, t={state.time:.6g} s")
            raise NumericalBlowupError(
                f"Non-finite velocity at step {state.step_index} (t={state.time:.6g} s, "
                f"|u|max before step {state.max_velocity():.4g} m/s)",
                step=state.step_index, time=state.time, max_velocity=state.max_velocity(),
            )
        self._apply_bc(u_star, v_star, outlet=True)
        return u_star, v_star

    def project(self, u_star: np.ndarray, v_star: np.ndarray, state: FlowState, dt: float) -> FlowState:
        """
        Remove the divergence of (u*, v*).

        Solves L p = (rho/dt) div u* warm-started from the current pressure and
        subtracts (dt/rho) grad p. The residual threshold
        tol * (rho/dt) * (U/dx) bounds the remaining divergence by tol * U/dx.
        """
        rho = self.cfg.rho
        grid = self.grid
        rhs = (rho / dt) * divergence(u_star, v_star, grid)
        threshold = self.cfg.poisson_tolerance * (rho / dt) * (self.cfg.U / min(grid.dx, grid.dy))
        p, residuals = self.poisson.solve(rhs, state.p, threshold, self.cfg.poisson_max_iterations)

        new = replace(state, u=u_star.copy(), v=v_star.copy(), p=p, poisson_iterations=len(residuals) - 1)
        padded = new.padded_pressure()
        new.u[:, 1:-1] -= (dt / rho) * (padded[1:, 1:-1] - padded[:-1, 1:-1]) / grid.dx
        new.v[1:-1, :] -= (dt / rho) * (padded[1:-1, 1:] - padded[1:-1, :-1]) / grid.dy
        self._apply_bc(new.u, new.v, outlet=False)

        div = divergence(new.u, new.v, grid)
        fluid = ~self.mask.solid
        new.projected_divergence = float(np.abs(div[fluid]).max()) if fluid.any() else 0.0
        return new

    def _zero_body(self, state: FlowState) -> Tuple[float, float]:
        """Zero velocity on solid faces in place; returns the removed momentum sums."""
        u_in = state.u[:, 1:-1]
        v_in = state.v[1:-1, :]
        removed_u = float(u_in[self._u_solid].sum())
        removed_v = float(v_in[self._v_solid].sum())
        u_in[self._u_solid] = 0.0
        v_in[self._v_solid] = 0.0
        return removed_u, removed_v

    def enforce_body(self, state: FlowState, dt: float) -> Tuple[FlowState, float, float]:
        """
        Direct forcing: zero velocity on solid faces.

        Returns:
            Tuple of (new state, Fx, Fy); the force is the momentum removed per
            unit time, so Fx > 0 points downstream (drag).
        """
        new = state.copy()
        removed_u, removed_v = self._zero_body(new)
        scale = self.cfg.rho * self.grid.cell_area / dt
        return new, removed_u * scale, removed_v * scale

    def step(self, state: FlowState, dt: Optional[float] = None) -> Tuple[FlowState, float, float]:
        """Advance one time step; dt defaults to cfl_dt(state)."""
        if dt is None:
            dt = self.cfl_dt(state)
        current = self.apply_boundary_conditions(state)
        u_star, v_star = self.predict_velocity(current, dt)
        new = self.project(u_star, v_star, current, dt)

        if self.cfg.time_scheme == "heun":
            # second stage averaged with the start of the step; the half step keeps p at full scale
            first_u, first_v = self._zero_body(new)
            u_star, v_star = self.predict_velocity(new, dt)
            new = self.project(0.5 * (current.u + u_star), 0.5 * (current.v + v_star), new, 0.5 * dt)
            new, fx, fy = self.enforce_body(new, dt)
            scale = self.cfg.rho * self.grid.cell_area / dt
            fx += 0.5 * first_u * scale
            fy += 0.5 * first_v * scale
        else:
            new, fx, fy = self.enforce_body(new, dt)

        self._apply_bc(new.u, new.v, outlet=False)
        new.time = state.time + dt
        new.step_index = state.step_index + 1

        speed = new.max_velocity()
        if not math.isfinite(speed) or speed > VELOCITY_LIMIT_FACTOR * self.reference_speed:
            logger.error(f"Velocity {speed:.4g} m/s out of range at step {new.step_index}")
            raise NumericalBlowupError(
                f"Velocity {speed:.4g} m/s out of range at step {new.step_index} (t={new.time:.6g} s)",
                step=new.step_index, time=new.time, max_velocity=speed,
            )
        logger.debug(f"step {new.step_index}: dt={dt:.4g} s, {new.poisson_iterations} pressure iterations, "
                     f"div={new.projected_divergence:.3e}")
        return new, fx, fy

    def perturb_wake(self, state: FlowState) -> FlowState:
        """Cross-stream kick of wake_perturbation * U just behind the body."""
        eps = self.cfg.wake_perturbation
        if eps <= 0 or self.shape.is_empty or self.periodic:
            return state
        new = state.copy()
        d = self.length_scale
        cx, cy = self.shape.center
        _, _, xv, yv = face_coordinates(self.grid)
        region = (xv >= cx) & (xv <= cx + 3 * d) & (yv >= cy - d) & (yv <= cy + d)
        region[1:-1, :] &= ~self._v_solid
        region[0, :] = region[-1, :] = False
        new.v[region] += eps * self.cfg.U
        self._apply_bc(new.u, new.v, outlet=True)
        return new

    def snapshot(self, state: FlowState) -> Snapshot:
        x, y = cell_centers(self.grid)
        uc, vc = state.cell_velocity()
        return Snapshot(time=state.time, x=x, y=y, u=uc, v=vc, p=state.p.copy(), omega=vorticity(state))

    def run(self, progress_callback: Optional[Callable[[float], None]] = None) -> RunResult:
        """
        Integrate from rest to t_end, sampling forces on a uniform time grid.

        Forces are recorded per step and linearly interpolated to
        t_k = k * dt_sample, with dt_sample = min(sample_every * dt0, t_end/2).

        Args:
            progress_callback: Called with the completed fraction of simulated time

        Returns:
            RunResult with the force history, final state and snapshots
        """
        cfg = self.cfg
        t_end = cfg.end_time(self.length_scale)
        if not t_end > 0:
            raise EmptyRunError(f"Run length must be positive, got t_end={t_end}")

        state = self.perturb_wake(self.initialize())
        dt0 = self.cfl_dt(state)
        dt_sample = min(cfg.sample_every * dt0, t_end / 2.0)
        n_samples = int(math.floor(t_end / dt_sample * (1.0 + 1e-12)))
        sample_times = dt_sample * np.arange(1, n_samples + 1)
        fx_samples = np.zeros(n_samples)
        fy_samples = np.zeros(n_samples)
        snapshot_times = [t_end * k / cfg.snapshot_count for k in range(1, cfg.snapshot_count + 1)]
        snapshots: List[Snapshot] = []

        logger.info(f"Running {self.shape.kind} at U={cfg.U:g} m/s to t={t_end:.4g} s "
                    f"(Re={cfg.U * self.length_scale / self.nu:.4g}, dt0={dt0:.3g} s, {n_samples} samples)")

        filled = 0
        max_divergence = 0.0
        previous: Optional[Tuple[float, float, float]] = None
        next_report = 0.1
        end_tolerance = 1e-12 * t_end
        try:
            while state.time < t_end - end_tolerance:
                dt = self.cfl_dt(state)
                if state.time + dt > t_end:
                    dt = t_end - state.time
                state, fx, fy = self.step(state, dt)
                max_divergence = max(max_divergence, state.projected_divergence)

                while filled < n_samples and sample_times[filled] <= state.time + end_tolerance:
                    ts = sample_times[filled]
                    if previous is None or state.time <= previous[0]:
                        fx_samples[filled], fy_samples[filled] = fx, fy
                    else:
                        w = (ts - previous[0]) / (state.time - previous[0])
                        fx_samples[filled] = previous[1] + w * (fx - previous[1])
                        fy_samples[filled] = previous[2] + w * (fy - previous[2])
                    filled += 1
                previous = (state.time, fx, fy)

                while snapshot_times and snapshot_times[0] <= state.time + end_tolerance:
                    snapshot_times.pop(0)
                    snapshots.append(self.snapshot(state))

                fraction = min(state.time / t_end, 1.0)
                if fraction >= next_report:
                    logger.info(f"{self.shape.kind} U={cfg.U:g}: {fraction:.0%} (step {state.step_index}, "
                                f"|u|max={state.max_velocity():.3g} m/s)")
                    while next_report <= fraction:
                        next_report += 0.1
                    if progress_callback:
                        progress_callback(fraction)
        except NumericalBlowupError as e:
            logger.error(f"Run aborted at t={state.time:.6g} s: {str(e)}")
            raise

        if filled < n_samples and previous is not None:
            fx_samples[filled:], fy_samples[filled:] = previous[1], previous[2]

        history = ForceHistory(dt_sample, sample_times, fx_samples, fy_samples)
        return RunResult(history=history, state=state, snapshots=snapshots,
                         steps=state.step_index, dt_initial=dt0, max_divergence=max_divergence)


def initialize(grid: Grid, shape: Shape, cfg: SimulationConfig) -> FlowState:
    return FlowSolver(grid, shape, cfg).initialize()


def run(shape: Shape, cfg: SimulationConfig, grid: Grid,
        progress_callback: Optional[Callable[[float], None]] = None) -> RunResult:
    return FlowSolver(grid, shape, cfg).run(progress_callback)
