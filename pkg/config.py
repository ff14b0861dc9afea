"""
Simulation, grid and sweep configuration.

The JSON schema is documented in README.md. Every key is optional; absent keys
take the study defaults (nu = 1.5e-5 m²/s, speeds 1..5 m/s, designs ID/MD1/MD2,
target speed 2.3 m/s).
"""

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from exceptions import ConfigError
from geometry import DESIGNS
from utils import clean_design_tag, config_digest

logger = logging.getLogger(__name__)

INLET_MODES = ("uniform", "paper_shear")
BOUNDARY_MODES = ("channel", "periodic")
TIME_SCHEMES = ("euler", "heun")


@dataclass(frozen=True)
class Grid:
    """Uniform Cartesian grid; origin is the inlet-bottom corner."""

    nx: int
    ny: int
    dx: float
    dy: float
    origin: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 16 or self.ny < 16:
            raise ConfigError(f"Grid needs at least 16 cells per direction, got {self.nx}x{self.ny}")
        if not (self.dx > 0 and self.dy > 0):
            raise ConfigError(f"Grid spacing must be positive, got dx={self.dx}, dy={self.dy}")

    @classmethod
    def from_extent(cls, nx: int, ny: int, lx: float, ly: float,
                    origin: Tuple[float, float] = (0.0, 0.0)) -> "Grid":
        if not (lx > 0 and ly > 0):
            raise ConfigError(f"Domain lengths must be positive, got Lx={lx}, Ly={ly}")
        return cls(nx=nx, ny=ny, dx=lx / nx, dy=ly / ny, origin=(float(origin[0]), float(origin[1])))

    @property
    def lx(self) -> float:
        return self.nx * self.dx

    @property
    def ly(self) -> float:
        return self.ny * self.dy

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy


@dataclass(frozen=True)
class GridSpec:
    """Grid in body-relative units; turned into a Grid once the frontal width is known."""

    nx: int = 256
    ny: int = 128
    lx_over_d: float = 32.0
    ly_over_d: float = 16.0
    body_x_over_d: float = 8.0
    body_y_over_d: float = 8.0

    def build(self, frontal_width: float, center: Tuple[float, float] = (0.0, 0.0)) -> Grid:
        d = frontal_width
        origin = (center[0] - self.body_x_over_d * d, center[1] - self.body_y_over_d * d)
        return Grid.from_extent(self.nx, self.ny, self.lx_over_d * d, self.ly_over_d * d, origin)


@dataclass(frozen=True)
class SimulationConfig:
    U: float = 1.0
    nu: float = 1.5e-5
    inlet_mode: str = "uniform"
    shear_slope_factor: float = 0.5 / 0.1
    shear_offset: float = 0.05
    rho: float = 1.0
    cfl: float = 0.1
    t_end: Optional[float] = None
    convective_units: float = 150.0
    sample_every: int = 10
    poisson_tolerance: float = 1e-6
    poisson_max_iterations: int = 10000
    central_blend: float = 0.9
    re_surrogate: Optional[float] = None
    wake_perturbation: float = 0.01
    snapshot_count: int = 0
    boundary: str = "channel"
    time_scheme: str = "euler"

    def __post_init__(self):
        problems = validate_simulation_config(self)
        if problems:
            raise ConfigError("; ".join(problems))

    def effective_nu(self, length_scale: float) -> float:
        """Viscosity actually used; rescaled when a surrogate Reynolds number is set."""
        if self.re_surrogate is not None:
            return self.U * length_scale / self.re_surrogate
        return self.nu

    def end_time(self, length_scale: float) -> float:
        if self.t_end is not None:
            return self.t_end
        return self.convective_units * length_scale / self.U

    def with_speed(self, U: float) -> "SimulationConfig":
        return replace(self, U=float(U))


def validate_simulation_config(cfg: SimulationConfig) -> List[str]:
    problems = []
    if not cfg.U > 0:
        problems.append(f"U must be > 0, got {cfg.U}")
    if not cfg.nu > 0:
        problems.append(f"nu must be > 0, got {cfg.nu}")
    if not cfg.rho > 0:
        problems.append(f"rho must be > 0, got {cfg.rho}")
    if not (0 < cfg.cfl <= 1):
        problems.append(f"cfl must lie in (0, 1], got {cfg.cfl}")
    if cfg.t_end is not None and cfg.t_end < 0:
        problems.append(f"t_end must be >= 0, got {cfg.t_end}")
    if not cfg.convective_units > 0:
        problems.append(f"convective_units must be > 0, got {cfg.convective_units}")
    if cfg.inlet_mode not in INLET_MODES:
        problems.append(f"inlet_mode must be one of {INLET_MODES}, got '{cfg.inlet_mode}'")
    if not cfg.shear_slope_factor > 0:
        problems.append(f"shear_slope_factor must be > 0, got {cfg.shear_slope_factor}")
    if cfg.boundary not in BOUNDARY_MODES:
        problems.append(f"boundary must be one of {BOUNDARY_MODES}, got '{cfg.boundary}'")
    if cfg.time_scheme not in TIME_SCHEMES:
        problems.append(f"time_scheme must be one of {TIME_SCHEMES}, got '{cfg.time_scheme}'")
    if cfg.sample_every < 1:
        problems.append(f"sample_every must be >= 1, got {cfg.sample_every}")
    if not cfg.poisson_tolerance > 0:
        problems.append(f"poisson tolerance must be > 0, got {cfg.poisson_tolerance}")
    if cfg.poisson_max_iterations < 1:
        problems.append(f"poisson max_iter must be >= 1, got {cfg.poisson_max_iterations}")
    if not (0.0 <= cfg.central_blend <= 1.0):
        problems.append(f"central_blend must lie in [0, 1], got {cfg.central_blend}")
    if cfg.re_surrogate is not None and not cfg.re_surrogate > 0:
        problems.append(f"re_surrogate must be > 0, got {cfg.re_surrogate}")
    if cfg.wake_perturbation < 0:
        problems.append(f"wake_perturbation must be >= 0, got {cfg.wake_perturbation}")
    if cfg.snapshot_count < 0:
        problems.append(f"snapshot_count must be >= 0, got {cfg.snapshot_count}")
    return problems


@dataclass(frozen=True)
class SweepPlan:
    designs: Tuple[str, ...] = ("ID", "MD1", "MD2")
    speeds: Tuple[float, ...] = (1.0, 2.0, 3.0, 4.0, 5.0)
    target_speed: float = 2.3
    overrides: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    workers: int = 1
    transient_fraction: float = 0.5
    min_zero_crossings: int = 6
    min_amplitude_ratio: float = 0.01
    seed_note: str = ""

    def __post_init__(self):
        problems = []
        if not self.designs:
            problems.append("designs must not be empty")
        if len(set(self.designs)) != len(self.designs):
            problems.append("designs must be unique")
        if not self.speeds:
            problems.append("speeds must not be empty")
        if any(not s > 0 for s in self.speeds):
            problems.append(f"speeds must be strictly positive, got {list(self.speeds)}")
        if any(b <= a for a, b in zip(self.speeds, self.speeds[1:])):
            problems.append(f"speeds must be sorted ascending without repeats, got {list(self.speeds)}")
        if not self.target_speed > 0:
            problems.append(f"target_speed must be > 0, got {self.target_speed}")
        if self.workers < 1:
            problems.append(f"workers must be >= 1, got {self.workers}")
        if not (0.0 <= self.transient_fraction < 1.0):
            problems.append(f"transient_fraction must lie in [0, 1), got {self.transient_fraction}")
        if problems:
            raise ConfigError("; ".join(problems))

    def case_config(self, base: SimulationConfig, design: str, speed: float) -> SimulationConfig:
        """Config of one (design, speed) case with per-design then per-case overrides applied."""
        cfg = base.with_speed(speed)
        for key in (design, f"{design}@{speed:g}"):
            if key in self.overrides:
                cfg = replace(cfg, **self.overrides[key])
        return cfg


# JSON key -> (SimulationConfig field, accepted JSON types)
_SIM_KEYS = {
    "nu": ("nu", (int, float)),
    "rho": ("rho", (int, float)),
    "cfl": ("cfl", (int, float)),
    "t_end": ("t_end", (int, float)),
    "convective_units": ("convective_units", (int, float)),
    "inlet_mode": ("inlet_mode", (str,)),
    "shear_slope_factor": ("shear_slope_factor", (int, float)),
    "shear_offset": ("shear_offset", (int, float)),
    "sample_every": ("sample_every", (int,)),
    "central_blend": ("central_blend", (int, float)),
    "wake_perturbation": ("wake_perturbation", (int, float)),
    "snapshot_count": ("snapshot_count", (int,)),
    "re_surrogate": ("re_surrogate", (int, float)),
    "time_scheme": ("time_scheme", (str,)),
}
_GRID_KEYS = {
    "nx": ("nx", (int,)),
    "ny": ("ny", (int,)),
    "Lx_over_D": ("lx_over_d", (int, float)),
    "Ly_over_D": ("ly_over_d", (int, float)),
}
_POISSON_KEYS = {
    "tol": ("poisson_tolerance", (int, float)),
    "max_iter": ("poisson_max_iterations", (int,)),
}
_ONSET_KEYS = {
    "min_zero_crossings": ("min_zero_crossings", (int,)),
    "min_amplitude_ratio": ("min_amplitude_ratio", (int, float)),
}
_PLAN_KEYS = {"designs", "speeds", "target_speed", "transient_fraction", "workers",
              "seed_note", "overrides", "onset"}
_OVERRIDABLE = {f.name for f in SimulationConfig.__dataclass_fields__.values()} - {"U"}


def _check_type(value: Any, types: Tuple[type, ...], path: str) -> None:
    # bool is an int subclass; JSON true/false is never a number here
    if isinstance(value, bool) or not isinstance(value, types):
        expected = " or ".join(t.__name__ for t in types)
        raise ConfigError(f"expected {expected}, got {type(value).__name__}", path)


def _coerce(value: Any, types: Tuple[type, ...]) -> Any:
    return float(value) if float in types else value


def _check_keys(data: Dict[str, Any], allowed, path: str) -> None:
    for key in data:
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}'", f"{path}.{key}")


def _check_object(value: Any, path: str) -> Dict[str, Any]:
    if not isinstance(value, dict):
        raise ConfigError(f"expected object, got {type(value).__name__}", path)
    return value


def parse_config_dict(data: Dict[str, Any]) -> Tuple[SweepPlan, SimulationConfig, GridSpec]:
    """
    Validate a config dict and build the plan, base simulation config and grid spec.

    Args:
        data: Parsed JSON object

    Returns:
        Tuple of (SweepPlan, SimulationConfig, GridSpec)
    """
    data = _check_object(data, "$")
    _check_keys(data, set(_SIM_KEYS) | _PLAN_KEYS | {"grid", "poisson"}, "$")

    sim_kwargs: Dict[str, Any] = {}
    for key, (name, types) in _SIM_KEYS.items():
        if key in data and not (key in ("t_end", "re_surrogate") and data[key] is None):
            _check_type(data[key], types, f"$.{key}")
            sim_kwargs[name] = _coerce(data[key], types)

    grid_kwargs: Dict[str, Any] = {}
    if "grid" in data:
        grid = _check_object(data["grid"], "$.grid")
        _check_keys(grid, _GRID_KEYS, "$.grid")
        for key, (name, types) in _GRID_KEYS.items():
            if key in grid:
                _check_type(grid[key], types, f"$.grid.{key}")
                grid_kwargs[name] = _coerce(grid[key], types)

    if "poisson" in data:
        poisson = _check_object(data["poisson"], "$.poisson")
        _check_keys(poisson, _POISSON_KEYS, "$.poisson")
        for key, (name, types) in _POISSON_KEYS.items():
            if key in poisson:
                _check_type(poisson[key], types, f"$.poisson.{key}")
                sim_kwargs[name] = _coerce(poisson[key], types)

    plan_kwargs: Dict[str, Any] = {}
    if "designs" in data:
        if not isinstance(data["designs"], list):
            raise ConfigError("expected array", "$.designs")
        designs = []
        for i, tag in enumerate(data["designs"]):
            _check_type(tag, (str,), f"$.designs[{i}]")
            if clean_design_tag(tag) not in DESIGNS:
                raise ConfigError(f"unknown design '{tag}'", f"$.designs[{i}]")
            designs.append(clean_design_tag(tag))
        plan_kwargs["designs"] = tuple(designs)
    if "speeds" in data:
        if not isinstance(data["speeds"], list):
            raise ConfigError("expected array", "$.speeds")
        for i, speed in enumerate(data["speeds"]):
            _check_type(speed, (int, float), f"$.speeds[{i}]")
        plan_kwargs["speeds"] = tuple(float(s) for s in data["speeds"])
    for key, types in (("target_speed", (int, float)), ("transient_fraction", (int, float)),
                       ("workers", (int,)), ("seed_note", (str,))):
        if key in data:
            _check_type(data[key], types, f"$.{key}")
            plan_kwargs[key] = _coerce(data[key], types)
    if "onset" in data:
        onset = _check_object(data["onset"], "$.onset")
        _check_keys(onset, _ONSET_KEYS, "$.onset")
        for key, (name, types) in _ONSET_KEYS.items():
            if key in onset:
                _check_type(onset[key], types, f"$.onset.{key}")
                plan_kwargs[name] = _coerce(onset[key], types)
    if "overrides" in data:
        overrides = _check_object(data["overrides"], "$.overrides")
        cleaned = {}
        for case_key, values in overrides.items():
            path = f"$.overrides.{case_key}"
            tag = clean_design_tag(case_key.split("@")[0])
            if tag not in DESIGNS:
                raise ConfigError(f"unknown design in override key '{case_key}'", path)
            values = _check_object(values, path)
            for name in values:
                if name not in _OVERRIDABLE:
                    raise ConfigError(f"unknown key '{name}'", f"{path}.{name}")
            if "@" in case_key:
                try:
                    normalized_key = f"{tag}@{float(case_key.split('@', 1)[1]):g}"
                except ValueError:
                    raise ConfigError(f"override key '{case_key}' has no numeric speed", path)
            else:
                normalized_key = tag
            cleaned[normalized_key] = dict(values)
        plan_kwargs["overrides"] = cleaned

    try:
        cfg = SimulationConfig(**sim_kwargs)
        if cfg.t_end is not None and not cfg.t_end > 0:
            raise ConfigError(f"t_end must be > 0, got {cfg.t_end}", "$.t_end")
        grid_spec = GridSpec(**grid_kwargs)
        if grid_spec.nx < 16 or grid_spec.ny < 16:
            raise ConfigError(f"grid needs nx, ny >= 16, got {grid_spec.nx}x{grid_spec.ny}", "$.grid")
        if not (grid_spec.lx_over_d > 0 and grid_spec.ly_over_d > 0):
            raise ConfigError("grid lengths must be positive", "$.grid")
        plan = SweepPlan(**plan_kwargs)
        for key, values in plan.overrides.items():
            replace(cfg, **values)
    except TypeError as e:
        raise ConfigError(f"invalid value: {str(e)}") from e

    return plan, cfg, grid_spec


def parse_config(path: Union[str, Path]) -> Tuple[SweepPlan, SimulationConfig, GridSpec]:
    """Read and validate a JSON config file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {str(e)}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON in {path}: {str(e)}", "$") from e
    plan, cfg, grid_spec = parse_config_dict(data)
    logger.info(f"Loaded config {path} ({len(plan.designs)} designs x {len(plan.speeds)} speeds)")
    return plan, cfg, grid_spec


def config_to_dict(plan: SweepPlan, cfg: SimulationConfig, grid_spec: GridSpec) -> Dict[str, Any]:
    """
    Canonical JSON-ready dict; parse_config_dict of it rebuilds the same objects.

    The worker count is left out: it is an execution setting recorded in the
    manifest notes, and results do not depend on it.
    """
    sim = asdict(cfg)
    data: Dict[str, Any] = {key: sim[name] for key, (name, _) in _SIM_KEYS.items()}
    data["poisson"] = {key: sim[name] for key, (name, _) in _POISSON_KEYS.items()}
    data["grid"] = {"nx": grid_spec.nx, "ny": grid_spec.ny,
                    "Lx_over_D": grid_spec.lx_over_d, "Ly_over_D": grid_spec.ly_over_d}
    data["designs"] = list(plan.designs)
    data["speeds"] = list(plan.speeds)
    data["target_speed"] = plan.target_speed
    data["transient_fraction"] = plan.transient_fraction
    data["seed_note"] = plan.seed_note
    data["onset"] = {"min_zero_crossings": plan.min_zero_crossings,
                     "min_amplitude_ratio": plan.min_amplitude_ratio}
    data["overrides"] = {key: dict(values) for key, values in sorted(plan.overrides.items())}
    return data


def plan_digest(plan: SweepPlan, cfg: SimulationConfig, grid_spec: GridSpec) -> str:
    """Digest of the semantic config written to config.json."""
    return config_digest(config_to_dict(plan, cfg, grid_spec))
