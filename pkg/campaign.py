"""
Design x speed sweep, results table and design ranking.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numba
import numpy as np
import pandas as pd

from analysis import CoefficientSummary, summarize
from config import GridSpec, SimulationConfig, SweepPlan, plan_digest
from exceptions import CampaignError, ExtrapolationError, SimulationError
from geometry import design as build_design
from geometry import frontal_width
from solver import FlowSolver, ForceHistory, Snapshot
from utils import ARTIFACT_VERSION

logger = logging.getLogger(__name__)

TABLE_COLUMNS = ["design", "U_mps", "frequency_hz", "CL", "CD", "drift", "strouhal", "reynolds"]

# Narrowest, most streamlined section first
EXPECTED_FREQUENCY_ORDER = ("MD2", "MD1", "ID")


@dataclass
class CaseResult:
    design: str
    speed: float
    status: str
    summary: Optional[CoefficientSummary] = None
    error: Optional[str] = None
    error_kind: Optional[str] = None
    wall_time: float = 0.0
    steps: int = 0
    history: Optional[ForceHistory] = None
    snapshots: List[Snapshot] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self, include_timing: bool = False) -> Dict[str, Any]:
        data = {
            "design": self.design,
            "U_mps": self.speed,
            "status": self.status,
            "error": self.error,
            "error_kind": self.error_kind,
            "summary": self.summary.to_dict() if self.summary else None,
        }
        if include_timing:
            data["wall_time_s"] = round(self.wall_time, 3)
            data["steps"] = self.steps
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CaseResult":
        summary = CoefficientSummary.from_dict(data["summary"]) if data.get("summary") else None
        return cls(design=data["design"], speed=float(data["U_mps"]), status=data["status"],
                   summary=summary, error=data.get("error"), error_kind=data.get("error_kind"),
                   wall_time=float(data.get("wall_time_s", 0.0)), steps=int(data.get("steps", 0)))


@dataclass
class SweepTable:
    """Every (design, speed) case of a sweep in (design, speed) order, failures included."""

    cases: List[CaseResult]
    config_digest: str = ""
    version: str = ARTIFACT_VERSION

    def __post_init__(self):
        self.cases = sorted(self.cases, key=lambda c: (c.design, c.speed))
        keys = [(c.design, c.speed) for c in self.cases]
        if len(set(keys)) != len(keys):
            raise ValueError("Sweep table has duplicate (design, speed) cases")

    @property
    def designs(self) -> List[str]:
        return sorted({c.design for c in self.cases})

    @property
    def speeds(self) -> List[float]:
        return sorted({c.speed for c in self.cases})

    @property
    def summaries(self) -> List[CoefficientSummary]:
        return [c.summary for c in self.cases if c.ok]

    def failed_cases(self) -> Dict[str, str]:
        return {f"{c.design}@{c.speed:g}": c.error or "" for c in self.cases if not c.ok}

    def to_frame(self) -> pd.DataFrame:
        """One row per case in table column order; failed cases carry NaN values."""
        rows = []
        for case in self.cases:
            if case.ok:
                data = case.summary.to_dict()
                rows.append({key: data[key] for key in TABLE_COLUMNS})
            else:
                rows.append({"design": case.design, "U_mps": case.speed,
                             **{key: np.nan for key in TABLE_COLUMNS[2:]}})
        return pd.DataFrame(rows, columns=TABLE_COLUMNS)

    def to_dict(self, include_timing: bool = False) -> Dict[str, Any]:
        return {
            "version": self.version,
            "config_digest": self.config_digest,
            "cases": [c.to_dict(include_timing) for c in self.cases],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SweepTable":
        return cls(cases=[CaseResult.from_dict(c) for c in data["cases"]],
                   config_digest=data.get("config_digest", ""),
                   version=data.get("version", ARTIFACT_VERSION))

    @classmethod
    def from_summaries(cls, summaries: List[CoefficientSummary], config_digest: str = "") -> "SweepTable":
        return cls(cases=[CaseResult(design=s.design, speed=s.U, status="ok", summary=s) for s in summaries],
                   config_digest=config_digest)


@dataclass(frozen=True)
class RankedDesign:
    design: str
    drift: float
    frequency_hz: float

    def to_dict(self) -> Dict[str, Any]:
        return {"design": self.design, "drift": self.drift, "frequency_hz": self.frequency_hz}


def _simulate_case(job: Tuple[str, float, SimulationConfig, GridSpec, SweepPlan, bool]) -> CaseResult:
    """Run and summarize one case; module level so worker processes can import it."""
    tag, speed, cfg, grid_spec, plan, keep_fields = job
    started = time.perf_counter()
    try:
        shape = build_design(tag)
        d = frontal_width(shape)
        solver = FlowSolver(grid_spec.build(d, shape.center), shape, cfg)
        result = solver.run()
        summary = summarize(result.history, tag, speed, d, solver.nu, cfg.rho, plan.transient_fraction,
                            plan.min_zero_crossings, plan.min_amplitude_ratio)
        return CaseResult(design=tag, speed=speed, status="ok", summary=summary,
                          wall_time=time.perf_counter() - started, steps=result.steps,
                          history=result.history, snapshots=result.snapshots if keep_fields else [])
    except SimulationError as e:
        logger.error(f"Case {tag} at {speed:g} m/s failed: {str(e)}")
        return CaseResult(design=tag, speed=speed, status="failed", error=str(e),
                          error_kind=type(e).__name__, wall_time=time.perf_counter() - started)


def _share_threads(workers: int) -> None:
    """Split numba's thread pool between the worker processes."""
    numba.set_num_threads(max(1, numba.config.NUMBA_NUM_THREADS // workers))


class CampaignRunner:
    def __init__(self, plan: SweepPlan, base_cfg: Optional[SimulationConfig] = None,
                 grid_spec: Optional[GridSpec] = None):
        self.plan = plan
        self.base_cfg = base_cfg or SimulationConfig()
        self.grid_spec = grid_spec or GridSpec()
        self.failed_cases: Dict[str, str] = {}

    def jobs(self) -> List[Tuple[str, float, SimulationConfig, GridSpec, SweepPlan, bool]]:
        jobs = []
        for tag in self.plan.designs:
            for speed in self.plan.speeds:
                cfg = self.plan.case_config(self.base_cfg, tag, speed)
                jobs.append((tag, speed, cfg, self.grid_spec, self.plan, cfg.snapshot_count > 0))
        return jobs

    def run_sweep(self, progress_callback: Optional[Callable[[float], None]] = None) -> SweepTable:
        """
        Simulate every case of the plan.

        Args:
            progress_callback: Called with the fraction of finished cases

        Returns:
            SweepTable in (design, speed) order, independent of worker scheduling
        """
        jobs = self.jobs()
        total = len(jobs)
        workers = min(self.plan.workers, total)
        logger.info(f"Sweep of {total} cases on {workers} worker(s)")

        results: List[CaseResult] = []
        if workers == 1:
            outcomes = map(_simulate_case, jobs)
            executor = None
        else:
            executor = ProcessPoolExecutor(max_workers=workers, initializer=_share_threads, initargs=(workers,))
            outcomes = executor.map(_simulate_case, jobs)
        try:
            for idx, case in enumerate(outcomes, 1):
                results.append(case)
                if case.ok:
                    logger.info(f"[{idx}/{total}] {case.design} at {case.speed:g} m/s done in {case.wall_time:.1f} s")
                else:
                    self.failed_cases[f"{case.design}@{case.speed:g}"] = case.error
                    logger.warning(f"[{idx}/{total}] {case.design} at {case.speed:g} m/s failed: {case.error}")
                if progress_callback:
                    progress_callback(idx / total)
        finally:
            if executor is not None:
                executor.shutdown()

        if all(not case.ok for case in results):
            raise CampaignError(f"All {total} cases failed: " +
                                "; ".join(f"{k}: {v}" for k, v in sorted(self.failed_cases.items())))
        logger.info(f"Sweep finished: {total - len(self.failed_cases)}/{total} cases succeeded")
        return SweepTable(cases=results, config_digest=plan_digest(self.plan, self.base_cfg, self.grid_spec))


def run_sweep(plan: SweepPlan, base_cfg: Optional[SimulationConfig] = None,
              grid_spec: Optional[GridSpec] = None,
              progress_callback: Optional[Callable[[float], None]] = None) -> SweepTable:
    return CampaignRunner(plan, base_cfg, grid_spec).run_sweep(progress_callback)


def _design_curves(table: SweepTable) -> Dict[str, Tuple[np.ndarray, np.ndarray, np.ndarray]]:
    curves = {}
    for tag in table.designs:
        rows = [c.summary for c in table.cases if c.design == tag and c.ok]
        if rows:
            curves[tag] = (np.array([s.U for s in rows]), np.array([s.drift for s in rows]),
                           np.array([s.frequency_hz for s in rows]))
    return curves


def rank_designs(table: SweepTable, target_speed: float) -> List[RankedDesign]:
    """
    Order designs by drift coefficient interpolated linearly to the target speed.

    Ties go to the higher interpolated frequency, then to the tag. Designs
    whose successful cases do not bracket the target are left out.
    """
    speeds = table.speeds
    if not speeds or not speeds[0] <= target_speed <= speeds[-1]:
        raise ExtrapolationError(
            f"Target speed {target_speed:g} m/s is outside the swept range "
            f"{speeds[0] if speeds else float('nan'):g}..{speeds[-1] if speeds else float('nan'):g} m/s"
        )

    ranked = []
    for tag, (u, drift, freq) in _design_curves(table).items():
        if not u[0] <= target_speed <= u[-1]:
            logger.warning(f"Design {tag} left out of the ranking: successful cases only cover "
                           f"{u[0]:g}..{u[-1]:g} m/s")
            continue
        ranked.append(RankedDesign(tag, float(np.interp(target_speed, u, drift)),
                                   float(np.interp(target_speed, u, freq))))
    return sorted(ranked, key=lambda r: (-r.drift, -r.frequency_hz, r.design))


def onset_speed(table: SweepTable, tag: str) -> Optional[float]:
    """Lowest swept speed at which the design's lift oscillates, or None."""
    for case in table.cases:
        if case.design == tag and case.ok and case.summary.oscillating:
            return case.speed
    return None


def trend_checks(table: SweepTable, target_speed: float) -> Dict[str, Optional[bool]]:
    """
    Qualitative comparisons between the designs.

    A check is None when the table lacks the designs or speeds it needs.
    """
    by_key = {(c.design, c.speed): c.summary for c in table.cases if c.ok}
    curves = _design_curves(table)
    checks: Dict[str, Optional[bool]] = {}

    checks["frequency_increases_with_speed"] = (
        all(bool(np.all(np.diff(freq) > 0)) for _, _, freq in curves.values()) if curves else None
    )

    present = [tag for tag in EXPECTED_FREQUENCY_ORDER if tag in curves]
    if len(present) >= 2:
        ordered = True
        for speed in table.speeds:
            values = [by_key[(tag, speed)].frequency_hz for tag in present if (tag, speed) in by_key]
            if len(values) == len(present):
                ordered &= all(a > b for a, b in zip(values, values[1:]))
        checks["frequency_ordered_by_design"] = ordered
    else:
        checks["frequency_ordered_by_design"] = None

    others = [tag for tag in curves if tag != "MD2"]
    if "MD2" in curves and others:
        highest = True
        for speed in table.speeds:
            if ("MD2", speed) not in by_key:
                continue
            rivals = [by_key[(tag, speed)].drift for tag in others if (tag, speed) in by_key]
            highest &= all(by_key[("MD2", speed)].drift > r for r in rivals)
        checks["md2_drift_highest"] = highest
    else:
        checks["md2_drift_highest"] = None

    try:
        ranking = rank_designs(table, target_speed)
        checks["md2_first_at_target"] = bool(ranking and ranking[0].design == "MD2") if "MD2" in curves else None
    except ExtrapolationError:
        checks["md2_first_at_target"] = None
    return checks


def ranking_report(table: SweepTable, target_speed: float) -> Dict[str, Any]:
    ranking = rank_designs(table, target_speed)
    return {
        "target_speed": target_speed,
        "criterion": "drift coefficient (CL/CD) interpolated linearly to the target speed; "
                     "one operationalization of an overall qualitative comparison",
        "ranking": [r.to_dict() for r in ranking],
        "onset_speed_mps": {tag: onset_speed(table, tag) for tag in table.designs},
        "trend_checks": trend_checks(table, target_speed),
        "failed_cases": table.failed_cases(),
        "config_digest": table.config_digest,
    }
