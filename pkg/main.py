"""
Command line entry point: simulate, sweep, verify and report.

    python main.py sweep --config configs/full_study.json --out results --workers 4

Exit codes: 0 success, 1 usage/configuration/I-O failure, 2 numerical failure.
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Tuple

import exceptions
from analysis import summarize
from campaign import CampaignRunner, SweepTable, ranking_report
from config import GridSpec, SimulationConfig, SweepPlan, config_to_dict, parse_config, parse_config_dict, plan_digest
from emitters import BaseEmitter, ChartEmitter, CsvEmitter, ManifestEmitter, RunManifest, SnapshotEmitter
from emitters.manifest_emitter import MANIFEST_NAME, utc_now
from exceptions import ConfigError, NumericalError, SimulationError
from geometry import design as build_design
from geometry import frontal_width
from solver import FlowSolver
from utils import clean_design_tag, format_json, format_speed
from verification import VerificationSuite

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
DEFAULT_SNAPSHOT_COUNT = 3
CONFIG_NAME = "config.json"
RANKING_NAME = "ranking.json"


def configure_logging(verbose: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s - %(levelname)s - %(message)s",
        force=True,
    )
    # numba's compiler logging is noisy at DEBUG
    logging.getLogger("numba").setLevel(logging.WARNING)


class CliParser(argparse.ArgumentParser):
    """Argument errors exit with the usage code instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = CliParser(prog="mastflow", description="Vortex shedding study of bladeless wind turbine masts")
    common = CliParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file (defaults apply when omitted)")
    common.add_argument("--out", type=Path, default=Path("results"), help="Output directory")
    common.add_argument("--verbose", action="store_true", help="Debug logging")

    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", parents=[common], help="Run one design at one speed")
    simulate.add_argument("--design", default="ID", help="ID, MD1 or MD2")
    simulate.add_argument("--speed", type=float, help="Wind speed in m/s (first configured speed by default)")
    simulate.add_argument("--snapshots", action="store_true", help="Write vorticity snapshots")
    simulate.add_argument("--re-surrogate", type=float, dest="re_surrogate", help="Run at this Reynolds number")

    sweep = sub.add_parser("sweep", parents=[common], help="Run every design at every speed")
    sweep.add_argument("--workers", type=int, help="Worker processes")
    sweep.add_argument("--snapshots", action="store_true", help="Write vorticity snapshots")
    sweep.add_argument("--re-surrogate", type=float, dest="re_surrogate", help="Run at this Reynolds number")

    verify = sub.add_parser("verify", parents=[common], help="Run the solver oracles")
    verify.add_argument("--quick", action="store_true", help="Coarse, fast subset of the checks")

    report = sub.add_parser("report", parents=[common], help="Re-emit tables, charts and ranking from a stored sweep")
    report.add_argument("--table", type=Path, help="sweep_table.json (defaults to the one in --out)")
    return parser


def load_config(args: argparse.Namespace) -> Tuple[SweepPlan, SimulationConfig, GridSpec]:
    """Parse the config file, then apply command line overrides."""
    plan, cfg, grid_spec = parse_config(args.config) if args.config else parse_config_dict({})
    try:
        if getattr(args, "workers", None) is not None:
            plan = replace(plan, workers=args.workers)
        if getattr(args, "re_surrogate", None) is not None:
            cfg = replace(cfg, re_surrogate=args.re_surrogate)
        if getattr(args, "snapshots", False) and cfg.snapshot_count == 0:
            cfg = replace(cfg, snapshot_count=DEFAULT_SNAPSHOT_COUNT)
    except ConfigError as e:
        raise ConfigError(f"invalid command line value: {str(e)}") from e
    return plan, cfg, grid_spec


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_USAGE


def _case_exit_code(table: SweepTable) -> int:
    kinds = [getattr(exceptions, c.error_kind, SimulationError) for c in table.cases if not c.ok]
    if not kinds:
        return EXIT_OK
    return EXIT_NUMERICAL if any(issubclass(k, NumericalError) for k in kinds) else EXIT_USAGE


def cmd_simulate(args: argparse.Namespace) -> int:
    plan, cfg, grid_spec = load_config(args)
    tag = clean_design_tag(args.design)
    shape = build_design(tag)
    speed = args.speed if args.speed is not None else plan.speeds[0]
    cfg = plan.case_config(cfg, tag, speed)

    manifest = RunManifest(command="simulate", config_digest=plan_digest(plan, cfg, grid_spec), started=utc_now())
    d = frontal_width(shape)
    solver = FlowSolver(grid_spec.build(d, shape.center), shape, cfg)
    result = solver.run()

    csv_emitter = CsvEmitter(args.out)
    csv_emitter.emit_forces(result.history, tag, speed)
    snapshot_emitter = SnapshotEmitter(args.out)
    snapshot_emitter.emit_snapshots(result.snapshots, tag, speed)

    summary = summarize(result.history, tag, speed, d, solver.nu, cfg.rho, plan.transient_fraction,
                        plan.min_zero_crossings, plan.min_amplitude_ratio)
    csv_emitter.write_text(f"summary_{tag}_{format_speed(speed)}mps.json", format_json(summary.to_dict()))

    manifest.cases = [{"design": tag, "U_mps": speed, "status": "ok", "steps": result.steps}]
    ManifestEmitter(args.out).emit(manifest, csv_emitter.relative_files() + snapshot_emitter.relative_files())
    print(format_json(summary.to_dict()), end="")
    return EXIT_OK


def emit_reports(table: SweepTable, out: Path, target_speed: float,
                 keep_ranking: bool = False) -> Tuple[List[str], Optional[Exception]]:
    """
    Table CSV/JSON, charts and ranking; shared by sweep and report so both write identical bytes.

    With keep_ranking a failed ranking leaves an existing ranking.json in place
    instead of replacing it with the error record.
    """
    emitter = CsvEmitter(out)
    emitter.emit_table(table)
    emitter.write_text("sweep_table.json", format_json(table.to_dict()))
    charts = ChartEmitter(out)
    error = None
    if table.summaries:
        charts.emit_plots(table)
    try:
        ranking = ranking_report(table, target_speed)
        for position, entry in enumerate(ranking["ranking"], 1):
            logger.info(f"#{position} {entry['design']}: drift {entry['drift']:.4g} at {target_speed:g} m/s")
    except exceptions.ExtrapolationError as e:
        logger.error(f"Ranking failed: {str(e)}")
        ranking, error = {"target_speed": target_speed, "error": str(e)}, e
    if error is not None and keep_ranking and (Path(out) / RANKING_NAME).is_file():
        logger.warning(f"Keeping the existing {RANKING_NAME} in {out}")
    else:
        emitter.write_text(RANKING_NAME, format_json(ranking))
    return emitter.relative_files() + charts.relative_files(), error


def cmd_sweep(args: argparse.Namespace) -> int:
    plan, cfg, grid_spec = load_config(args)
    manifest = RunManifest(command="sweep", config_digest=plan_digest(plan, cfg, grid_spec), started=utc_now(),
                           notes={"seed_note": plan.seed_note, "workers": plan.workers,
                                  "ranking_criterion": "drift coefficient interpolated to the target speed"})

    table = CampaignRunner(plan, cfg, grid_spec).run_sweep()
    logger.info("\n" + table.to_frame().to_string(index=False))

    config_emitter = BaseEmitter(args.out)
    config_emitter.write_text(CONFIG_NAME, format_json(config_to_dict(plan, cfg, grid_spec)))
    forces = CsvEmitter(args.out)
    snapshots = SnapshotEmitter(args.out)
    for case in table.cases:
        if case.history is not None:
            forces.emit_forces(case.history, case.design, case.speed)
        snapshots.emit_snapshots(case.snapshots, case.design, case.speed)
    files, ranking_error = emit_reports(table, args.out, plan.target_speed)

    manifest.cases = [{k: v for k, v in c.to_dict(include_timing=True).items() if k != "summary"}
                      for c in table.cases]
    ManifestEmitter(args.out).emit(
        manifest, files + forces.relative_files() + snapshots.relative_files() + config_emitter.relative_files()
    )
    if ranking_error is not None:
        return EXIT_USAGE
    return _case_exit_code(table)


def cmd_verify(args: argparse.Namespace) -> int:
    _, cfg, grid_spec = load_config(args) if args.config else (None, None, None)
    suite = VerificationSuite(quick=args.quick, grid_spec=grid_spec, base_cfg=cfg)
    results = suite.run()
    frame = VerificationSuite.to_frame(results)
    print(frame.to_string(index=False))
    emitter = BaseEmitter(args.out)
    emitter.write_text("verification.csv", frame.to_csv(index=False, lineterminator="\n"))
    return EXIT_OK if not results["failed"] else EXIT_USAGE


def cmd_report(args: argparse.Namespace) -> int:
    table_path = Path(args.table or args.out / "sweep_table.json")
    if not table_path.is_file():
        logger.error(f"No stored sweep table at {table_path}")
        return EXIT_USAGE
    with open(table_path, encoding="utf-8") as f:
        table = SweepTable.from_dict(json.load(f))

    # the sweep's own config.json is the default, so a rerun ranks at the stored target
    config_path = args.config
    if config_path is None and (table_path.parent / CONFIG_NAME).is_file():
        config_path = table_path.parent / CONFIG_NAME
    plan, cfg, grid_spec = parse_config(config_path) if config_path else parse_config_dict({})
    if config_path is not None:
        logger.info(f"Ranking with {config_path} (target {plan.target_speed:g} m/s)")
        if plan_digest(plan, cfg, grid_spec) != table.config_digest:
            logger.warning(f"{config_path} does not match the digest stored with {table_path}")

    stored_manifest = table_path.parent / MANIFEST_NAME
    if stored_manifest.is_file():
        manifest = RunManifest.load(stored_manifest)
        if manifest.elapsed is not None:
            logger.info(f"Stored {manifest.command} took {manifest.elapsed} (digest {manifest.config_digest[:12]})")

    started = utc_now()
    files, ranking_error = emit_reports(table, args.out, plan.target_speed, keep_ranking=True)

    # a manifest already in --out (the sweep's, or an earlier report's) is extended, not replaced
    out_manifest = Path(args.out) / MANIFEST_NAME
    if out_manifest.is_file():
        manifest = RunManifest.load(out_manifest)
    else:
        manifest = RunManifest(command="report", config_digest=table.config_digest, started=started)
    manifest.notes["report"] = {"table": str(table_path), "config": str(config_path) if config_path else None,
                                "target_speed": plan.target_speed,
                                "ranking": "failed" if ranking_error is not None else "ok"}
    ManifestEmitter(args.out).emit(manifest, manifest.outputs + files)
    return EXIT_USAGE if ranking_error is not None else EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "verify": cmd_verify, "report": cmd_report}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except SimulationError as e:
        logger.error(f"{args.command} failed: {type(e).__name__}: {str(e)}")
        return exit_code_for(e)
    except OSError as e:
        logger.error(f"{args.command} failed: {str(e)}")
        return EXIT_USAGE
    except ValueError as e:
        # path guard refusals and similar usage errors
        logger.error(f"{args.command} failed: {str(e)}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
