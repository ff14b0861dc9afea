import math
from dataclasses import replace
from pathlib import Path

import pandas as pd
import pytest

import campaign
from campaign import (
    TABLE_COLUMNS,
    CaseResult,
    SweepTable,
    onset_speed,
    rank_designs,
    ranking_report,
    run_sweep,
    trend_checks,
)
from config import SweepPlan, parse_config
from conftest import make_summary
from exceptions import CampaignError, ExtrapolationError


def test_published_table_ranks_md2_first(published_table):
    ranking = rank_designs(published_table, 2.3)
    assert [r.design for r in ranking] == ["MD2", "MD1", "ID"]
    # MD2 between 1.875 at 2 m/s and 2.5 at 3 m/s
    assert ranking[0].drift == pytest.approx(1.875 + 0.3 * 0.625)


def test_target_on_a_grid_speed_gives_row_drift(published_table):
    ranking = {r.design: r for r in rank_designs(published_table, 3.0)}
    assert ranking["MD2"].drift == 10.00 / 4.00
    assert ranking["MD1"].drift == 15.04 / 16.00
    assert ranking["ID"].frequency_hz == 7.50


@pytest.mark.parametrize("target", [0.5, 6.0])
def test_target_outside_sweep_is_refused(published_table, target):
    with pytest.raises(ExtrapolationError):
        rank_designs(published_table, target)


def test_single_design_ranking():
    table = SweepTable.from_summaries([make_summary("MD1", 1.0, 5.0, 18.0, 19.2),
                                       make_summary("MD1", 2.0, 9.0, 18.5, 16.0)])
    ranking = rank_designs(table, 1.5)
    assert len(ranking) == 1
    assert ranking[0].design == "MD1"


def test_equal_drift_goes_to_higher_frequency():
    table = SweepTable.from_summaries([
        make_summary("MD1", 1.0, 5.0, 1.0, 2.0), make_summary("MD1", 2.0, 9.0, 1.0, 2.0),
        make_summary("MD2", 1.0, 6.0, 1.0, 2.0), make_summary("MD2", 2.0, 12.0, 1.0, 2.0),
    ])
    assert [r.design for r in rank_designs(table, 1.5)] == ["MD2", "MD1"]


def test_full_tie_goes_to_tag_order():
    table = SweepTable.from_summaries([
        make_summary(tag, speed, 5.0, 1.0, 2.0) for tag in ("MD2", "ID") for speed in (1.0, 2.0)
    ])
    assert [r.design for r in rank_designs(table, 1.5)] == ["ID", "MD2"]


def test_design_not_covering_target_is_left_out():
    table = SweepTable(cases=[
        CaseResult("ID", 1.0, "ok", make_summary("ID", 1.0, 2.0, 1.0, 2.0)),
        CaseResult("ID", 2.0, "ok", make_summary("ID", 2.0, 5.0, 1.0, 2.0)),
        CaseResult("MD1", 1.0, "ok", make_summary("MD1", 1.0, 5.0, 3.0, 2.0)),
        CaseResult("MD1", 2.0, "failed", error="blew up", error_kind="NumericalBlowupError"),
    ])
    assert [r.design for r in rank_designs(table, 1.5)] == ["ID"]


def test_ranking_is_unchanged_by_force_scaling(published_summaries):
    scaled = [replace(s, cl=4.2 * s.cl, cd=4.2 * s.cd) for s in published_summaries]
    base = rank_designs(SweepTable.from_summaries(published_summaries), 2.3)
    again = rank_designs(SweepTable.from_summaries(scaled), 2.3)
    assert [r.design for r in again] == [r.design for r in base]
    for a, b in zip(base, again):
        assert b.drift == pytest.approx(a.drift, rel=1e-12)


def test_trend_checks_on_published_table(published_table):
    checks = trend_checks(published_table, 2.3)
    # ID drops from 10 Hz to 9.3 Hz and MD1 from 17.5 Hz to 17 Hz at 5 m/s
    assert checks["frequency_increases_with_speed"] is False
    assert checks["frequency_ordered_by_design"] is True
    assert checks["md2_drift_highest"] is True
    assert checks["md2_first_at_target"] is True


def test_trend_checks_without_md2():
    table = SweepTable.from_summaries([make_summary("ID", 1.0, 2.0, 1.0, 2.0),
                                       make_summary("ID", 2.0, 5.0, 1.0, 2.0)])
    checks = trend_checks(table, 1.5)
    assert checks["frequency_increases_with_speed"] is True
    assert checks["frequency_ordered_by_design"] is None
    assert checks["md2_drift_highest"] is None
    assert checks["md2_first_at_target"] is None


def test_onset_speed(published_table):
    assert onset_speed(published_table, "ID") == 3.0
    assert onset_speed(published_table, "MD1") == 1.0
    assert onset_speed(published_table, "MD3") is None


def test_sweep_table_orders_cases():
    table = SweepTable.from_summaries([make_summary("MD2", 2.0, 14.0, 7.5, 4.0),
                                       make_summary("ID", 2.0, 5.0, 124.16, 149.16),
                                       make_summary("ID", 1.0, 2.0, 140.0, 198.3)])
    frame = table.to_frame()
    assert list(frame.columns) == TABLE_COLUMNS
    assert list(zip(frame["design"], frame["U_mps"])) == [("ID", 1.0), ("ID", 2.0), ("MD2", 2.0)]
    assert table.designs == ["ID", "MD2"]
    assert table.speeds == [1.0, 2.0]


def test_sweep_table_rejects_duplicates():
    with pytest.raises(ValueError):
        SweepTable.from_summaries([make_summary("ID", 1.0, 2.0, 1.0, 2.0),
                                   make_summary("ID", 1.0, 2.1, 1.0, 2.0)])


def test_failed_cases_stay_in_table():
    table = SweepTable(cases=[
        CaseResult("ID", 1.0, "ok", make_summary("ID", 1.0, 2.0, 1.0, 2.0)),
        CaseResult("ID", 2.0, "failed", error="poisson stalled", error_kind="PoissonDivergenceError"),
    ])
    frame = table.to_frame()
    assert len(frame) == 2
    assert math.isnan(frame.loc[1, "drift"])
    assert table.failed_cases() == {"ID@2": "poisson stalled"}
    assert len(table.summaries) == 1


def test_sweep_table_dict_round_trip(published_table):
    again = SweepTable.from_dict(published_table.to_dict(include_timing=True))
    assert again.config_digest == "published"
    pd.testing.assert_frame_equal(again.to_frame(), published_table.to_frame())


def test_ranking_report_contents(published_table):
    report = ranking_report(published_table, 2.3)
    assert set(report) == {"target_speed", "criterion", "ranking", "onset_speed_mps", "trend_checks",
                           "failed_cases", "config_digest"}
    assert report["ranking"][0]["design"] == "MD2"
    assert report["onset_speed_mps"] == {"ID": 3.0, "MD1": 1.0, "MD2": 1.0}
    assert report["failed_cases"] == {}


def test_small_sweep_runs_every_case(small_grid_spec, short_cfg):
    plan = SweepPlan(designs=("MD1",), speeds=(1.0, 2.0), target_speed=1.5)
    fractions = []
    table = run_sweep(plan, short_cfg, small_grid_spec, progress_callback=fractions.append)
    assert [(c.design, c.speed, c.status) for c in table.cases] == [("MD1", 1.0, "ok"), ("MD1", 2.0, "ok")]
    assert fractions == [0.5, 1.0]
    assert table.config_digest
    frame = table.to_frame()
    assert (frame["CD"] > 0).all()
    assert list(frame["reynolds"]) == pytest.approx([100.0, 100.0])

    again = run_sweep(plan, short_cfg, small_grid_spec)
    pd.testing.assert_frame_equal(again.to_frame(), frame)


def test_sweep_with_every_case_failing_raises(monkeypatch, short_cfg, small_grid_spec):
    def always_fails(job):
        tag, speed = job[0], job[1]
        return CaseResult(design=tag, speed=speed, status="failed", error="diverged",
                          error_kind="NumericalBlowupError")

    monkeypatch.setattr(campaign, "_simulate_case", always_fails)
    plan = SweepPlan(designs=("ID", "MD1"), speeds=(1.0,), target_speed=1.0)
    with pytest.raises(CampaignError, match="diverged"):
        run_sweep(plan, short_cfg, small_grid_spec)


def test_jobs_carry_case_overrides(short_cfg, small_grid_spec):
    plan = SweepPlan(designs=("ID", "MD2"), speeds=(1.0, 2.0), overrides={"MD2@2": {"cfl": 0.05}})
    jobs = campaign.CampaignRunner(plan, short_cfg, small_grid_spec).jobs()
    assert [(tag, speed) for tag, speed, *_ in jobs] == [("ID", 1.0), ("ID", 2.0), ("MD2", 1.0), ("MD2", 2.0)]
    assert jobs[3][2].cfl == 0.05
    assert jobs[3][2].U == 2.0
    assert jobs[2][2].cfl == short_cfg.cfl


def test_design_override_enabling_snapshots_keeps_fields(short_cfg, small_grid_spec):
    plan = SweepPlan(designs=("ID", "MD2"), speeds=(1.0,), overrides={"MD2": {"snapshot_count": 2}})
    jobs = campaign.CampaignRunner(plan, short_cfg, small_grid_spec).jobs()
    assert [(job[0], job[2].snapshot_count, job[-1]) for job in jobs] == [("ID", 0, False), ("MD2", 2, True)]


@pytest.mark.slow
def test_parallel_sweep_matches_serial(small_grid_spec, short_cfg):
    serial = run_sweep(SweepPlan(designs=("ID", "MD2"), speeds=(1.0, 2.0), workers=1), short_cfg, small_grid_spec)
    parallel = run_sweep(SweepPlan(designs=("ID", "MD2"), speeds=(1.0, 2.0), workers=2), short_cfg, small_grid_spec)
    pd.testing.assert_frame_equal(parallel.to_frame(), serial.to_frame())


@pytest.mark.slow
def test_full_study_reproduces_design_trends():
    plan, cfg, grid_spec = parse_config(Path(__file__).resolve().parent.parent / "configs" / "full_study.json")
    table = run_sweep(plan, replace(cfg, snapshot_count=0), grid_spec)
    assert not table.failed_cases()

    checks = trend_checks(table, plan.target_speed)
    assert checks == {"frequency_increases_with_speed": True, "frequency_ordered_by_design": True,
                      "md2_drift_highest": True, "md2_first_at_target": True}
    assert rank_designs(table, plan.target_speed)[0].design == "MD2"

    for tag in table.designs:
        onset = onset_speed(table, tag)
        if onset is None:
            continue
        above = [c.summary.oscillating for c in table.cases if c.design == tag and c.speed >= onset]
        assert all(above)

    for case in table.cases:
        if case.design == "ID" and case.summary.oscillating:
            assert case.summary.strouhal == pytest.approx(0.2, rel=0.4)
