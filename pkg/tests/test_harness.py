import numpy as np
import pytest

from catbench.domain import CommandType, Domain, InteractionEvent
from catbench.goals import decompose, load_goal_spec
from catbench.harness import (
    METRICS, ArmMismatch, RctReport, effect_table, goal_prediction_scores, improvement, integration_inputs,
    pair_arms, run_rct, summarize, user_samples, weekly_series,
)
from catbench.pattern import StateSpace, fit, label_hidden
from catbench.plotting import rct_figures
from catbench.report import ENGAGEMENT_ROWS, effects_csv, render_rct, series_csv
from catbench.synth import BASELINE_POLICY

from conftest import make_config

DAY = 86_400


@pytest.fixture(scope="module")
def pair():
    ctl = make_config(n_users=120, duration_weeks=4, seed=11)
    return [ctl, ctl.with_arm("cat")]


@pytest.fixture(scope="module")
def report(pair):
    return run_rct(pair, resamples=100)


@pytest.fixture(scope="module")
def null_report(pair):
    return run_rct(pair, resamples=100, cat_policy=BASELINE_POLICY)


def test_null_check_is_exactly_zero(null_report):
    sc = null_report.scenarios[0]
    assert all(v == 0.0 for v in sc.improvements.values())
    assert sc.arms["control"].summary == sc.arms["cat"].summary
    assert all(e.d == 0.0 for e in null_report.pooled_effects.values())


def test_cat_arm_improves_listening(report):
    sc = report.scenarios[0]
    assert sc.improvements["daily_listening_min"] > 0
    assert sc.effects["daily_listening_min"].d > 0
    assert set(sc.arms) == {"control", "cat"}
    assert 0.0 <= sc.baseline_score <= 1.0


def test_report_roundtrip_and_rendering(report, tmp_path):
    back = RctReport.from_dict(report.to_dict())
    assert back.to_dict() == report.to_dict()
    text = render_rct(back)
    for _, _, label in ENGAGEMENT_ROWS:
        assert label in text
    for header in ("Effect Size (d)", "p-value", "Sample Size", "Confidence Interval", "Improvement"):
        assert header in text
    rows = effect_table(report)
    assert [r["metric"] for r in rows] == list(METRICS)
    assert all(r["n"] == 240 for r in rows)
    assert effects_csv(report).count("\n") == len(METRICS) + 1
    assert series_csv(report).splitlines()[0] == "scenario_id,arm,metric,week,value"
    files = rct_figures(report, tmp_path)
    assert [f.name for f in files] == ["weekly_small.png", "effect_sizes.png"]
    assert all(f.stat().st_size > 1000 for f in files)


def test_intervals_bracket_means(report):
    arm = report.scenarios[0].arms["control"]
    for m in METRICS:
        lo, hi = arm.intervals[m]
        assert lo - 1e-12 <= arm.summary.value(m) <= hi + 1e-12


def test_series_lengths(report):
    for arm in report.scenarios[0].arms.values():
        assert all(len(v) == 4 for v in arm.series.values())


def test_pair_arms_errors(pair):
    with pytest.raises(ArmMismatch, match="exactly one"):
        pair_arms(pair[:1])
    with pytest.raises(ArmMismatch, match="beyond the arm"):
        pair_arms([pair[0], make_config(n_users=121, duration_weeks=4, seed=11, arm="cat")])
    with pytest.raises(ArmMismatch):
        pair_arms(pair + [pair[1]])


def test_improvement():
    assert improvement(10.0, 15.0) == 50.0
    assert improvement(0.0, 0.0) == 0.0
    assert improvement(0.0, 1.0) is None


def _ev(user, day, eng, *, recognized=True, novel=False, completed=False, content="music:g01:c01:i1"):
    return InteractionEvent(day * DAY, user, f"{user}{day}", Domain.MUSIC, CommandType.PLAY_SIMILAR, recognized,
                            200, content if recognized else "", novel, eng if recognized else 0, completed)


def test_summary_by_hand():
    log = [_ev("a", 0, 600, novel=True, completed=True), _ev("a", 13, 600, content="music:g02:c01:i2"),
           _ev("b", 1, 120), _ev("b", 2, 0, recognized=False)]
    s = summarize(log, 2, users=["a", "b", "c"])
    assert s.daily_listening_min == pytest.approx(1320 / 60 / (3 * 14))
    assert s.discovery_rate == pytest.approx(1 / 3)
    assert s.retention == pytest.approx(1 / 3)
    assert s.monthly_active == pytest.approx(2 / 3)
    assert s.genre_exploration == pytest.approx(3 / 3)
    assert s.episode_completion == pytest.approx(1 / 3)
    samples = user_samples(log, 2, ["a", "b", "c"])
    assert samples["daily_listening_min"].tolist() == pytest.approx([1200 / 60 / 14, 120 / 60 / 14, 0.0])
    assert samples["discovery_rate"].tolist() == [0.5, 0.0, 0.0]
    # pooled sample means agree with the summary when every user weighs the same
    assert samples["daily_listening_min"].mean() == pytest.approx(s.daily_listening_min)


def test_weekly_series_and_prediction(small_log, small_trace):
    goals = decompose(load_goal_spec("builtin:engagement"))
    users = sorted({ev.user_id for ev in small_log})
    series = weekly_series(small_log, goals, 3, users)
    assert set(series) == {"daily_listening_min", "discovery_rate", "active_users", "gai"}
    assert all(0.0 <= x <= 1.0 for x in series["active_users"])
    space = StateSpace()
    hidden = label_hidden(small_log, space, small_trace.latent)
    scores = goal_prediction_scores(small_log, fit(small_log, hidden, space), hidden)
    assert set(scores) == {"gar", "precision", "recall", "f1_star"}
    assert scores["f1_star"] >= 2 * scores["precision"] * scores["recall"] / (scores["precision"] + scores["recall"])
    x = integration_inputs(small_log, 0.5)
    assert 0.0 <= x.cost_efficiency <= 1.0 and 0.0 <= x.performance <= 1.0
