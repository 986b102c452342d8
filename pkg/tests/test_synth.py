import pytest
from hypothesis import given
from hypothesis import strategies as st

from catbench.domain import ACTIONS, Action, Domain, event_stream_check
from catbench.mdp import DomainMismatch, Policy, state_labels
from catbench.synth import (
    BASELINE_POLICY, PolicyActionMismatch, StaticPolicy, UniformRandomPolicy, activity_probability,
    satisfaction_step, simulate, simulate_with_trace, spawn_population, weekly_churn_probability,
)

from conftest import make_config


def test_deterministic(small_config, small_log):
    assert simulate(small_config) == small_log


def test_workers_do_not_change_output(small_config, small_log):
    assert simulate(small_config, workers=3) == small_log


def test_user_draws_do_not_depend_on_population_size(small_log):
    fewer = simulate(make_config(n_users=25))
    keep = {f"u{i:07d}" for i in range(25)}
    assert fewer == [ev for ev in small_log if ev.user_id in keep]


def test_log_invariants(small_config, small_trace):
    log = small_trace.events
    event_stream_check(log)
    horizon = small_config.n_days * 86_400
    assert all(0 <= ev.timestamp < horizon for ev in log)
    assert [(ev.user_id, ev.timestamp) for ev in log] == sorted((ev.user_id, ev.timestamp) for ev in log)
    assert len(small_trace.latent) == len(log)
    assert all(0.0 <= x <= 1.0 for x in small_trace.latent)
    assert all(ev.action is Action.EXPLOIT_SIMILAR for ev in log)
    assert all(ev.domain.value == ev.content_id.split(":")[0] for ev in log if ev.recognized)
    assert all(ev.content_id == "" for ev in log if not ev.recognized)
    assert len(small_trace.states) == small_config.n_users


def test_arm_label_does_not_change_draws(small_config, small_log):
    assert simulate(small_config.with_arm("cat")) == small_log


def test_single_domain_mix():
    log = simulate(make_config(domain_mix={Domain.PODCAST: 1.0}, n_users=20))
    assert log and {ev.domain for ev in log} == {Domain.PODCAST}


def test_uniform_policy_uses_every_action():
    log = simulate(make_config(n_users=20), UniformRandomPolicy())
    assert {ev.action for ev in log} == set(ACTIONS)


def test_population_profiles_valid(small_config):
    for p in spawn_population(small_config):
        assert p.problems() == []


def test_policy_checks():
    class Bogus:
        actions = ("shout",)

        def choose(self, s, d, u):
            return "shout"

    with pytest.raises(PolicyActionMismatch):
        simulate(make_config(n_users=2), Bogus())
    music_only = Policy({s: Action.EXPLORE_NEW for s in state_labels([Domain.MUSIC], 4)},
                        {s: 0.0 for s in state_labels([Domain.MUSIC], 4)})
    with pytest.raises(DomainMismatch):
        simulate(make_config(n_users=2), music_only)


def test_policies_change_outcomes(small_config, small_log):
    other = simulate(small_config, StaticPolicy(Action.EXPLORE_NEW))
    assert other != small_log
    assert BASELINE_POLICY.action is Action.EXPLOIT_SIMILAR


unit = st.floats(0.0, 1.0)


@given(unit, unit, unit, st.floats(0.0, 1.0), st.floats(-5, 5))
def test_satisfaction_step_stays_in_unit_interval(s, drive, alpha, sigma, eps):
    assert 0.0 <= satisfaction_step(s, drive, alpha, sigma, eps) <= 1.0


@given(unit, unit)
def test_satisfaction_step_fixed_points(s, drive):
    assert satisfaction_step(s, drive, 1.0, 0.0, 3.0) == s
    assert satisfaction_step(s, drive, 0.0, 0.0, 3.0) == pytest.approx(drive)


@given(unit, unit, st.floats(0.0, 0.5))
def test_activity_and_churn_monotone(s, t, hazard):
    lo, hi = sorted((s, t))
    assert activity_probability(lo) <= activity_probability(hi)
    assert weekly_churn_probability(hazard, lo) >= weekly_churn_probability(hazard, hi)
