import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from catbench.domain import ACTIONS, Action, Domain
from catbench.errors import ConvergenceError
from catbench.mdp import (
    DomainMismatch, MdpSpec, NoActionAnnotations, Policy, bellman_q, estimate_mdp, policy_value,
    state_labels, value_iteration,
)
from catbench.pattern import StateSpace, label_hidden
from catbench.synth import UniformRandomPolicy, simulate_with_trace

from conftest import make_config


def random_mdp(n_states, seed, gamma=0.9, n_actions=len(ACTIONS)):
    rng = np.random.default_rng(seed)
    p = rng.random((n_states, n_actions, n_states)) ** 3
    p /= p.sum(axis=2, keepdims=True)
    u = rng.random((n_states, n_actions))
    return MdpSpec(tuple(f"s{i}" for i in range(n_states)), ACTIONS[:n_actions], p, u, gamma)


def policy_iteration(p, u, gamma):
    """Howard policy iteration with exact linear-solve evaluation."""
    n_s = p.shape[0]
    pi = np.zeros(n_s, dtype=int)
    rows = np.arange(n_s)
    while True:
        v = np.linalg.solve(np.eye(n_s) - gamma * p[rows, pi], u[rows, pi])
        q = u + gamma * np.einsum("sat,t->sa", p, v)
        better = q.argmax(axis=1)
        keep = q[rows, pi] >= q[rows, better] - 1e-12
        new = np.where(keep, pi, better)
        if (new == pi).all():
            return v, pi
        pi = new


def test_single_state_analytic():
    for gamma in (0.0, 0.5, 0.9, 0.99):
        mdp = MdpSpec(("only",), (Action.EXPLORE_NEW,), np.ones((1, 1, 1)), np.ones((1, 1)), gamma)
        policy = value_iteration(mdp, tol=1e-12, max_iters=100_000)
        assert policy.values["only"] == pytest.approx(1.0 / (1.0 - gamma), abs=1e-9)


def test_matches_policy_iteration_oracle():
    mdp = random_mdp(100, seed=11)
    policy = value_iteration(mdp, tol=1e-10)
    v_star, pi = policy_iteration(mdp.transition, mdp.reward, mdp.gamma)
    got = np.array([policy.values[s] for s in mdp.states])
    assert np.max(np.abs(got - v_star)) <= 1e-6
    assert [policy.action_of[s] for s in mdp.states] == [mdp.actions[a] for a in pi]


@given(st.integers(1, 30), st.integers(0, 10**6), st.floats(0.0, 0.95))
def test_residuals_non_increasing(n, seed, gamma):
    policy = value_iteration(random_mdp(n, seed, gamma), tol=1e-9)
    r = policy.residuals
    assert all(b <= a for a, b in zip(r, r[1:]))
    assert r[-1] < 1e-9


@given(st.integers(1, 20), st.integers(0, 10**6))
def test_greedy_values_are_a_fixed_point(n, seed):
    mdp = random_mdp(n, seed)
    policy = value_iteration(mdp, tol=1e-11)
    v = np.array([policy.values[s] for s in mdp.states])
    assert np.max(np.abs(bellman_q(mdp, v).max(axis=1) - v)) < 1e-9
    evaluated = policy_value(mdp, policy)
    assert max(abs(evaluated[s] - policy.values[s]) for s in mdp.states) < 1e-8


def test_ties_go_to_first_declared_action():
    mdp = MdpSpec(("a", "b"), ACTIONS, np.full((2, 4, 2), 0.5), np.ones((2, 4)), 0.5)
    policy = value_iteration(mdp)
    assert set(policy.action_of.values()) == {ACTIONS[0]}


def test_convergence_error():
    with pytest.raises(ConvergenceError) as exc:
        value_iteration(random_mdp(5, 0, 0.99), tol=1e-12, max_iters=3)
    assert exc.value.iterations == 3


def test_spec_validation():
    good = random_mdp(3, 1)
    with pytest.raises(ValueError, match="sum to 1"):
        MdpSpec(good.states, good.actions, good.transition * 2, good.reward)
    with pytest.raises(ValueError, match="gamma"):
        MdpSpec(good.states, good.actions, good.transition, good.reward, 1.0)
    with pytest.raises(ValueError, match="shape"):
        MdpSpec(good.states, good.actions, good.transition[:2], good.reward)
    with pytest.raises(ValueError, match="goal"):
        MdpSpec(good.states, good.actions, good.transition, good.reward, 0.9, ("engagement",), "joy")
    assert MdpSpec(**{**good.__dict__}).to_dict()["gamma"] == good.gamma


@pytest.fixture(scope="module")
def exploration():
    tr = simulate_with_trace(make_config(n_users=80, duration_weeks=4), UniformRandomPolicy())
    space = StateSpace()
    return tr.events, label_hidden(tr.events, space, tr.latent), space


def test_estimate_mdp_shapes_and_normalization(exploration):
    log, hidden, space = exploration
    mdp = estimate_mdp(log, hidden, space)
    assert mdp.states == state_labels([Domain.MUSIC, Domain.PODCAST, Domain.AUDIOBOOK], 4)
    assert mdp.transition.shape == (12, 4, 12)
    assert np.allclose(mdp.transition.sum(axis=2), 1.0)
    assert mdp.reward.max() == pytest.approx(1.0)
    assert (mdp.utility >= 0).all() and (mdp.utility <= 1).all()
    policy = value_iteration(mdp)
    policy.check(list(Domain))
    assert set(policy.action_of) == set(mdp.states)


def test_estimate_mdp_counts_by_hand():
    from catbench.domain import CommandType, InteractionEvent

    def e(ts, sid, action, eng):
        return InteractionEvent(ts, "u", sid, Domain.MUSIC, CommandType.PLAY_SIMILAR, True, 0, "c", False, eng,
                                False, action)

    log = [e(0, "s1", Action.EXPLOIT_SIMILAR, 100), e(86_400, "s2", Action.EXPLORE_NEW, 700),
           e(2 * 86_400, "s3", Action.EXPLORE_NEW, 300)]
    space = StateSpace()
    mdp = estimate_mdp(log, [1, 2, 2], space, domains=[Domain.MUSIC], smoothing=0.0, goal="engaged_session")
    ex = ACTIONS.index(Action.EXPLORE_NEW)
    # h1 -explore-> h2 once, h2 -explore-> h2 once
    assert mdp.transition[0, ex, 1] == 1.0 and mdp.transition[1, ex, 1] == 1.0
    assert mdp.utility[0, ex, 0] == 1.0 and mdp.utility[1, ex, 0] == pytest.approx(300 / 700)
    assert mdp.reward[0, ex] == 1.0 and mdp.reward[1, ex] == 0.0
    # unobserved rows are uniform and unobserved utilities take the observed mean
    assert np.allclose(mdp.transition[3, 0], 0.25)
    assert mdp.utility[3, 0, 0] == pytest.approx((1.0 + 300 / 700) / 2)


def test_estimate_mdp_errors(exploration):
    log, hidden, space = exploration
    with pytest.raises(NoActionAnnotations):
        estimate_mdp([], [], space)
    with pytest.raises(NoActionAnnotations):
        estimate_mdp([log[0]._replace(action=None)] + log[1:], hidden, space)
    with pytest.raises(NoActionAnnotations, match="consecutive"):
        first = [ev for ev in log if ev.session_id == log[0].session_id]
        estimate_mdp(first, hidden[:len(first)], space)


def test_policy_roundtrip_retarget_and_check(exploration):
    log, hidden, space = exploration
    policy = value_iteration(estimate_mdp(log, hidden, space, domains=[Domain.MUSIC]), tol=1e-6)
    back = Policy.from_dict(policy.to_dict())
    assert back == policy
    with pytest.raises(DomainMismatch):
        policy.check([Domain.PODCAST])
    moved = policy.retarget(Domain.MUSIC, Domain.PODCAST)
    moved.check([Domain.PODCAST])
    for k in range(1, 5):
        assert moved.action_of[f"podcast:h{k}"] == policy.action_of[f"music:h{k}"]
    assert moved.choose(0.99, Domain.PODCAST, 0.0) == policy.action_of["music:h4"]
    assert moved.choose(0.0, Domain.PODCAST, 0.0) == policy.action_of["music:h1"]
