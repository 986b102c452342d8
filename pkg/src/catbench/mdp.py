"""Finite MDP over (domain, satisfaction bucket) states with recommendation actions."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .domain import ACTIONS, DOMAINS, Action, Domain, InteractionEvent
from .errors import CatBenchError, ConvergenceError
from .pattern import StateSpace, bucket_of

UTILITY_GOALS = ("engagement", "engaged_session")
DEFAULT_GAMMA = 0.9


class NoActionAnnotations(CatBenchError):
    code = "no-action-annotations"


class DomainMismatch(CatBenchError):
    code = "domain-mismatch"


def state_label(domain: Domain, bucket: int) -> str:
    return f"{domain.value}:h{bucket}"


def state_labels(domains: Sequence[Domain], n_buckets: int) -> tuple[str, ...]:
    return tuple(state_label(d, k) for d in domains for k in range(1, n_buckets + 1))


@dataclass
class MdpSpec:
    states: tuple[str, ...]
    actions: tuple[Action, ...]
    # transition[s, a, s'] and utility[s, a, g]
    transition: np.ndarray
    utility: np.ndarray
    gamma: float = DEFAULT_GAMMA
    goals: tuple[str, ...] = ("engagement",)
    goal: str = "engagement"

    def __post_init__(self):
        n_s, n_a = len(self.states), len(self.actions)
        self.transition = np.asarray(self.transition, dtype=float)
        self.utility = np.asarray(self.utility, dtype=float)
        if self.utility.ndim == 2:
            self.utility = self.utility[:, :, None]
        if self.transition.shape != (n_s, n_a, n_s):
            raise ValueError(f"transition must have shape {(n_s, n_a, n_s)}")
        if self.utility.shape != (n_s, n_a, len(self.goals)):
            raise ValueError(f"utility must have shape {(n_s, n_a, len(self.goals))}")
        if not np.allclose(self.transition.sum(axis=2), 1.0, rtol=0, atol=1e-9):
            raise ValueError("every transition row must sum to 1")
        if (self.transition < 0).any():
            raise ValueError("transition probabilities must be non-negative")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not np.isfinite(self.utility).all():
            raise ValueError("utility must be finite")
        if self.goal not in self.goals:
            raise ValueError(f"goal {self.goal!r} not among {self.goals}")

    @property
    def reward(self) -> np.ndarray:
        """Utility slice ``U[s, a]`` for the selected goal."""
        return self.utility[:, :, self.goals.index(self.goal)]

    def to_dict(self) -> dict:
        return {
            "states": list(self.states),
            "actions": [a.value for a in self.actions],
            "transition": self.transition.tolist(),
            "utility": self.utility.tolist(),
            "gamma": self.gamma,
            "goals": list(self.goals),
            "goal": self.goal,
        }


@dataclass
class Policy:
    action_of: dict[str, Action]
    values: dict[str, float]
    gamma: float = DEFAULT_GAMMA
    goal: str = "engagement"
    iterations: int = 0
    residuals: list[float] = field(default_factory=list)

    @property
    def actions(self) -> tuple[Action, ...]:
        return tuple(a for a in ACTIONS if a in set(self.action_of.values())) or ACTIONS

    @property
    def n_buckets(self) -> int:
        """Satisfaction buckets per domain; 0 when states are not ``domain:hK`` labels."""
        tails = (s.rsplit(":h", 1)[-1] for s in self.action_of if ":h" in s)
        return max((int(t) for t in tails if t.isdigit()), default=0)

    def __post_init__(self):
        self._k = self.n_buckets

    def choose(self, satisfaction: float, domain: Domain, u: float) -> Action:
        return self.action_of[state_label(domain, bucket_of(satisfaction, self._k))]

    def check(self, domains: Sequence[Domain]) -> None:
        missing = [s for s in state_labels(domains, self._k) if s not in self.action_of]
        if missing:
            raise DomainMismatch(f"policy has no action for states {missing}")

    def retarget(self, source: Domain, target: Domain) -> Policy:
        """Copy the source domain's per-bucket actions onto the target domain."""
        self.check([source])
        action_of = dict(self.action_of)
        values = dict(self.values)
        for k in range(1, self._k + 1):
            action_of[state_label(target, k)] = self.action_of[state_label(source, k)]
            values[state_label(target, k)] = self.values.get(state_label(source, k), 0.0)
        return Policy(action_of, values, self.gamma, self.goal, self.iterations, list(self.residuals))

    def to_dict(self) -> dict:
        return {
            "action_of": {s: a.value for s, a in self.action_of.items()},
            "values": self.values,
            "gamma": self.gamma,
            "goal": self.goal,
            "iterations": self.iterations,
            "residuals": self.residuals,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Policy:
        return cls(
            action_of={s: Action(a) for s, a in d["action_of"].items()},
            values={s: float(v) for s, v in d["values"].items()},
            gamma=float(d.get("gamma", DEFAULT_GAMMA)),
            goal=str(d.get("goal", "engagement")),
            iterations=int(d.get("iterations", 0)),
            residuals=[float(r) for r in d.get("residuals", [])],
        )


def estimate_mdp(
    log: Sequence[InteractionEvent],
    hidden: Sequence[int],
    space: StateSpace,
    *,
    gamma: float = DEFAULT_GAMMA,
    goal: str = "engagement",
    smoothing: float = 1.0,
    domains: Sequence[Domain] = DOMAINS,
) -> MdpSpec:
    """Frequency-count MDP from consecutive sessions of each user.

    A transition runs from one session's state, through the action issued on
    the next session's day, to that next session's state; its reward is the
    next session's engagement. Utilities are cell-mean rewards divided by the
    largest cell mean; cells never observed take the mean over observed cells,
    so a missing action is neither favored nor penalized.
    """
    if not log:
        raise NoActionAnnotations("log is empty")
    if any(ev.action is None for ev in log):
        raise NoActionAnnotations("every event needs an action annotation")
    k = space.n_hidden
    domains = tuple(domains)
    states = state_labels(domains, k)
    s_index = {s: i for i, s in enumerate(states)}
    a_index = {a: i for i, a in enumerate(ACTIONS)}

    sessions: dict[str, list] = {}
    by_user: dict[str, list[str]] = defaultdict(list)
    for ev, h in zip(log, hidden):
        if ev.domain not in domains:
            continue
        rec = sessions.get(ev.session_id)
        if rec is None:
            rec = sessions[ev.session_id] = [ev.timestamp, s_index[state_label(ev.domain, h)], ev.action, 0]
            by_user[ev.user_id].append(ev.session_id)
        rec[3] += ev.engagement_s

    n_s, n_a = len(states), len(ACTIONS)
    counts = np.zeros((n_s, n_a, n_s))
    reward_sum = np.zeros((n_s, n_a, len(UTILITY_GOALS)))
    reward_n = np.zeros((n_s, n_a))
    for sids in by_user.values():
        seq = sorted((sessions[sid] for sid in sids), key=lambda r: r[0])
        for prev, nxt in zip(seq, seq[1:]):
            s, a, s2 = prev[1], a_index[nxt[2]], nxt[1]
            counts[s, a, s2] += 1
            reward_sum[s, a, 0] += nxt[3]
            reward_sum[s, a, 1] += nxt[3] >= space.engaged_threshold_s
            reward_n[s, a] += 1

    with np.errstate(invalid="ignore", divide="ignore"):
        # unsmoothed rows with no visits are 0/0 and become uniform below
        transition = (counts + smoothing) / (counts.sum(axis=2, keepdims=True) + smoothing * n_s)
    empty = ~np.isfinite(transition).all(axis=2)
    transition[empty] = 1.0 / n_s
    seen = reward_n > 0
    if not seen.any():
        raise NoActionAnnotations("no user has two consecutive sessions")
    with np.errstate(invalid="ignore", divide="ignore"):
        means = reward_sum / reward_n[:, :, None]
    means[~seen] = means[seen].mean(axis=0)
    top = means.max(axis=(0, 1))
    utility = np.where(top > 0, means / np.where(top > 0, top, 1.0), 0.0)
    return MdpSpec(states, ACTIONS, transition, utility, gamma, UTILITY_GOALS, goal)


def bellman_q(mdp: MdpSpec, v: np.ndarray) -> np.ndarray:
    return mdp.reward + mdp.gamma * (mdp.transition @ v)


def value_iteration(mdp: MdpSpec, tol: float = 1e-8, max_iters: int = 10_000) -> Policy:
    """Jacobi value iteration until the sup-norm change drops below ``tol``.

    Ties in the greedy policy go to the earliest declared action.
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    v = np.zeros(len(mdp.states))
    residuals = []
    for it in range(1, max_iters + 1):
        v_new = bellman_q(mdp, v).max(axis=1)
        residual = float(np.max(np.abs(v_new - v)))
        residuals.append(residual)
        v = v_new
        if residual < tol:
            break
    else:
        raise ConvergenceError(max_iters, residuals[-1])
    greedy = bellman_q(mdp, v).argmax(axis=1)
    return Policy(
        action_of={s: mdp.actions[int(a)] for s, a in zip(mdp.states, greedy)},
        values={s: float(x) for s, x in zip(mdp.states, v)},
        gamma=mdp.gamma,
        goal=mdp.goal,
        iterations=it,
        residuals=residuals,
    )


def policy_value(mdp: MdpSpec, policy: Policy, tol: float = 1e-10, max_iters: int = 1_000_000) -> dict[str, float]:
    """Evaluate a fixed policy by iterating ``V = U_pi + gamma * P_pi V``."""
    rows = np.arange(len(mdp.states))
    a_index = {a: i for i, a in enumerate(mdp.actions)}
    chosen = np.array([a_index[policy.action_of[s]] for s in mdp.states])
    u_pi = mdp.reward[rows, chosen]
    p_pi = mdp.transition[rows, chosen]
    v = np.zeros(len(mdp.states))
    for _ in range(max_iters):
        v_new = u_pi + mdp.gamma * (p_pi @ v)
        done = np.max(np.abs(v_new - v)) < tol
        v = v_new
        if done:
            break
    else:
        raise ConvergenceError(max_iters, float(np.max(np.abs(v_new - v))))
    return {s: float(x) for s, x in zip(mdp.states, v)}
