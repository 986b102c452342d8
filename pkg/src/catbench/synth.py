"""Deterministic generator of synthetic interaction logs.

Each user carries a latent satisfaction ``s`` in [0, 1] that moves once per
simulated day::

    s_t = clamp(alpha * s_{t-1} + (1 - alpha) * drive(a_t) + sigma * eps_t)

where ``a_t`` is the recommendation action the policy issued that morning and
``eps_t`` is standard normal. Activity, session budget, novelty and completion
probabilities all rise with ``s``; weekly churn falls with it.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from . import rng as rngmod
from .domain import (
    ACTIONS,
    AGE_GROUPS,
    DAYS_PER_WEEK,
    DOMAINS,
    SECONDS_PER_DAY,
    Action,
    CommandType,
    Domain,
    GeneratorParams,
    InteractionEvent,
    ScenarioConfig,
    UserProfile,
)
from .errors import CatBenchError

N_GENRES = 12
N_CREATORS = 60
N_FAVORITE_GENRES = 3
N_FAVORITE_CREATORS = 5
MAX_EVENTS_PER_SESSION = 40
_SLOT_WIDTH = 11

# per-action shaping of the day's events
NOVELTY_MULT = {
    Action.EXPLOIT_SIMILAR: 1.0,
    Action.EXPLORE_NEW: 3.0,
    Action.RESUME_CONTENT: 1.0,
    Action.SWITCH_DOMAIN: 2.0,
}
COMPLETION_MULT = {
    Action.EXPLOIT_SIMILAR: 1.0,
    Action.EXPLORE_NEW: 0.85,
    Action.RESUME_CONTENT: 1.25,
    Action.SWITCH_DOMAIN: 0.9,
}
LISTEN_MULT = {
    Action.EXPLOIT_SIMILAR: 1.0,
    Action.EXPLORE_NEW: 0.85,
    Action.RESUME_CONTENT: 1.05,
    Action.SWITCH_DOMAIN: 0.8,
}
FIRST_COMMAND = {
    Action.EXPLOIT_SIMILAR: CommandType.PLAY_SIMILAR,
    Action.EXPLORE_NEW: CommandType.EXPLORE_NEW,
    Action.RESUME_CONTENT: CommandType.RESUME,
    Action.SWITCH_DOMAIN: CommandType.PLAY_SPECIFIC,
}
FOLLOW_COMMAND = {
    Action.EXPLOIT_SIMILAR: CommandType.PLAY_SIMILAR,
    Action.EXPLORE_NEW: CommandType.EXPLORE_NEW,
    Action.RESUME_CONTENT: CommandType.PLAY_SIMILAR,
    Action.SWITCH_DOMAIN: CommandType.PLAY_SIMILAR,
}


class PolicyActionMismatch(CatBenchError):
    code = "policy-action-mismatch"


class RecommendationPolicy(Protocol):
    actions: tuple[Action, ...]

    def choose(self, satisfaction: float, domain: Domain, u: float) -> Action: ...


@dataclass(frozen=True)
class StaticPolicy:
    """Always issue the same action; the control arm uses exploit_similar."""

    action: Action = Action.EXPLOIT_SIMILAR

    @property
    def actions(self) -> tuple[Action, ...]:
        return (self.action,)

    def choose(self, satisfaction: float, domain: Domain, u: float) -> Action:
        return self.action

    def check(self, domains: Sequence[Domain]) -> None:
        return None


@dataclass(frozen=True)
class UniformRandomPolicy:
    """Logging policy for collecting exploration data."""

    actions: tuple[Action, ...] = ACTIONS

    def choose(self, satisfaction: float, domain: Domain, u: float) -> Action:
        return self.actions[min(int(u * len(self.actions)), len(self.actions) - 1)]

    def check(self, domains: Sequence[Domain]) -> None:
        return None


BASELINE_POLICY = StaticPolicy(Action.EXPLOIT_SIMILAR)


@dataclass(frozen=True)
class EngagementState:
    user_id: str
    latent_satisfaction: float
    last_active_day: int
    churned: bool


@dataclass
class SimulationResult:
    events: list[InteractionEvent]
    latent: list[float]
    states: list[EngagementState]
    # daily_satisfaction[u][d] is user u's satisfaction after day d's update
    daily_satisfaction: list[list[float]]


def clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


def satisfaction_step(s: float, drive: float, alpha: float, sigma: float, eps: float) -> float:
    return clamp01(alpha * s + (1.0 - alpha) * drive + sigma * eps)


def activity_probability(s: float) -> float:
    return clamp01(0.25 + 0.7 * s)


def weekly_churn_probability(hazard: float, s: float) -> float:
    return clamp01(hazard * 2.0 * (1.0 - s))


def user_id_for(index: int) -> str:
    return f"u{index:07d}"


def spawn_population(config: ScenarioConfig) -> list[UserProfile]:
    """``n_users`` profiles; user ``i`` depends only on ``(seed, i)``."""
    live = [d for d in DOMAINS if config.domain_mix.get(d, 0.0) > 0.0]
    shares = np.array([config.domain_mix[d] for d in live])
    return [_spawn_user(config.seed, i, live, shares) for i in range(config.n_users)]


def _spawn_user(seed: int, index: int, live: list[Domain], shares: np.ndarray) -> UserProfile:
    g = rngmod.stream(seed, index, rngmod.PROFILE)
    age = AGE_GROUPS[int(g.integers(len(AGE_GROUPS)))]
    if len(live) == 1:
        affinity = {live[0]: 1.0}
    else:
        w = g.dirichlet(4.0 * len(live) * shares)
        w = w / w.sum()
        affinity = {d: float(x) for d, x in zip(live, w)}
    minutes = float(90.0 * math.exp(0.3 * g.standard_normal()))
    explore = float(g.beta(2.0, 2.0))
    age_factor = {"18-24": 1.3, "25-34": 1.1, "35-54": 0.9, "55+": 0.8}[age]
    hazard = float(min(1.0, g.uniform(0.01, 0.035) * age_factor))
    return UserProfile(
        user_id=user_id_for(index),
        age_group=age,
        domain_affinity=affinity,
        base_daily_minutes=minutes,
        exploration_propensity=explore,
        churn_hazard=hazard,
    )


def check_policy(policy, config: ScenarioConfig) -> None:
    bad = [a for a in getattr(policy, "actions", ()) if not isinstance(a, Action)]
    if bad or not getattr(policy, "actions", ()):
        raise PolicyActionMismatch(f"policy actions {bad!r} are not recommendation actions")
    check = getattr(policy, "check", None)
    if check is not None:
        live = [d for d in DOMAINS if config.domain_mix.get(d, 0.0) > 0.0]
        check(live)


def simulate(config: ScenarioConfig, policy=BASELINE_POLICY, *, workers: int = 1) -> list[InteractionEvent]:
    return simulate_with_trace(config, policy, workers=workers).events


def simulate_with_trace(
    config: ScenarioConfig, policy=BASELINE_POLICY, *, workers: int = 1
) -> SimulationResult:
    """Generate the full log, merged in ``(user_id, timestamp)`` order."""
    check_policy(policy, config)
    profiles = spawn_population(config)
    if workers <= 1 or len(profiles) < 2 * workers:
        parts = [_simulate_chunk(config, policy, profiles, 0)]
    else:
        size = math.ceil(len(profiles) / workers)
        chunks = [(profiles[i : i + size], i) for i in range(0, len(profiles), size)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_simulate_chunk, config, policy, c, off) for c, off in chunks]
            parts = [f.result() for f in futures]
    result = SimulationResult(events=[], latent=[], states=[], daily_satisfaction=[])
    for part in parts:
        result.events.extend(part.events)
        result.latent.extend(part.latent)
        result.states.extend(part.states)
        result.daily_satisfaction.extend(part.daily_satisfaction)
    return result


def _simulate_chunk(config, policy, profiles, offset) -> SimulationResult:
    out = SimulationResult(events=[], latent=[], states=[], daily_satisfaction=[])
    for j, profile in enumerate(profiles):
        _simulate_user(config, policy, profile, offset + j, out)
    return out


def _simulate_user(config: ScenarioConfig, policy, profile: UserProfile, index: int, out: SimulationResult) -> None:
    seed = config.seed
    n_days = config.n_days
    g = rngmod.stream(seed, index, rngmod.DAILY)
    eps = g.standard_normal(n_days).tolist()
    z_budget = g.standard_normal(n_days).tolist()
    u_active = g.random(n_days).tolist()
    u_domain = g.random(n_days).tolist()
    u_start = g.random(n_days).tolist()
    u_churn = g.random(config.duration_weeks).tolist()
    u_policy = rngmod.stream(seed, index, rngmod.POLICY).random(n_days).tolist()
    taste = rngmod.stream(seed, index, rngmod.TASTE)
    fav_genres = {d: taste.choice(N_GENRES, N_FAVORITE_GENRES, replace=False).tolist() for d in DOMAINS}
    fav_creators = {d: taste.choice(N_CREATORS, N_FAVORITE_CREATORS, replace=False).tolist() for d in DOMAINS}
    slots = rngmod.SlotStream(seed, index, MAX_EVENTS_PER_SESSION * _SLOT_WIDTH)

    affinity = [(d, w) for d, w in profile.domain_affinity.items() if w > 0.0]
    params = {d: config.params_for(d) for d, _ in affinity}
    current = max(affinity, key=lambda dw: dw[1])[0]
    history: dict[Domain, list[str]] = {d: [] for d, _ in affinity}
    consumed: dict[Domain, set[str]] = {d: set() for d, _ in affinity}
    explore_factor = 2.0 * profile.exploration_propensity

    s = config.initial_satisfaction
    last_active = -1
    churned = False
    trace: list[float] = []
    events = out.events
    latent = out.latent
    uid = profile.user_id

    for day in range(n_days):
        action = policy.choose(s, current, u_policy[day])
        if action is Action.SWITCH_DOMAIN and len(affinity) > 1:
            others = [(d, w) for d, w in affinity if d is not current]
            dom = _pick_weighted(others, u_domain[day])
        else:
            dom = _pick_weighted(affinity, u_domain[day])
        p = params[dom]
        s = satisfaction_step(s, p.drive[action], p.alpha, p.sigma, eps[day])
        trace.append(s)

        if u_active[day] < activity_probability(s):
            n_before = len(events)
            _emit_session(
                events, uid, day, dom, action, s, p, profile, explore_factor,
                u_start[day], z_budget[day], slots.block(day),
                history[dom], consumed[dom], fav_genres[dom], fav_creators[dom],
            )
            latent.extend([s] * (len(events) - n_before))
            current = dom
            last_active = day

        if day % DAYS_PER_WEEK == DAYS_PER_WEEK - 1:
            week = day // DAYS_PER_WEEK
            if u_churn[week] < weekly_churn_probability(profile.churn_hazard, s):
                churned = True
                break

    out.daily_satisfaction.append(trace)
    out.states.append(EngagementState(uid, s, last_active, churned))


def _pick_weighted(options: list[tuple[Domain, float]], u: float) -> Domain:
    total = sum(w for _, w in options)
    acc = 0.0
    for d, w in options:
        acc += w / total
        if u < acc:
            return d
    return options[-1][0]


def _emit_session(
    events, uid, day, dom, action, s, p: GeneratorParams, profile, explore_factor,
    u_start, z_budget, block, history, consumed, fav_genres, fav_creators,
) -> None:
    session_id = f"{uid}-d{day:04d}"
    t = day * SECONDS_PER_DAY + int(6 * 3600 + u_start * 16 * 3600)
    remaining = profile.base_daily_minutes * 60.0 * (0.3 + 1.4 * s) * math.exp(0.25 * z_budget)
    p_novel = clamp01(p.novelty_base_rate * NOVELTY_MULT[action] * explore_factor * (0.4 + 1.2 * s))
    p_complete = clamp01(p.completion_base_rate * COMPLETION_MULT[action] * (0.4 + 1.2 * s))
    listen_mult = LISTEN_MULT[action]
    keep_going = 1.0 - 1.0 / max(p.mean_session_events, 1.0)
    lat_lo = p.latency_mean_ms - math.sqrt(3.0) * p.latency_sd_ms
    lat_span = 2.0 * math.sqrt(3.0) * p.latency_sd_ms
    item_len = p.item_length_s
    prefix = dom.value
    first_cmd = FIRST_COMMAND[action]
    follow_cmd = FOLLOW_COMMAND[action]
    exploring = action is Action.EXPLORE_NEW

    for j in range(MAX_EVENTS_PER_SESSION):
        (u_recog, u_lat, u_novel, u_pick, u_genre, u_creator,
         u_complete, u_partial, u_nav, u_stop, u_item) = block[j * _SLOT_WIDTH : (j + 1) * _SLOT_WIDTH]
        if j == 0:
            cmd = first_cmd
        elif u_nav < p.navigate_rate:
            cmd = CommandType.NAVIGATE
        else:
            cmd = follow_cmd
        latency = max(0, int(round(lat_lo + lat_span * u_lat)))
        recognized = u_recog < p.base_recognition_rate
        if recognized:
            if history and (u_novel >= p_novel or cmd is CommandType.RESUME):
                if cmd is CommandType.RESUME:
                    content = history[-1]
                else:
                    content = history[int(u_pick * len(history))]
            else:
                if exploring or u_pick >= 0.85:
                    genre = int(u_genre * N_GENRES)
                else:
                    genre = fav_genres[int(u_genre * N_FAVORITE_GENRES)]
                if exploring or u_creator >= 0.6:
                    creator = int(u_creator * N_CREATORS)
                else:
                    creator = fav_creators[int(u_creator * N_FAVORITE_CREATORS)]
                item = int(u_item * 1_000_000)
                content = f"{prefix}:g{genre:02d}:c{creator:02d}:i{item:06d}"
            novel = content not in consumed
            if novel:
                consumed.add(content)
            history.append(content)
            if u_complete < p_complete:
                want = item_len
            else:
                want = item_len * min(1.0, (0.1 + 0.8 * u_partial) * listen_mult)
            if want <= remaining:
                engagement = int(round(want))
                done = want == item_len
            else:
                engagement = max(0, int(remaining))
                done = False
            remaining -= engagement
            events.append(InteractionEvent(
                t, uid, session_id, dom, cmd, True, latency, content, novel,
                engagement, done, action,
            ))
        else:
            engagement = 0
            events.append(InteractionEvent(
                t, uid, session_id, dom, cmd, False, latency, "", False, 0, False, action,
            ))
        t += engagement + latency // 1000 + 1
        if remaining <= 0 or u_stop >= keep_going:
            break
