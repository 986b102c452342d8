"""Randomized controlled trial: static baseline arm against the optimized arm.

Both arms of a scenario share its seed, so every user sees the same random
draws in both; any difference between the arms comes from the policy alone.
The optimized arm learns its policy by value iteration on an exploration run
and is then re-simulated with that policy.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from . import rng as rngmod
from .domain import DAYS_PER_WEEK, DOMAINS, Domain, InteractionEvent, ScenarioConfig, scenario_problems
from .errors import CatBenchError, MetricError, ValidationError
from .features import content_parts
from .goals import DecomposedGoals, GoalSpec, criterion_scores, decompose, evaluate_criteria, load_goal_spec
from .mdp import Policy, estimate_mdp, value_iteration
from .metrics import (
    BaselineAssessment,
    IntegrationInputs,
    baseline_score,
    gai,
    gar,
    integration_score,
    modified_f1,
)
from .pattern import ENGAGED, PatternModel, StateSpace, fit, goal_given_task, label_hidden, task_label
from .stats import DEFAULT_RESAMPLES, EffectSizeReport, bootstrap_ci, bootstrap_ratio_ci, cohens_d
from .synth import BASELINE_POLICY, SimulationResult, UniformRandomPolicy, simulate_with_trace, spawn_population

METRICS = (
    "daily_listening_min",
    "discovery_rate",
    "retention",
    "episode_completion",
    "monthly_active",
    "genre_exploration",
)
ARMS = ("control", "cat")
# play-weighted metrics and the per-user tally holding their numerator
RATE_FIELDS = {"discovery_rate": "novel", "episode_completion": "completed", "genre_exploration": "new_genre"}
MONTH_WEEKS = 4


class ArmMismatch(CatBenchError):
    code = "arm-mismatch"


@dataclass(frozen=True)
class EngagementSummary:
    daily_listening_min: float
    discovery_rate: float
    retention: float
    episode_completion: float
    monthly_active: float
    genre_exploration: float
    n_users: int = 0

    def value(self, metric: str) -> float:
        return getattr(self, metric)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> EngagementSummary:
        return cls(**d)


@dataclass
class _Tally:
    seconds: int = 0
    plays: int = 0
    novel: int = 0
    completed: int = 0
    new_genre: int = 0
    last_week: int = -1
    genres: set = field(default_factory=set)


def _tally_users(log: Sequence[InteractionEvent]) -> dict[str, _Tally]:
    out: dict[str, _Tally] = defaultdict(_Tally)
    for ev in log:
        t = out[ev.user_id]
        t.seconds += ev.engagement_s
        t.last_week = max(t.last_week, ev.week)
        if ev.recognized:
            t.plays += 1
            t.novel += ev.novel_content
            t.completed += ev.completed
            genre = content_parts(ev.content_id)[0]
            if genre not in t.genres:
                t.genres.add(genre)
                t.new_genre += 1
    return out


def summarize(
    log: Sequence[InteractionEvent], n_weeks: int | None = None, users: Sequence[str] | None = None
) -> EngagementSummary:
    """Engagement summary over ``users`` (default: everyone present in the log).

    Rates over plays pool every recognized event; retention means activity in
    the final week and monthly activity means activity in the final four.
    Users who never appear count as inactive with zero listening.
    """
    if not log:
        raise MetricError("empty-log")
    n_weeks = n_weeks or max(ev.week for ev in log) + 1
    tallies = _tally_users(log)
    return _summary_of(tallies, list(users) if users is not None else sorted(tallies), n_weeks)


def _summary_of(tallies: Mapping[str, _Tally], population: Sequence[str], n_weeks: int) -> EngagementSummary:
    if not population:
        raise MetricError("empty-log", "no users to summarize")
    rows = [tallies.get(u, _Tally()) for u in population]
    plays = sum(t.plays for t in rows)
    n = len(rows)
    return EngagementSummary(
        daily_listening_min=sum(t.seconds for t in rows) / 60.0 / (n * n_weeks * DAYS_PER_WEEK),
        discovery_rate=sum(t.novel for t in rows) / plays if plays else 0.0,
        retention=sum(t.last_week >= n_weeks - 1 for t in rows) / n,
        episode_completion=sum(t.completed for t in rows) / plays if plays else 0.0,
        monthly_active=sum(t.last_week >= max(0, n_weeks - MONTH_WEEKS) for t in rows) / n,
        genre_exploration=sum(t.new_genre for t in rows) / plays if plays else 0.0,
        n_users=n,
    )


def user_samples(
    log: Sequence[InteractionEvent], n_weeks: int, users: Sequence[str]
) -> dict[str, np.ndarray]:
    """One value per user for each tracked metric; rates are 0 for users without plays."""
    return _samples_of(_tally_users(log), users, n_weeks)


def _samples_of(tallies: Mapping[str, _Tally], users: Sequence[str], n_weeks: int) -> dict[str, np.ndarray]:
    rows = [tallies.get(u, _Tally()) for u in users]
    days = n_weeks * DAYS_PER_WEEK

    def rate(num: str) -> np.ndarray:
        return np.array([getattr(t, num) / t.plays if t.plays else 0.0 for t in rows])

    return {
        "daily_listening_min": np.array([t.seconds / 60.0 / days for t in rows]),
        "discovery_rate": rate("novel"),
        "retention": np.array([float(t.last_week >= n_weeks - 1) for t in rows]),
        "episode_completion": rate("completed"),
        "monthly_active": np.array([float(t.last_week >= max(0, n_weeks - MONTH_WEEKS)) for t in rows]),
        "genre_exploration": rate("new_genre"),
    }


def weekly_series(
    log: Sequence[InteractionEvent], goals: DecomposedGoals, n_weeks: int, users: Sequence[str]
) -> dict[str, list[float | None]]:
    """Metric-versus-week series, including the weekly alignment index."""
    by_week: dict[int, list[InteractionEvent]] = defaultdict(list)
    for ev in log:
        by_week[ev.week].append(ev)
    out: dict[str, list[float | None]] = {
        "daily_listening_min": [], "discovery_rate": [], "active_users": [], "gai": []
    }
    n = len(users)
    for w in range(n_weeks):
        evs = by_week.get(w, [])
        plays = [ev for ev in evs if ev.recognized]
        out["daily_listening_min"].append(sum(ev.engagement_s for ev in evs) / 60.0 / (n * DAYS_PER_WEEK))
        out["discovery_rate"].append(sum(ev.novel_content for ev in plays) / len(plays) if plays else 0.0)
        out["active_users"].append(len({ev.user_id for ev in evs}) / n)
        out["gai"].append(_safe_gai(goals, evs, 1, w, users))
    return out


def _safe_gai(goals, log, n_weeks, start_week, users) -> float | None:
    if not log:
        return None
    try:
        return gai(evaluate_criteria(goals, log, n_weeks=n_weeks, population=users, start_week=start_week))
    except MetricError:
        return None


def session_goal_predictions(
    log: Sequence[InteractionEvent], model: PatternModel
) -> tuple[dict[str, list[float]], dict[str, list[bool]]]:
    """Per-user predicted engagement probability and actual outcome, one pair per session.

    The prediction is ``P(engaged | t)`` for the task state of the session's
    first event.
    """
    first: dict[str, InteractionEvent] = {}
    totals: dict[str, int] = defaultdict(int)
    for ev in log:
        cur = first.get(ev.session_id)
        if cur is None or ev.timestamp < cur.timestamp:
            first[ev.session_id] = ev
        totals[ev.session_id] += ev.engagement_s
    cache: dict[str, float] = {}
    predicted: dict[str, list[float]] = defaultdict(list)
    actual: dict[str, list[bool]] = defaultdict(list)
    threshold = model.space.engaged_threshold_s
    for sid in sorted(first):
        ev = first[sid]
        label = task_label(ev.command_type, ev.recognized)
        if label not in cache:
            cache[label] = goal_given_task(model, label)[ENGAGED]
        predicted[ev.user_id].append(cache[label])
        actual[ev.user_id].append(totals[sid] >= threshold)
    return predicted, actual


def goal_prediction_scores(
    log: Sequence[InteractionEvent], model: PatternModel, hidden: Sequence[int]
) -> dict[str, float | None]:
    """GAR over per-user engaged-session fractions, and F1* of session-level calls."""
    predicted, actual = session_goal_predictions(log, model)
    users = sorted(actual)
    act = [sum(actual[u]) / len(actual[u]) for u in users]
    pred = [math.fsum(predicted[u]) / len(predicted[u]) for u in users]
    try:
        gar_value: float | None = gar(act, pred)
    except MetricError:
        gar_value = None
    tp = fp = fn = 0
    for u in users:
        for p, a in zip(predicted[u], actual[u]):
            call = p >= 0.5
            tp += call and a
            fp += call and not a
            fn += (not call) and a
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    k = model.space.n_hidden
    counts = np.bincount(np.asarray(hidden, dtype=np.int64) - 1, minlength=k)
    dist = (counts / counts.sum()).tolist() if counts.sum() else [1.0 / k] * k
    try:
        f1_star: float | None = modified_f1(precision, recall, dist)
    except MetricError:
        f1_star = None
    return {"gar": gar_value, "precision": precision, "recall": recall, "f1_star": f1_star}


def integration_inputs(log: Sequence[InteractionEvent], quality: float) -> IntegrationInputs:
    """Quality is the alignment index; recognition rate and latency headroom fill the rest."""
    n = len(log)
    recognition = sum(ev.recognized for ev in log) / n
    latency = sum(ev.latency_ms for ev in log) / n
    return IntegrationInputs(quality, recognition, min(1.0, max(0.0, 1.0 - latency / 1000.0)))


@dataclass
class ArmOutcome:
    summary: EngagementSummary
    by_domain: dict[str, EngagementSummary]
    intervals: dict[str, tuple[float, float]]
    domain_intervals: dict[str, dict[str, tuple[float, float]]]
    series: dict[str, list[float | None]]
    gai: float | None
    integration: float | None
    prediction: dict[str, float | None]
    n_events: int

    def to_dict(self) -> dict:
        return {
            "summary": self.summary.to_dict(),
            "by_domain": {k: v.to_dict() for k, v in self.by_domain.items()},
            "intervals": {k: list(v) for k, v in self.intervals.items()},
            "domain_intervals": {
                dom: {k: list(v) for k, v in iv.items()} for dom, iv in self.domain_intervals.items()
            },
            "series": self.series,
            "gai": self.gai,
            "integration": self.integration,
            "prediction": self.prediction,
            "n_events": self.n_events,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> ArmOutcome:
        return cls(
            summary=EngagementSummary.from_dict(d["summary"]),
            by_domain={k: EngagementSummary.from_dict(v) for k, v in d["by_domain"].items()},
            intervals={k: (v[0], v[1]) for k, v in d["intervals"].items()},
            domain_intervals={
                dom: {k: (v[0], v[1]) for k, v in iv.items()} for dom, iv in d["domain_intervals"].items()
            },
            series={k: list(v) for k, v in d["series"].items()},
            gai=d["gai"],
            integration=d["integration"],
            prediction=dict(d["prediction"]),
            n_events=int(d["n_events"]),
        )


@dataclass
class ScenarioOutcome:
    scenario_id: str
    n_weeks: int
    arms: dict[str, ArmOutcome]
    effects: dict[str, EffectSizeReport]
    baseline_score: float
    policy: dict
    samples: dict[str, dict[str, np.ndarray]] = field(default_factory=dict, repr=False)

    @property
    def improvements(self) -> dict[str, float | None]:
        return improvements(self.arms["control"].summary, self.arms["cat"].summary)

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "n_weeks": self.n_weeks,
            "arms": {a: o.to_dict() for a, o in self.arms.items()},
            "effects": {m: e.to_dict() for m, e in self.effects.items()},
            "improvements": self.improvements,
            "baseline_score": self.baseline_score,
            "policy": self.policy,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> ScenarioOutcome:
        return cls(
            scenario_id=d["scenario_id"],
            n_weeks=int(d["n_weeks"]),
            arms={a: ArmOutcome.from_dict(o) for a, o in d["arms"].items()},
            effects={m: EffectSizeReport.from_dict(e) for m, e in d["effects"].items()},
            baseline_score=float(d["baseline_score"]),
            policy=dict(d["policy"]),
        )


def improvement(baseline: float, cat: float) -> float | None:
    if baseline == 0.0:
        return 0.0 if cat == 0.0 else None
    return (cat - baseline) / baseline * 100.0


def improvements(control: EngagementSummary, cat: EngagementSummary) -> dict[str, float | None]:
    return {m: improvement(control.value(m), cat.value(m)) for m in METRICS}


@dataclass
class RctReport:
    scenarios: list[ScenarioOutcome]
    pooled_effects: dict[str, EffectSizeReport]
    manifest: dict

    def to_dict(self) -> dict:
        return {
            "manifest": self.manifest,
            "scenarios": [s.to_dict() for s in self.scenarios],
            "pooled_effects": {m: e.to_dict() for m, e in self.pooled_effects.items()},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> RctReport:
        return cls(
            scenarios=[ScenarioOutcome.from_dict(s) for s in d["scenarios"]],
            pooled_effects={m: EffectSizeReport.from_dict(e) for m, e in d["pooled_effects"].items()},
            manifest=dict(d["manifest"]),
        )


def pair_arms(scenarios: Sequence[ScenarioConfig]) -> list[tuple[ScenarioConfig, ScenarioConfig]]:
    """Match control and cat configs by scenario id, in id order.

    Paired configs must agree on everything except the arm, so that the two
    arms really share their random numbers.
    """
    by_id: dict[str, dict[str, list[ScenarioConfig]]] = defaultdict(lambda: defaultdict(list))
    for cfg in scenarios:
        by_id[cfg.scenario_id][cfg.arm].append(cfg)
    pairs = []
    for sid in sorted(by_id):
        arms = by_id[sid]
        if len(arms["control"]) != 1 or len(arms["cat"]) != 1:
            raise ArmMismatch(
                f"scenario {sid!r} needs exactly one control and one cat config, "
                f"got {len(arms['control'])} and {len(arms['cat'])}"
            )
        ctl, cat = arms["control"][0], arms["cat"][0]
        if ctl.with_arm("cat") != cat:
            raise ArmMismatch(f"scenario {sid!r}: control and cat configs differ beyond the arm")
        pairs.append((ctl, cat))
    return pairs


def _primary_domains(config: ScenarioConfig) -> dict[str, str]:
    return {
        p.user_id: max(p.domain_affinity.items(), key=lambda kv: kv[1])[0].value
        for p in spawn_population(config)
    }


def train_cat_policy(config: ScenarioConfig, *, gamma: float = 0.9, k: int = 4) -> tuple[Policy, PatternModel, SimulationResult]:
    """Fit the pattern model and solve the MDP on an exploration run drawn from a derived seed."""
    explore = replace(config, arm="cat", seed=rngmod.derive_seed(config.seed, "explore"))
    trace = simulate_with_trace(explore, UniformRandomPolicy())
    space = StateSpace(n_hidden=k)
    hidden = label_hidden(trace.events, space, trace.latent)
    model = fit(trace.events, hidden, space)
    live = [d for d in DOMAINS if config.domain_mix.get(d, 0.0) > 0.0]
    policy = value_iteration(estimate_mdp(trace.events, hidden, space, gamma=gamma, domains=live))
    return policy, model, trace


def _arm_outcome(
    result: SimulationResult, goals: DecomposedGoals, model: PatternModel, n_weeks: int,
    users: list[str], primary: dict[str, str], seed: int, resamples: int, level: float,
) -> tuple[ArmOutcome, dict[str, np.ndarray]]:
    log = result.events
    tallies = _tally_users(log)
    samples = _samples_of(tallies, users, n_weeks)

    def intervals_of(cohort: list[str], tag: str) -> dict[str, tuple[float, float]]:
        if len(cohort) < 2:
            return {}
        sample = _samples_of(tallies, cohort, n_weeks)
        rows = [tallies.get(u, _Tally()) for u in cohort]
        plays = np.array([t.plays for t in rows], dtype=float)
        out = {}
        for m in METRICS:
            s = rngmod.derive_seed(seed, "interval", tag, m)
            if m in RATE_FIELDS:
                # play-weighted rate: resample users, keep the pooled ratio
                num = np.array([getattr(t, RATE_FIELDS[m]) for t in rows], dtype=float)
                out[m] = bootstrap_ratio_ci(num, plays, level, s, resamples)
            else:
                out[m] = bootstrap_ci(sample[m], "mean", level, s, resamples)
        return out

    by_domain, domain_intervals = {}, {}
    for dom in DOMAINS:
        cohort = [u for u in users if primary[u] == dom.value]
        if cohort:
            by_domain[dom.value] = _summary_of(tallies, cohort, n_weeks)
            domain_intervals[dom.value] = intervals_of(cohort, dom.value)
    overall = _safe_gai(goals, log, n_weeks, 0, users)
    integ = integration_score(integration_inputs(log, overall)) if overall is not None else None
    hidden = label_hidden(log, model.space, result.latent)
    outcome = ArmOutcome(
        summary=_summary_of(tallies, users, n_weeks),
        by_domain=by_domain,
        intervals=intervals_of(users, "all"),
        domain_intervals=domain_intervals,
        series=weekly_series(log, goals, n_weeks, users),
        gai=overall,
        integration=integ,
        prediction=goal_prediction_scores(log, model, hidden),
        n_events=len(log),
    )
    return outcome, samples


def run_pair(
    control: ScenarioConfig, cat: ScenarioConfig, goal_spec: GoalSpec, *,
    cat_policy=None, resamples: int = DEFAULT_RESAMPLES, level: float = 0.95, gamma: float = 0.9,
) -> ScenarioOutcome:
    goals = decompose(goal_spec)
    n_weeks = control.duration_weeks
    users = [p.user_id for p in spawn_population(control)]
    primary = _primary_domains(control)

    ctl = simulate_with_trace(control, BASELINE_POLICY)
    # how the static system does against the decomposed criteria
    scores = criterion_scores(goals, ctl.events, n_weeks=n_weeks, population=users)
    base = baseline_score(BaselineAssessment(tuple(scores), goals.weights))

    policy, model, _ = train_cat_policy(cat, gamma=gamma)
    chosen = cat_policy if cat_policy is not None else policy
    treated = simulate_with_trace(cat, chosen)

    arms, samples = {}, {}
    for arm, result in (("control", ctl), ("cat", treated)):
        arms[arm], samples[arm] = _arm_outcome(
            result, goals, model, n_weeks, users, primary, rngmod.derive_seed(control.seed, arm), resamples, level
        )
    effects = {
        m: cohens_d(
            samples["cat"][m], samples["control"][m], level=level,
            seed=rngmod.derive_seed(control.seed, "effect", m), n_resamples=resamples,
        )
        for m in METRICS
    }
    policy_doc = chosen.to_dict() if hasattr(chosen, "to_dict") else {"static": chosen.action.value}
    return ScenarioOutcome(control.scenario_id, n_weeks, arms, effects, base, policy_doc, samples)


def run_rct(
    scenarios: Sequence[ScenarioConfig],
    *,
    base_dir: Path | None = None,
    goal_specs: Mapping[str, GoalSpec] | None = None,
    cat_policy=None,
    resamples: int = DEFAULT_RESAMPLES,
    level: float = 0.95,
    gamma: float = 0.9,
    manifest: Mapping | None = None,
) -> RctReport:
    """Run every paired scenario and assemble the report in scenario-id order.

    ``cat_policy`` replaces the learned policy in the cat arm; passing the
    baseline policy there turns the trial into a null check.
    """
    for s in scenarios:
        problems = scenario_problems(s, base_dir)
        if goal_specs and s.goal_spec_path in goal_specs:
            problems = [p for p in problems if p[0] != "missing-goal-spec"]
        if problems:
            raise ValidationError(problems)
    pairs = pair_arms(scenarios)
    outcomes = []
    for ctl, cat in pairs:
        ref = cat.goal_spec_path
        spec = goal_specs[ref] if goal_specs and ref in goal_specs else load_goal_spec(ref, base_dir)
        outcomes.append(run_pair(ctl, cat, spec, cat_policy=cat_policy, resamples=resamples, level=level, gamma=gamma))
    pooled = {}
    for m in METRICS:
        a = np.concatenate([o.samples["cat"][m] for o in outcomes])
        b = np.concatenate([o.samples["control"][m] for o in outcomes])
        pooled[m] = cohens_d(a, b, level=level, seed=rngmod.derive_seed(pairs[0][0].seed, "pooled", m), n_resamples=resamples)
    doc = {
        "tool_version": __version__,
        "resamples": resamples,
        "level": level,
        "gamma": gamma,
        "scenarios": [c.to_dict() for pair in pairs for c in pair],
        "cat_policy_override": None if cat_policy is None else
        (cat_policy.to_dict() if hasattr(cat_policy, "to_dict") else {"static": cat_policy.action.value}),
    }
    doc.update(manifest or {})
    return RctReport(outcomes, pooled, doc)


def effect_table(report: RctReport) -> list[dict]:
    """One row per tracked metric: effect size, p-value, sample size, interval."""
    rows = []
    for m in METRICS:
        e = report.pooled_effects[m]
        rows.append({
            "metric": m, "d": e.d, "p_value": e.p_value, "n": e.n1 + e.n2,
            "ci_low": e.ci_low, "ci_high": e.ci_high,
        })
    return rows
